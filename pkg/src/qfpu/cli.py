"""Command-line entry point: ``qfpu sample | correlate | oracle | report``.

A run directory holds ``config.ini`` (the full echoed config), the snapshot
archive ``samples.qfs``, ``sample_summary.json`` and, after ``correlate``,
correlation CSVs and zeta JSONs.  ``report`` reads one or more run
directories and writes comparison tables; with ``--figures`` it also renders
PNG figures next to them.

Exit codes: 0 success, 1 invalid input, 2 numerical abort, 3 failed checks
under ``report --strict``.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import estimators as est
from . import harmonic as ho
from .config import ConfigError, RunConfig, dump_config, load_config
from .model import ModeBasis
from .pimd import NumericalAbort, SampleSet, atomic_write, read_archive, run, write_archive
from .rpmd import (
    CorrelationSeries, kubo_autocorrelations, observable_from_label, t6_expansion,
    validity_horizon, zeta_coefficients,
)

log = logging.getLogger("qfpu")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_CHECKS = 0, 1, 2, 3
ARCHIVE_NAME = "samples.qfs"
SUMMARY_NAME = "sample_summary.json"
CONFIG_NAME = "config.ini"
DRIFT_LIMIT = 1e-6
N_SIGMA = 3.0


def _write_json(path, doc) -> None:
    atomic_write(path, json.dumps({"schema_version": SCHEMA_VERSION, **doc}, indent=2, sort_keys=True) + "\n")


def _write_csv(path, header, rows, comment=None) -> None:
    lines = [f"# schema_version={SCHEMA_VERSION}" + (f" {comment}" if comment else ""), ",".join(header)]
    lines += [",".join(repr(float(x)) if not isinstance(x, str) else x for x in row) for row in rows]
    atomic_write(path, "\n".join(lines) + "\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        return float(x) if math.isfinite(x) else str(float(x))
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def _tag(J) -> str:
    return "-".join(str(j) for j in J)


# sample

def summarize(samples: SampleSet, cfg: RunConfig, out: Path) -> dict:
    """Energy, equipartition and estimator summary; estimator files go under ``out/estimators``."""
    spec, T = cfg.chain, cfg.sampler.T
    N, P = spec.n_particles, samples.P
    eq = np.asarray(samples.meta["equipartition"]) / T
    eta2, eta2_se = est.mode_second_moments(samples)
    q2, q2_se = est.position_second_moments(samples)
    drift = samples.relative_drift()
    doc = {
        "N": N, "P": P, "T": T, "alpha": spec.alpha, "beta": spec.beta, "n_samples": samples.n_samples,
        "relative_drift": drift, "drift_below_1e-6": bool(drift < DRIFT_LIMIT),
        "equipartition": {"mean": float(eq.mean()), "min": float(eq.min()), "max": float(eq.max())},
        "mode_second_moments": eta2.tolist(), "mode_second_moments_stderr": eta2_se.tolist(),
        "position_second_moments": q2.tolist(), "position_second_moments_stderr": q2_se.tolist(),
        "sampler_meta": {k: v for k, v in samples.meta.items() if k != "equipartition"},
    }
    edir = out / "estimators"
    hist = {}
    for J in cfg.subsets():
        d = est.estimate_distribution(samples, J, bins=cfg.estimators.bins)
        d.to_json(edir / f"Q_{_tag(J)}.json")
        if len(J) == 1:
            d.to_csv(edir / f"Q_{_tag(J)}.csv")
            kappa = np.linspace(-cfg.estimators.kappa_max, cfg.estimators.kappa_max, cfg.estimators.n_kappa)
            est.write_structure_factor(edir / f"S_{_tag(J)}.csv", kappa, est.structure_factor(d, kappa))
        hist[_tag(J)] = {
            "symmetry": est.symmetry_diagnostic(samples, J),
            "replica": [est.replica_equivalence(samples, j) for j in J] if P > 1 else [],
        }
    doc["distributions"] = hist
    g = est.total_density(samples, bins=cfg.estimators.bins)
    g.to_csv(edir / "g.csv")
    forces = {}
    for j in cfg.force_particles():
        fs = est.force_sections(samples, j, cfg.estimators.bead_select, spec)
        rows = [(q, f) for q, f in zip(fs.q, fs.force)]
        _write_csv(edir / f"force_{j}.csv", ["q", "F"], rows, f"j={j} bead={fs.bead} envelope={fs.envelope}")
        forces[str(j)] = {"mean": fs.mean, "stderr": fs.stderr, "envelope": fs.envelope}
    doc["force_sections"] = forces
    return _jsonable(doc)


def cmd_sample(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    out = Path(args.out)
    atomic_write(out / CONFIG_NAME, dump_config(cfg))

    def progress(i, n):
        if i == n or i % max(1, n // 10) == 0:
            log.info("sample %d/%d", i, n)

    samples = run(cfg.sampler, progress=progress)
    write_archive(out / ARCHIVE_NAME, samples)
    summary = summarize(samples, cfg, out)
    _write_json(out / SUMMARY_NAME, summary)
    print(f"wrote {out / ARCHIVE_NAME} ({samples.n_samples} snapshots, drift {summary['relative_drift']:.3g})")
    return EXIT_OK


# correlate

def load_samples(cfg: RunConfig, archive) -> np.ndarray:
    head, snaps = read_archive(archive)
    for key, want in (("N", cfg.chain.n_particles), ("P", cfg.sampler.P)):
        if int(head[key]) != want:
            raise ConfigError(f"archive {archive} has {key}={head[key]} but the config says {key}={want}")
    for key, want in (("T", cfg.sampler.T), ("alpha", cfg.chain.alpha)):
        if not math.isclose(float(head[key]), want, rel_tol=1e-12, abs_tol=1e-15):
            raise ConfigError(f"archive {archive} has {key}={head[key]} but the config says {key}={want}")
    return snaps


def time_grid(cfg: RunConfig) -> np.ndarray:
    t_max = cfg.rpmd.t_max
    if t_max is None:
        t_max = validity_horizon(cfg.rpmd.epsilon, cfg.chain.n_particles)
    return np.linspace(0.0, t_max, cfg.rpmd.n_points)


def cmd_correlate(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    snaps = load_samples(cfg, args.archive)
    if args.max_samples:
        snaps = snaps[: args.max_samples]
    out = Path(args.out)
    spec, T, seed = cfg.chain, cfg.sampler.T, cfg.sampler.seed
    t = time_grid(cfg)
    obs = [observable_from_label(lab, spec.n_particles) for lab in cfg.observables()]
    series = kubo_autocorrelations(snaps, T, spec, obs, t, seed=seed, dt=cfg.rpmd.dt)
    for s in series:
        s.to_csv(out / "correlations" / f"K_{s.meta['observable']}.csv")
    for j in cfg.zeta_particles():
        z = zeta_coefficients(snaps, T, spec, j, seed=seed)
        curve = t6_expansion(z, t)
        _write_json(out / f"zeta_q{j}.json", {"zeta": _jsonable(z), "t": t.tolist(), "T6": curve.tolist()})
    print(f"wrote {len(series)} correlation series and {len(cfg.zeta_particles())} zeta tables to {out}")
    return EXIT_OK


# oracle

def cmd_oracle(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out) / "oracle"
    N, P, T = cfg.chain.n_particles, cfg.sampler.P, cfg.sampler.T
    js = np.arange(1, N + 1)
    rows = []
    for temp in cfg.oracle.temperatures:
        c = ho.mode_variance(js, temp, N, ho.CLASSICAL)
        qv = ho.mode_variance(js, temp, N, ho.QUANTUM)
        d = ho.discretized_mode_variance(js, temp, P, N)
        rows += [(temp, j, c[j - 1], qv[j - 1], np.atleast_1d(d)[j - 1]) for j in js]
    _write_csv(out / "mode_variance.csv", ["T", "j", "classical", "quantum", f"ring_polymer_P{P}"], rows)
    rows = []
    for temp in cfg.oracle.temperatures:
        c = ho.position_variance(js, temp, N, ho.CLASSICAL)
        qv = ho.position_variance(js, temp, N, ho.QUANTUM)
        rows += [(temp, j, c[j - 1], qv[j - 1]) for j in js]
    _write_csv(out / "position_variance.csv", ["T", "j", "classical", "quantum"], rows)

    q = np.linspace(cfg.oracle.q_min, cfg.oracle.q_max, cfg.oracle.n_q)
    cols = [ho.position_distribution(q[:, None], [j], T, N) for j in js]
    _write_csv(out / "position_density.csv", ["q"] + [f"Q{j}" for j in js],
               np.column_stack([q] + cols), f"T={T} quantum harmonic")
    t = np.linspace(0.0, cfg.oracle.t_max, cfg.oracle.n_t)
    kq = [ho.kubo_exact_position(j, j, T, t, N) for j in js]
    ke = [ho.kubo_exact_mode(j, j, T, t, N) for j in js]
    _write_csv(out / "kubo_position.csv", ["t"] + [f"K_q{j}" for j in js], np.column_stack([t] + kq), f"T={T}")
    _write_csv(out / "kubo_mode.csv", ["t"] + [f"K_eta{j}" for j in js], np.column_stack([t] + ke), f"T={T}")
    rows = [(j, k, ho.rp_normal_frequencies(j, k, T, P, N)) for j in js for k in range(1, P + 1)]
    _write_csv(out / "rp_frequencies.csv", ["j", "k", "Omega"], rows, f"T={T} P={P}")
    if cfg.chain.alpha > 0:
        a = cfg.chain.alpha
        rows = [(temp, ho.quartic_site_partition(temp, a), ho.quartic_site_moment(temp, a))
                for temp in cfg.oracle.temperatures]
        _write_csv(out / "quartic_site.csv", ["T", "Z", "f"], rows, f"alpha={a}")
    _write_csv(out / "wall_density.csv", ["q", "rho"], np.column_stack([q, est.wall_distribution(q, T, cfg.chain)]),
               f"T={T} alpha={cfg.chain.alpha}")
    print(f"wrote oracle curves to {out}")
    return EXIT_OK


# report

def _load_run(path: Path) -> dict:
    cfg_path = path / CONFIG_NAME
    if not cfg_path.exists():
        raise ConfigError(f"{path}: no {CONFIG_NAME}; not a run directory")
    cfg = load_config(cfg_path)
    summ_path = path / SUMMARY_NAME
    if not summ_path.exists():
        raise ConfigError(f"{path}: no {SUMMARY_NAME}; run 'qfpu sample' first")
    with open(summ_path) as fh:
        summary = json.load(fh)
    corr = {}
    for f in sorted((path / "correlations").glob("K_*.csv")):
        s = CorrelationSeries.from_csv(f)
        corr[s.meta.get("observable", f.stem[2:])] = s
    zeta = {}
    for f in sorted(path.glob("zeta_q*.json")):
        with open(f) as fh:
            zeta[int(f.stem[6:])] = json.load(fh)
    return {"path": str(path), "config": cfg, "summary": summary, "correlations": corr, "zeta": zeta}


def _check(name, passed, detail) -> dict:
    return {"check": name, "passed": bool(passed), "detail": detail}


def run_checks(r: dict) -> list[dict]:
    cfg, s = r["config"], r["summary"]
    N, P, T = cfg.chain.n_particles, s["P"], cfg.sampler.T
    checks = [_check("energy drift < 1e-6", s["relative_drift"] < DRIFT_LIMIT, f"{s['relative_drift']:.3g}")]
    if cfg.chain.is_harmonic:
        m = np.asarray(s["mode_second_moments"])
        e = np.asarray(s["mode_second_moments_stderr"])
        ref = np.atleast_1d(ho.discretized_mode_variance(np.arange(1, N + 1), T, P, N))
        z = (m - ref) / e
        checks.append(_check(f"<eta_j^2> vs ring-polymer oracle (P={P}) within 3 s.e.",
                             np.all(np.abs(z) < N_SIGMA), f"max|z|={np.max(np.abs(z)):.2f}"))
        for label, series in r["correlations"].items():
            ob = observable_from_label(label, N)
            b = ModeBasis(N)
            # exact correlator of a linear observable c.q: sum_l (c.S_l)^2 T cos(w_l t)/w_l^2
            proj = b.kernel @ ob.coefficients
            exact = np.cos(np.multiply.outer(series.times, b.frequencies)) @ (proj**2 * T / b.frequencies**2)
            zz = np.abs(series.values - exact) / np.where(series.stderr > 0, series.stderr, np.inf)
            zz[0] = 0.0 if series.stderr[0] == 0 else zz[0]
            checks.append(_check(f"K_{label}(t) vs exact harmonic within 3 s.e.", np.all(zz < N_SIGMA),
                                 f"max|z|={np.max(zz):.2f}"))
    for j, z in r["zeta"].items():
        zt = z["zeta"]
        dev = abs(zt["zeta2_mc"] - T) / zt["zeta2_mc_stderr"]
        checks.append(_check(f"zeta_2 Monte Carlo for q{j} consistent with T", dev < N_SIGMA, f"|z|={dev:.2f}"))
    for tag, d in s["distributions"].items():
        sym = d["symmetry"]
        checks.append(_check(f"mirror symmetry Q_{tag}", sym["passed"],
                             "; ".join(f"D={t['statistic']:.4f} crit={t['critical']:.4f}" for t in sym["tests"])))
        for rep in d["replica"]:
            checks.append(_check(f"replica equivalence q{rep['j']}", rep["passed"],
                                 f"D={rep['max_statistic']:.4f} crit={rep['critical']:.4f}"))
    for j, f in s["force_sections"].items():
        dev = abs(f["mean"]) / f["stderr"] if f["stderr"] > 0 else 0.0
        checks.append(_check(f"<F_{j}> = 0 within 3 s.e.", dev < N_SIGMA, f"|z|={dev:.2f}"))
    return checks


def _tables(runs: list[dict]) -> dict:
    var_rows, zeta_rows, cq_rows = [], [], []
    for r in runs:
        cfg, s = r["config"], r["summary"]
        c = cfg.center
        var_rows.append({
            "alpha": cfg.chain.alpha, "P": s["P"], "T": cfg.sampler.T, "j": c,
            "q2": s["position_second_moments"][c - 1], "q2_stderr": s["position_second_moments_stderr"][c - 1],
            "run": r["path"],
        })
        for j, z in r["zeta"].items():
            zt = z["zeta"]
            zeta_rows.append({"alpha": cfg.chain.alpha, "P": s["P"], "T": cfg.sampler.T, "j": j,
                              **{k: zt[k] for k in ("zeta0", "zeta0_stderr", "zeta2", "zeta4", "zeta4_stderr",
                                                    "zeta6", "zeta6_stderr")}})
    var_rows.sort(key=lambda x: (x["alpha"], x["P"], x["T"]))
    zeta_rows.sort(key=lambda x: (x["alpha"], x["T"], x["j"], x["P"]))
    classical = {(v["alpha"], v["T"]): v for v in var_rows if v["P"] == 1}
    for v in var_rows:
        base = classical.get((v["alpha"], v["T"]))
        if v["P"] > 1 and base is not None:
            sep = (v["q2"] - base["q2"]) / math.hypot(v["q2_stderr"], base["q2_stderr"])
            cq_rows.append({"alpha": v["alpha"], "T": v["T"], "P": v["P"], "quantum": v["q2"],
                            "classical": base["q2"], "separation_se": sep})
    return {"variance_vs_T": var_rows, "zeta": zeta_rows, "quantum_vs_classical": cq_rows}


def _format_report(runs, checks, tables) -> str:
    lines = ["=== checks ==="]
    for r, cs in zip(runs, checks):
        lines.append(f"--- {r['path']}")
        lines += [f"{'PASS' if c['passed'] else 'FAIL'}  {c['check']}  [{c['detail']}]" for c in cs]
    lines.append("=== variance_vs_T ===")
    lines.append("alpha,P,T,j,q2,q2_stderr")
    lines += [f"{v['alpha']},{v['P']},{v['T']},{v['j']},{v['q2']:.6g},{v['q2_stderr']:.2g}" for v in tables["variance_vs_T"]]
    lines.append("=== quantum_vs_classical ===")
    lines.append("alpha,T,P,quantum,classical,separation_se")
    lines += [f"{v['alpha']},{v['T']},{v['P']},{v['quantum']:.6g},{v['classical']:.6g},{v['separation_se']:.2f}"
              for v in tables["quantum_vs_classical"]]
    lines.append("=== zeta ===")
    lines.append("alpha,T,j,P,zeta0,zeta2,zeta4,zeta4_stderr,zeta6,zeta6_stderr")
    lines += [f"{z['alpha']},{z['T']},{z['j']},{z['P']},{z['zeta0']:.6g},{z['zeta2']:.6g},{z['zeta4']:.6g},"
              f"{z['zeta4_stderr']:.2g},{z['zeta6']:.6g},{z['zeta6_stderr']:.2g}" for z in tables["zeta"]]
    lines.append("=== end ===")
    return "\n".join(lines) + "\n"


def render_figures(runs, tables, out: Path) -> list[str]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    fig, ax = plt.subplots(figsize=(5, 4))
    groups = {}
    for v in tables["variance_vs_T"]:
        groups.setdefault((v["alpha"], v["P"]), []).append(v)
    for (a, P), vs in sorted(groups.items()):
        ax.errorbar([v["T"] for v in vs], [v["q2"] for v in vs], yerr=[v["q2_stderr"] for v in vs],
                    marker="o", capsize=2, label=f"alpha={a}, P={P}")
        if a > 0:
            tt = np.geomspace(min(v["T"] for v in vs), max(v["T"] for v in vs), 100)
            ax.plot(tt, [ho.quartic_site_moment(x, a) for x in tt], "k--", lw=0.8)
    ax.set_xscale("log")
    ax.set_xlabel("T")
    ax.set_ylabel("<q_c^2>")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out / "variance_vs_T.png", dpi=120)
    plt.close(fig)
    written.append("variance_vs_T.png")

    for r in runs:
        if not r["zeta"] and not r["correlations"]:
            continue
        fig, ax = plt.subplots(figsize=(5, 4))
        for label, s in r["correlations"].items():
            ax.errorbar(s.times, s.values, yerr=s.stderr, fmt=".", ms=3, label=f"RPMD {label}")
        for j, z in r["zeta"].items():
            ax.plot(z["t"], z["T6"], "-", label=f"T6 q{j}")
        ax.set_xlabel("t")
        ax.set_ylabel("K(t)")
        ax.legend(fontsize=7)
        name = f"correlation_{Path(r['path']).name}.png"
        fig.tight_layout()
        fig.savefig(out / name, dpi=120)
        plt.close(fig)
        written.append(name)

    for r in runs:
        edir = Path(r["path"]) / "estimators"
        files = sorted(edir.glob("Q_*.csv"))
        if not files:
            continue
        cfg = r["config"]
        fig, ax = plt.subplots(figsize=(5, 4))
        for f in files:
            d = np.loadtxt(f, delimiter=",", skiprows=2, ndmin=2)
            ax.step(d[:, 0], d[:, 1], where="mid", label=f.stem)
            if cfg.chain.is_harmonic:
                j = int(f.stem[2:])
                ax.plot(d[:, 0], ho.position_distribution(d[:, :1], [j], cfg.sampler.T, cfg.chain.n_particles),
                        "k--", lw=0.8)
        ax.set_xlabel("q")
        ax.set_ylabel("Q_j(q)")
        ax.legend(fontsize=7)
        name = f"distributions_{Path(r['path']).name}.png"
        fig.tight_layout()
        fig.savefig(out / name, dpi=120)
        plt.close(fig)
        written.append(name)
    return written


def cmd_report(args) -> int:
    runs = [_load_run(Path(p)) for p in args.runs]
    checks = [run_checks(r) for r in runs]
    tables = _tables(runs)
    out = Path(args.out)
    text = _format_report(runs, checks, tables)
    atomic_write(out / "report.txt", text)
    doc = {"runs": [r["path"] for r in runs], "checks": checks, "tables": tables}
    if args.figures:
        doc["figures"] = render_figures(runs, tables, out)
    _write_json(out / "report.json", _jsonable(doc))
    sys.stdout.write(text)
    failed = sum(not c["passed"] for cs in checks for c in cs)
    if failed and args.strict:
        log.error("%d check(s) failed", failed)
        return EXIT_CHECKS
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qfpu", description="Path-integral sampling and RPMD for the quantum FPU chain.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", help="run PIMD and write a snapshot archive")
    s.add_argument("config")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", default=".")
    s.set_defaults(func=cmd_sample)

    c = sub.add_parser("correlate", help="RPMD Kubo correlations and zeta coefficients from an archive")
    c.add_argument("config")
    c.add_argument("archive")
    c.add_argument("--seed", type=int)
    c.add_argument("--out", default=".")
    c.add_argument("--max-samples", type=int, default=0)
    c.set_defaults(func=cmd_correlate)

    o = sub.add_parser("oracle", help="analytic reference curves as CSV")
    o.add_argument("config")
    o.add_argument("--out", default=".")
    o.set_defaults(func=cmd_oracle)

    r = sub.add_parser("report", help="comparison tables and checks over run directories")
    r.add_argument("runs", nargs="+")
    r.add_argument("--out", default=".")
    r.add_argument("--strict", action="store_true", help="exit with status 3 if any check fails")
    r.add_argument("--figures", action="store_true", help="also render PNG figures (needs matplotlib)")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericalAbort as exc:
        print(f"qfpu: numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"qfpu: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
