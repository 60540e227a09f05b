"""Configurational statistics of PIMD sample sets.

Distributions are estimated from the bead-augmented cloud: every snapshot
contributes its P bead configurations, so a histogram over the particles in J
is filled with n_samples * P points.  Particle indices are 1-based.

Successive snapshots and the beads of one snapshot are correlated.  Wherever
a Kolmogorov-Smirnov test is reported, its critical value uses an effective
sample size estimated from the integrated autocorrelation time of the
per-snapshot bead average, and counts each snapshot at most once.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy import integrate, optimize, stats

from .model import ChainSpec, ModeBasis, chain_forces, pair_force, pair_potential, to_modes
from .pimd import atomic_write, integrated_time
from .stats import blocked_standard_error

SCHEMA_VERSION = 1
MAX_DIM = 3
MAX_BINS = 128
KS_LEVEL = 0.01


def _snapshots(samples):
    snaps = getattr(samples, "snapshots", samples)
    snaps = np.asarray(snaps, dtype=float)
    if snaps.ndim != 3:
        raise ValueError("expected snapshots with shape (n_samples, N, P)")
    if snaps.shape[0] == 0:
        raise ValueError("sample set is empty")
    return snaps


def _check_subset(J, N) -> tuple[int, ...]:
    J = tuple(int(j) for j in np.atleast_1d(J))
    if not J:
        raise ValueError("subset J must not be empty")
    if len(J) > MAX_DIM:
        raise ValueError(f"histograms over more than {MAX_DIM} particles are not supported")
    for j in J:
        if not 1 <= j <= N:
            raise ValueError(f"particle index {j} out of range 1..{N}")
    return J


@dataclass
class DistributionEstimate:
    J: tuple
    edges: list
    density: np.ndarray
    count: int
    per_bead: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def centers(self) -> list:
        return [0.5 * (e[1:] + e[:-1]) for e in self.edges]

    @property
    def widths(self) -> list:
        return [np.diff(e) for e in self.edges]

    def cell_volumes(self) -> np.ndarray:
        vol = np.ones(())
        for w in self.widths:
            vol = np.multiply.outer(vol, w)
        return vol

    def total(self) -> float:
        return float(np.sum(self.density * self.cell_volumes()))

    def to_csv(self, path) -> None:
        if len(self.J) != 1:
            raise ValueError("CSV export is for one-dimensional distributions; use to_json")
        head = f"# schema_version={SCHEMA_VERSION} J={list(self.J)} count={self.count}"
        rows = [f"{float(c)!r},{float(d)!r}" for c, d in zip(self.centers[0], self.density)]
        atomic_write(path, "\n".join([head, "q,density"] + rows) + "\n")

    def to_json(self, path) -> None:
        doc = {
            "schema_version": SCHEMA_VERSION,
            "J": list(self.J),
            "count": self.count,
            "edges": [e.tolist() for e in self.edges],
            "density": self.density.tolist(),
            "meta": self.meta,
        }
        atomic_write(path, json.dumps(doc))


def bead_cloud(samples, J) -> np.ndarray:
    """Points (q_{j_1}^k, ..., q_{j_n}^k) for every snapshot and bead, shape (n P, |J|)."""
    snaps = _snapshots(samples)
    J = _check_subset(J, snaps.shape[1])
    pts = snaps[:, [j - 1 for j in J], :]  # (n, |J|, P)
    return np.moveaxis(pts, 1, 2).reshape(-1, len(J))


def default_edges(x, cap: int = MAX_BINS) -> np.ndarray:
    """Freedman-Diaconis bin edges, at most ``cap`` bins."""
    x = np.asarray(x, dtype=float)
    edges = np.histogram_bin_edges(x, bins="fd")
    if len(edges) - 1 > cap:
        edges = np.histogram_bin_edges(x, bins=cap)
    return edges


def _edges_for(cloud, bins, ranges):
    d = cloud.shape[1]
    if bins is None:
        return [default_edges(cloud[:, i]) for i in range(d)]
    if isinstance(bins, (int, np.integer)):
        lo = cloud.min(axis=0) if ranges is None else [r[0] for r in ranges]
        hi = cloud.max(axis=0) if ranges is None else [r[1] for r in ranges]
        return [np.linspace(lo[i], hi[i], int(bins) + 1) for i in range(d)]
    edges = [np.asarray(b, dtype=float) for b in bins]
    if len(edges) != d:
        raise ValueError("need one edge array per dimension")
    return edges


def estimate_distribution(samples, J, bins=None, ranges=None, per_bead: bool = True) -> DistributionEstimate:
    """Normalized histogram of the bead-augmented cloud over the particles in J.

    Points outside the edges are dropped before normalization, so the
    estimate always integrates to one over its grid.
    """
    snaps = _snapshots(samples)
    J = _check_subset(J, snaps.shape[1])
    cloud = bead_cloud(snaps, J)
    edges = _edges_for(cloud, bins, ranges)
    counts, _ = np.histogramdd(cloud, bins=edges)
    total = counts.sum()
    if total == 0:
        raise ValueError("no samples fall inside the requested bins")
    vol = np.ones(())
    for e in edges:
        vol = np.multiply.outer(vol, np.diff(e))
    density = counts / (total * vol)
    sub = None
    if per_bead:
        n, _, P = snaps.shape
        sub = np.empty((P,) + density.shape)
        pts = snaps[:, [j - 1 for j in J], :]
        for k in range(P):
            c, _ = np.histogramdd(pts[:, :, k], bins=edges)
            sub[k] = c / (max(c.sum(), 1.0) * vol)
    return DistributionEstimate(J, edges, density, int(total), sub, {"n_samples": snaps.shape[0], "P": snaps.shape[2]})


def marginalize(dist: DistributionEstimate, drop_index: int) -> DistributionEstimate:
    """Integrate out particle ``drop_index`` (a member of J)."""
    if drop_index not in dist.J:
        raise ValueError(f"particle {drop_index} is not in J={dist.J}")
    if len(dist.J) < 2:
        raise ValueError("cannot marginalize a one-dimensional distribution")
    ax = dist.J.index(drop_index)
    w = np.diff(dist.edges[ax])
    shape = [1] * dist.density.ndim
    shape[ax] = -1
    dens = np.sum(dist.density * w.reshape(shape), axis=ax)
    sub = None
    if dist.per_bead is not None:
        sub = np.sum(dist.per_bead * w.reshape([1] + shape), axis=ax + 1)
    J = tuple(j for j in dist.J if j != drop_index)
    edges = [e for i, e in enumerate(dist.edges) if i != ax]
    return DistributionEstimate(J, edges, dens, dist.count, sub, dict(dist.meta))


def moment(source, J, powers, return_error: bool = False):
    """<prod_m q_{j_m}^{n_m}> from samples (direct average) or a histogram (bin-weighted).

    With samples the per-snapshot bead average is formed first, so the
    blocked standard error accounts for correlations between snapshots.
    """
    powers = [int(p) for p in np.atleast_1d(powers)]
    if any(p < 0 for p in powers):
        raise ValueError("powers must be non-negative integers")
    if isinstance(source, DistributionEstimate):
        J = tuple(int(j) for j in np.atleast_1d(J))
        if J != source.J:
            raise ValueError(f"histogram covers J={source.J}, asked for {J}")
        if len(powers) != len(J):
            raise ValueError("need one power per particle in J")
        f = np.ones(())
        for c, p in zip(source.centers, powers):
            f = np.multiply.outer(f, c**p)
        val = float(np.sum(f * source.density * source.cell_volumes()))
        return (val, float("nan")) if return_error else val
    snaps = _snapshots(source)
    J = _check_subset(J, snaps.shape[1])
    if len(powers) != len(J):
        raise ValueError("need one power per particle in J")
    prod = np.ones((snaps.shape[0], snaps.shape[2]))
    for j, p in zip(J, powers):
        prod = prod * snaps[:, j - 1, :] ** p
    per_snap = prod.mean(axis=1)
    val = float(per_snap.mean())
    if return_error:
        return val, float(blocked_standard_error(per_snap))
    return val


def variance(samples, j: int):
    """Bead-augmented variance of q_j with a blocked standard error."""
    snaps = _snapshots(samples)
    _check_subset(j, snaps.shape[1])
    x = snaps[:, j - 1, :]
    m = x.mean()
    per_snap = ((x - m) ** 2).mean(axis=1)
    return float(per_snap.mean()), float(blocked_standard_error(per_snap))


def mode_second_moments(samples):
    """<eta_j^2> for every mode with blocked standard errors, each of shape (N,)."""
    snaps = _snapshots(samples)
    eta = to_modes(np.moveaxis(snaps, 1, 0), ModeBasis(snaps.shape[1]))  # (N, n, P)
    per_snap = np.mean(eta**2, axis=2).T  # (n, N)
    return per_snap.mean(axis=0), np.asarray(blocked_standard_error(per_snap, axis=0))


def position_second_moments(samples):
    """<q_j^2> for every particle with blocked standard errors."""
    snaps = _snapshots(samples)
    per_snap = np.mean(snaps**2, axis=2)
    return per_snap.mean(axis=0), np.asarray(blocked_standard_error(per_snap, axis=0))


def total_density(samples, bins=None, ranges=None) -> DistributionEstimate:
    """g(q) = (1/N) sum_j Q_j(q) on a common grid."""
    snaps = _snapshots(samples)
    N = snaps.shape[1]
    cloud = snaps.reshape(-1, 1)
    edges = _edges_for(cloud, bins, ranges)
    dens = np.zeros(len(edges[0]) - 1)
    count = 0
    for j in range(1, N + 1):
        d = estimate_distribution(snaps, [j], bins=edges, per_bead=False)
        dens += d.density / N
        count += d.count
    return DistributionEstimate(("all",), edges, dens, count, None, {"n_samples": snaps.shape[0], "P": snaps.shape[2]})


def _potential_bounds(T, spec: ChainSpec, cut: float = 60.0):
    grid = np.linspace(-5.0, 5.0, 20001)
    v = pair_potential(grid, spec)
    i0 = int(np.argmin(v))
    r0, v0 = grid[i0], v[i0]

    def g(r):
        return float(pair_potential(r, spec)) - v0 - cut * T

    lo = r0 - 1e-3
    while g(lo) < 0:
        lo = r0 - 2.0 * (r0 - lo)
    hi = r0 + 1e-3
    while g(hi) < 0:
        hi = r0 + 2.0 * (hi - r0)
    return optimize.brentq(g, lo, r0), optimize.brentq(g, r0, hi), r0, v0


def wall_distribution(q_grid, T: float, spec: ChainSpec):
    """rho(q) = exp(-V(q)/T) / int exp(-V/T) dq for a particle tied to one wall."""
    if not T > 0:
        raise ValueError("temperature must be positive")
    a, b, r0, v0 = _potential_bounds(T, spec)

    def w(q):
        return np.exp(-(pair_potential(q, spec) - v0) / T)

    z, _ = integrate.quad(w, a, b, points=[r0], epsabs=0.0, epsrel=1e-12, limit=500)
    return w(np.asarray(q_grid, dtype=float)) / z


def wall_normalization(T: float, spec: ChainSpec) -> float:
    a, b, r0, v0 = _potential_bounds(T, spec)
    val, _ = integrate.quad(lambda q: wall_distribution(q, T, spec), a, b, points=[r0], epsrel=1e-12, limit=500)
    return val


def structure_factor(dist: DistributionEstimate, kappa_grid) -> np.ndarray:
    """S_J(kappa) = int prod_m exp(i kappa_m q_m) Q_J dq as a sum over histogram cells."""
    kappa = np.asarray(kappa_grid, dtype=float)
    d = len(dist.edges)
    if d == 1 and kappa.ndim == 1:
        kappa = kappa[:, None]
    if kappa.shape[-1] != d:
        raise ValueError(f"wavevectors need {d} components")
    mass = dist.density * dist.cell_volumes()
    mass = mass / mass.sum()
    out = np.empty(kappa.shape[0], dtype=complex)
    cen = dist.centers
    for i, kv in enumerate(kappa):
        phase = np.ones((), dtype=complex)
        for c, kk in zip(cen, kv):
            phase = np.multiply.outer(phase, np.exp(1j * kk * c))
        out[i] = np.sum(mass * phase)
    return out


def write_structure_factor(path, kappa, s) -> None:
    kappa = np.atleast_2d(np.asarray(kappa, dtype=float).T).T
    cols = [f"kappa{i + 1}" for i in range(kappa.shape[1])]
    lines = [f"# schema_version={SCHEMA_VERSION}", ",".join(cols + ["Re", "Im"])]
    for kv, v in zip(kappa, s):
        lines.append(",".join([repr(float(x)) for x in kv] + [repr(float(v.real)), repr(float(v.imag))]))
    atomic_write(path, "\n".join(lines) + "\n")


def left_wall_force(q, spec: ChainSpec):
    """F_L(q) = -V'(q): -q - alpha q^2 - beta q^3."""
    return -pair_force(q, spec)


def right_wall_force(q, spec: ChainSpec):
    """F_R(q) = V'(-q): -q + alpha q^2 - beta q^3."""
    return pair_force(-np.asarray(q, dtype=float), spec)


@dataclass
class ForceFieldSection:
    j: int
    bead: int
    q: np.ndarray
    force: np.ndarray
    mean: float
    stderr: float
    envelope: str | None = None

    def envelope_values(self, q_grid, spec: ChainSpec):
        if self.envelope == "left":
            return left_wall_force(q_grid, spec)
        if self.envelope == "right":
            return right_wall_force(q_grid, spec)
        return None


def force_sections(samples, j: int, bead_select: int, spec: ChainSpec) -> ForceFieldSection:
    """Scatter of (q_j^{k*}, F_j) with F_j = -(1/P) sum_k dV/dq_j^k per snapshot."""
    snaps = _snapshots(samples)
    n, N, P = snaps.shape
    _check_subset(j, N)
    if not 1 <= bead_select <= P:
        raise ValueError(f"bead index {bead_select} out of range 1..{P}")
    F = chain_forces(np.moveaxis(snaps, 1, 0), spec)[j - 1]  # (n, P)
    est = F.mean(axis=1)
    env = "left" if j == 1 else ("right" if j == N else None)
    return ForceFieldSection(j, bead_select, snaps[:, j - 1, bead_select - 1].copy(), est,
                             float(est.mean()), float(blocked_standard_error(est)), env)


def effective_size(series) -> float:
    """Number of effectively independent entries of a time series."""
    series = np.asarray(series, dtype=float)
    if len(series) < 8 or np.std(series) == 0:
        return float(len(series))
    return max(1.0, len(series) / integrated_time(series))


def ks_critical(n1: float, n2: float, level: float = KS_LEVEL) -> float:
    c = math.sqrt(-0.5 * math.log(level / 2.0))
    return c * math.sqrt((n1 + n2) / (n1 * n2))


@dataclass
class KSResult:
    statistic: float
    critical: float
    n_eff: tuple

    @property
    def passed(self) -> bool:
        return self.statistic < self.critical

    def as_dict(self) -> dict:
        return {"statistic": self.statistic, "critical": self.critical, "n_eff": list(self.n_eff), "passed": self.passed}


def ks_compare(x, y, n1: float | None = None, n2: float | None = None, level: float = KS_LEVEL) -> KSResult:
    x = np.ravel(x)
    y = np.ravel(y)
    d = float(stats.ks_2samp(x, y).statistic)
    n1 = len(x) if n1 is None else n1
    n2 = len(y) if n2 is None else n2
    return KSResult(d, ks_critical(n1, n2, level), (float(n1), float(n2)))


def symmetry_diagnostic(samples, J) -> dict:
    """Compare Q_J(q) with Q_{J*}(-q), J* = {N+1-j}, coordinate by coordinate."""
    snaps = _snapshots(samples)
    N = snaps.shape[1]
    J = _check_subset(J, N)
    report = {"J": list(J), "J_mirror": [N + 1 - j for j in J], "tests": []}
    for j in J:
        jm = N + 1 - j
        x = snaps[:, j - 1, :]
        y = -snaps[:, jm - 1, :]
        n_eff = min(effective_size(x.mean(axis=1)), effective_size(y.mean(axis=1)))
        if j == jm:
            # self-mirror: the distribution must be even
            res = ks_compare(x, y, n_eff, n_eff)
        else:
            res = ks_compare(x, y, n_eff, n_eff)
        report["tests"].append({"j": j, "mirror": jm, **res.as_dict()})
        report.setdefault("variance_ratio", []).append(float(np.var(x) / np.var(y)))
    report["passed"] = all(t["passed"] for t in report["tests"])
    return report


def replica_equivalence(samples, j: int) -> dict:
    """Pairwise KS statistics between the per-bead marginals of q_j."""
    snaps = _snapshots(samples)
    n, N, P = snaps.shape
    _check_subset(j, N)
    x = snaps[:, j - 1, :]
    n_eff = effective_size(x.mean(axis=1))
    worst = 0.0
    for a, b in combinations(range(P), 2):
        worst = max(worst, float(stats.ks_2samp(x[:, a], x[:, b]).statistic))
    crit = ks_critical(n_eff, n_eff)
    return {"j": j, "P": P, "max_statistic": worst, "critical": crit, "n_eff": n_eff, "passed": worst < crit}
