"""Canonical sampling of the ring polymer with thermostatted staging dynamics.

One step is NHC(dt/2) . kick(dt/2) . drift(dt) . kick(dt/2) . NHC(dt/2) in
staging coordinates, where the kick uses

    dp/dt = -mu_k P T^2 u^k - (1/P) dV/du^k

and the drift advances u by dt p / mu'_k.  The hot loop is compiled with
numba; ``step`` is a thin wrapper around the same kernel for single steps.

Time step, burn-in and stride may be left as ``None``: the time step then
follows a fixed fraction of the fastest spring period (halved until a short
pre-run conserves H' to the requested tolerance), and burn-in/stride come
from the autocorrelation of the bead-averaged potential energy measured on a
pilot segment.
"""

from __future__ import annotations

import logging
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .model import ChainSpec, chain_potential
from .ring_polymer import RingPolymerState, harmonic_spring_energy, staging_masses, unstage
from ._kernels import pimd_advance
from .thermostat import NHCParams, NHCState, thermostat_energy

log = logging.getLogger(__name__)

ARCHIVE_MAGIC = "QFPU-SNAPSHOTS"
ARCHIVE_VERSION = 1


class NumericalAbort(RuntimeError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    chain: ChainSpec
    T: float
    P: int = 1
    dt: float | None = None
    n_burn: int | None = None
    stride: int | None = None
    n_samples: int = 5000
    seed: int = 0
    nhc: NHCParams = field(default_factory=NHCParams)
    thermostat: bool = True
    pilot_steps: int = 20000
    tune_steps: int = 10000
    drift_tol: float = 1e-6
    tune_safety: float = 0.1
    max_halvings: int = 10

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if int(self.P) != self.P or self.P < 1:
            raise ValueError(f"P must be a positive integer, got {self.P}")
        if self.dt is not None and not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.stride is not None and self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if self.n_burn is not None and self.n_burn < 0:
            raise ValueError(f"n_burn must be >= 0, got {self.n_burn}")
        if self.n_samples < 1:
            raise ValueError(f"n_samples must be >= 1, got {self.n_samples}")

    @property
    def N(self) -> int:
        return self.chain.n_particles

    def default_dt(self) -> float:
        return 0.05 / max(1.0, 2.0 * math.sqrt(self.P) * self.T)


@dataclass
class SampleSet:
    """Primitive bead positions of every snapshot, shape (n_samples, N, P)."""

    snapshots: np.ndarray
    config: SamplerConfig
    conserved: np.ndarray
    potential: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        return self.snapshots.shape[0]

    @property
    def T(self) -> float:
        return self.config.T

    @property
    def P(self) -> int:
        return self.snapshots.shape[2]

    @property
    def chain(self) -> ChainSpec:
        return self.config.chain

    def relative_drift(self) -> float:
        h0 = self.meta.get("conserved_start", self.conserved[0])
        return float(np.max(np.abs(self.conserved - h0)) / abs(h0))

    def concatenate(self, other: "SampleSet") -> "SampleSet":
        if other.snapshots.shape[1:] != self.snapshots.shape[1:] or other.T != self.T:
            raise ValueError("sample sets disagree in N, P or T")
        return SampleSet(
            np.concatenate([self.snapshots, other.snapshots]),
            self.config,
            np.concatenate([self.conserved, other.conserved]),
            np.concatenate([self.potential, other.potential]),
            dict(self.meta, merged=True),
        )


@dataclass
class SamplerState:
    """Live integrator state: staged ring polymer, thermostats and constants."""

    u: np.ndarray
    p: np.ndarray
    nhc: NHCState
    mu: np.ndarray
    mu_prime: np.ndarray
    Q: np.ndarray
    dt: float
    n_respa: int

    def ring_polymer(self) -> RingPolymerState:
        return RingPolymerState(self.u, self.p, "staged")

    def copy(self) -> "SamplerState":
        return replace(self, u=self.u.copy(), p=self.p.copy(), nhc=self.nhc.copy())


def init_state(config: SamplerConfig) -> SamplerState:
    """Coincident beads at the origin, Maxwell momenta at T for masses mu' and Q."""
    N, P = config.N, config.P
    rng = np.random.default_rng(config.seed)
    sched = staging_masses(P)
    Q = config.nhc.masses(config.T, P, N)
    M = config.nhc.M
    u = np.zeros((N, P))
    p = rng.standard_normal((N, P)) * np.sqrt(sched.mu_prime * config.T)
    p_eta = rng.standard_normal((N, P, M)) * np.sqrt(Q * config.T)[None, :, None]
    nhc = NHCState(np.zeros((N, P, M)), p_eta)
    dt = config.dt if config.dt is not None else config.default_dt()
    return SamplerState(u, p, nhc, sched.mu, sched.mu_prime, Q, dt, config.nhc.n_respa)


def advance(state: SamplerState, config: SamplerConfig, n_steps: int) -> None:
    """Advance ``state`` in place by n_steps full steps."""
    ok = pimd_advance(
        state.u, state.p, state.nhc.eta, state.nhc.p_eta, state.mu, state.mu_prime, state.Q,
        float(config.T), config.chain.alpha, config.chain.beta, float(state.dt),
        config.nhc.weights, int(state.n_respa), int(n_steps), bool(config.thermostat),
    )
    if not ok:
        raise NumericalAbort(
            f"non-finite coordinate after {n_steps} steps at dt={state.dt}, T={config.T}, P={config.P}; "
            "the time step is probably too large"
        )


def step(state: SamplerState, config: SamplerConfig) -> SamplerState:
    """One full time step on a copy of ``state``."""
    out = state.copy()
    advance(out, config, 1)
    return out


def positions(state: SamplerState) -> np.ndarray:
    return unstage(state.u)


def bead_potential(state: SamplerState, spec: ChainSpec) -> float:
    """Bead-averaged chain potential (1/P) sum_k V(q^k)."""
    return float(np.mean(chain_potential(positions(state), spec)))


def conserved(state: SamplerState, config: SamplerConfig) -> float:
    """H' = staged kinetic + springs + V/P + thermostat energy."""
    P = state.u.shape[1]
    kin = 0.5 * float(np.sum(state.p**2 / state.mu_prime))
    spring = float(harmonic_spring_energy(state.u, config.T, staged=True))
    pot = float(np.sum(chain_potential(positions(state), config.chain))) / P
    h = kin + spring + pot
    if config.thermostat:
        h += thermostat_energy(state.nhc, state.Q, config.T)
    return h


def autocorrelation(x: np.ndarray, max_lag: int | None = None) -> np.ndarray:
    """Normalized autocorrelation via FFT."""
    x = np.asarray(x, dtype=float) - np.mean(x)
    n = len(x)
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n]
    if acf[0] == 0:
        return np.ones(1 if max_lag is None else max_lag)
    acf = acf / acf[0]
    return acf if max_lag is None else acf[:max_lag]


def integrated_time(x: np.ndarray, c: float = 5.0) -> float:
    """Integrated autocorrelation time with Sokal's self-consistent window, in samples."""
    rho = autocorrelation(x)
    taus = 1.0 + 2.0 * np.cumsum(rho[1:])
    m = np.arange(1, len(rho))
    ok = np.nonzero(m >= c * taus)[0]
    tau = taus[ok[0]] if len(ok) else (taus[-1] if len(taus) else 1.0)
    return max(float(tau), 1.0)


def tune_timestep(config: SamplerConfig, state: SamplerState) -> tuple[float, int, float]:
    """Halve dt (and double n_R once) until a pre-run keeps |dH'|/|H'| below drift_tol.

    The pre-run is much shorter than production, so it must meet the
    tolerance scaled by ``tune_safety``.
    """
    if config.dt is not None or config.tune_steps <= 0 or not config.thermostat:
        return state.dt, state.n_respa, float("nan")
    dt, n_r = state.dt, state.n_respa
    n_chunks = 20
    drift = float("inf")
    for attempt in range(config.max_halvings + 1):
        trial = replace(state.copy(), dt=dt, n_respa=n_r)
        h0 = conserved(trial, config)
        drift = 0.0
        chunk = max(1, config.tune_steps // n_chunks)
        try:
            for _ in range(n_chunks):
                advance(trial, config, chunk)
                drift = max(drift, abs(conserved(trial, config) - h0) / abs(h0))
        except NumericalAbort:
            drift = float("inf")
        if drift < config.drift_tol * config.tune_safety:
            return dt, n_r, drift
        if attempt == 0:
            n_r *= 2
        else:
            dt *= 0.5
        log.info("pre-run drift %.3g above %.1g, trying dt=%g n_R=%d", drift, config.drift_tol, dt, n_r)
    raise NumericalAbort(f"H' drift {drift:.3g} still above {config.drift_tol} after {config.max_halvings} halvings")


def pilot(config: SamplerConfig, state: SamplerState) -> tuple[int, int, dict]:
    """Run the pilot segment in place; return burn-in and stride in steps."""
    n = max(200, config.pilot_steps)
    rec = 10 if n >= 2000 else 1
    n_rec = n // rec
    trace = np.empty(n_rec)
    for i in range(n_rec):
        advance(state, config, rec)
        trace[i] = bead_potential(state, config.chain)
    tail = trace[n_rec // 2 :]
    tau = integrated_time(tail) * rec
    rho = autocorrelation(tail)
    below = np.nonzero(rho < 0.1)[0]
    stride = int(below[0]) * rec if len(below) else len(tail) * rec
    n_burn = int(math.ceil(10.0 * tau))
    info = {"pilot_steps": n_rec * rec, "tau_potential_steps": tau, "auto_stride": max(stride, 1), "auto_burn": n_burn}
    return n_burn, max(stride, 1), info


def run(config: SamplerConfig, progress=None) -> SampleSet:
    """Burn in, then collect n_samples snapshots every ``stride`` steps."""
    state = init_state(config)
    meta: dict = {}
    dt, n_r, drift = tune_timestep(config, state)
    state.dt, state.n_respa = dt, n_r
    meta.update(dt=dt, n_respa=n_r, tune_drift=drift)

    n_burn, stride = config.n_burn, config.stride
    if n_burn is None or stride is None:
        auto_burn, auto_stride, info = pilot(config, state)
        meta.update(info)
        n_burn = auto_burn if n_burn is None else n_burn
        stride = auto_stride if stride is None else stride
    if n_burn:
        advance(state, config, n_burn)
    meta.update(n_burn=int(n_burn), stride=int(stride))

    N, P = config.N, config.P
    snaps = np.empty((config.n_samples, N, P))
    h = np.empty(config.n_samples)
    pot = np.empty(config.n_samples)
    kin = np.zeros((N, P))
    meta["conserved_start"] = conserved(state, config)
    for i in range(config.n_samples):
        advance(state, config, stride)
        q = positions(state)
        snaps[i] = q
        h[i] = conserved(state, config)
        pot[i] = float(np.mean(chain_potential(q, config.chain)))
        kin += state.p**2 / state.mu_prime
        if progress is not None:
            progress(i + 1, config.n_samples)
    meta["equipartition"] = (kin / config.n_samples).tolist()
    meta["n_steps_production"] = int(stride) * config.n_samples
    out = SampleSet(snaps, config, h, pot, meta)
    meta["relative_drift"] = out.relative_drift()
    return out


def config_header(config: SamplerConfig, dt: float) -> dict:
    c = config.chain
    return {
        "N": c.n_particles, "P": config.P, "T": config.T, "alpha": c.alpha, "beta": c.beta,
        "seed": config.seed, "dt": dt,
    }


def write_archive(path, samples: SampleSet) -> None:
    """Line-oriented snapshot archive.

    Line 1: ``QFPU-SNAPSHOTS <version>``.  Then ``key=value`` header lines for
    N, P, T, alpha, beta, seed, dt, n_samples, terminated by ``END``.  Each
    following line is one snapshot: N*P positions, row-major with the bead
    index fastest (q_1^1 ... q_1^P q_2^1 ...), written with repr precision.
    """
    cfg = samples.config
    head = config_header(cfg, samples.meta.get("dt", cfg.dt))
    head["n_samples"] = samples.n_samples
    lines = [f"{ARCHIVE_MAGIC} {ARCHIVE_VERSION}"]
    lines += [f"{k}={_scalar(v)!r}" for k, v in head.items()]
    lines.append("END")
    flat = samples.snapshots.reshape(samples.n_samples, -1)
    lines += [" ".join(repr(float(x)) for x in row) for row in flat]
    atomic_write(path, "\n".join(lines) + "\n")


def read_archive(path) -> tuple[dict, np.ndarray]:
    with open(path) as fh:
        first = fh.readline().split()
        if len(first) != 2 or first[0] != ARCHIVE_MAGIC:
            raise ValueError(f"{path}: not a snapshot archive")
        if int(first[1]) != ARCHIVE_VERSION:
            raise ValueError(f"{path}: unsupported archive version {first[1]}")
        head = {}
        for line in fh:
            line = line.strip()
            if line == "END":
                break
            key, val = line.split("=", 1)
            head[key] = _parse_value(val)
        rows = [np.array(line.split(), dtype=float) for line in fh if line.strip()]
    N, P = int(head["N"]), int(head["P"])
    if not rows:
        raise ValueError(f"{path}: archive holds no snapshots")
    data = np.stack(rows)
    if data.shape[1] != N * P:
        raise ValueError(f"{path}: record length {data.shape[1]} does not match N*P={N * P}")
    if data.shape[0] != int(head.get("n_samples", data.shape[0])):
        raise ValueError(f"{path}: header announces {head['n_samples']} snapshots, found {data.shape[0]}")
    return head, data.reshape(-1, N, P)


def _scalar(v):
    if isinstance(v, (np.integer, int)) and not isinstance(v, bool):
        return int(v)
    if isinstance(v, (np.floating, float)):
        return float(v)
    return v


def _parse_value(text: str):
    text = text.strip()
    if text == "None":
        return None
    try:
        return int(text)
    except ValueError:
        return float(text)


def atomic_write(path, text: str) -> None:
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def config_dict(config: SamplerConfig) -> dict:
    return asdict(config)
