"""Real-time ring-polymer dynamics and the short-time expansion of K(t).

Initial configurations come from a PIMD SampleSet at the same T and P.  Each
one is given fresh momenta from a Maxwell distribution at temperature P T,
drawn from a generator seeded with (seed, sample index), and is propagated
without thermostats under

    dp/dt = -P^2 T^2 (2 q^k - q^{k-1} - q^{k+1}) - dV/dq^k.

Observables are linear maps of the bead-averaged configuration q_P, given as
an (L, N) matrix whose rows are the coefficient vectors.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from math import factorial

import numpy as np
from scipy import optimize

from ._kernels import rpmd_observe, rpmd_propagate
from .model import ChainSpec, ModeBasis, chain_forces, chain_hessian_terms, pair_stiffness, bond_lengths
from .pimd import NumericalAbort, atomic_write
from .stats import blocked_standard_error

SCHEMA_VERSION = 1
ALPHA_WARN = 1.5


@dataclass(frozen=True)
class Observable:
    """Linear observable A(q) = c . q with a human-readable label."""

    label: str
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=float)
        if c.ndim != 1:
            raise ValueError("observable coefficients must be a vector over particles")
        object.__setattr__(self, "coefficients", c)


def position_observable(j: int, n_particles: int) -> Observable:
    if not 1 <= j <= n_particles:
        raise ValueError(f"particle index {j} out of range 1..{n_particles}")
    c = np.zeros(n_particles)
    c[j - 1] = 1.0
    return Observable(f"q{j}", c)


def mode_observable(j: int, n_particles: int) -> Observable:
    if not 1 <= j <= n_particles:
        raise ValueError(f"mode index {j} out of range 1..{n_particles}")
    return Observable(f"eta{j}", ModeBasis(n_particles).kernel[j - 1].copy())


def observable_from_label(label: str, n_particles: int) -> Observable:
    """Parse ``q<j>`` or ``eta<j>`` into the matching observable."""
    text = label.strip()
    for prefix, make in (("eta", mode_observable), ("q", position_observable)):
        if text.startswith(prefix) and text[len(prefix):].isdigit():
            return make(int(text[len(prefix):]), n_particles)
    raise ValueError(f"unknown observable {label!r}; use q<j> or eta<j>")


def _as_observables(observables, n_particles: int) -> list[Observable]:
    if isinstance(observables, Observable):
        observables = [observables]
    out = []
    for ob in observables:
        if callable(ob) or not isinstance(ob, Observable):
            raise TypeError("only linear observables (Observable instances) are supported")
        if len(ob.coefficients) != n_particles:
            raise ValueError(f"observable {ob.label} has {len(ob.coefficients)} coefficients, chain has {n_particles}")
        out.append(ob)
    return out


@dataclass
class CorrelationSeries:
    times: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    zeta: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        lines = [f"# schema_version={SCHEMA_VERSION} " + json.dumps(self.meta, sort_keys=True), "t,K,K_stderr"]
        lines += [f"{float(t)!r},{float(k)!r},{float(e)!r}" for t, k, e in zip(self.times, self.values, self.stderr)]
        atomic_write(path, "\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path) -> "CorrelationSeries":
        with open(path) as fh:
            first = fh.readline()
            meta = json.loads(first.split(" ", 2)[2]) if first.startswith("#") else {}
            data = np.loadtxt(fh, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1], data[:, 2], {}, meta)

    def zeta_json(self) -> str:
        return json.dumps({"schema_version": SCHEMA_VERSION, "meta": self.meta, "zeta": self.zeta}, indent=2, sort_keys=True)


def _snapshots(samples):
    snaps = getattr(samples, "snapshots", samples)
    snaps = np.asarray(snaps, dtype=float)
    if snaps.ndim != 3:
        raise ValueError("expected snapshots with shape (n_samples, N, P)")
    if snaps.shape[0] == 0:
        raise ValueError("sample set is empty")
    return snaps


def draw_momenta(seed: int, index: int, shape, T: float, P: int, sign: float = 1.0) -> np.ndarray:
    """Maxwell momenta at temperature P T (unit masses) from the (seed, index) stream."""
    rng = np.random.default_rng([int(seed), int(index)])
    return sign * rng.standard_normal(shape) * math.sqrt(P * T)


def default_rpmd_dt(q, T: float, spec: ChainSpec) -> float:
    """A twentieth of the inverse of the fastest ring-polymer frequency estimate."""
    P = q.shape[-1]
    stiff = float(np.max(np.abs(pair_stiffness(bond_lengths(q), spec))))
    omega_max = math.sqrt(4.0 * (P * T) ** 2 + 4.0 * max(stiff, 1.0))
    return 0.05 / omega_max


def rpmd_trajectory(q0, p0, T: float, spec: ChainSpec, dt: float, t_max: float, every: int = 1):
    """Positions along an un-thermostatted RPMD trajectory.

    Returns (times, q) with q of shape (n_t, N, P).
    """
    q = np.array(q0, dtype=float)
    p = np.array(p0, dtype=float)
    if q.shape != p.shape or q.ndim != 2:
        raise ValueError("q0 and p0 must be matching (N, P) arrays")
    n_steps = int(round(t_max / dt))
    out = np.empty((n_steps // every + 1,) + q.shape)
    ok = rpmd_propagate(q, p, float(T), spec.alpha, spec.beta, float(dt), n_steps, int(every), out)
    if not ok:
        raise NumericalAbort(f"non-finite RPMD coordinate at dt={dt}; reduce the time step")
    times = np.arange(out.shape[0]) * every * dt
    return times, out


def default_time_grid(n_particles: int = 8, epsilon: float = 0.1, n_points: int = 64) -> np.ndarray:
    return np.linspace(0.0, validity_horizon(epsilon, n_particles), n_points)


def kubo_products(samples, T: float, spec: ChainSpec, observables, t_grid, seed: int = 0,
                  dt: float | None = None, reverse: bool = False):
    """Per-sample products A_P(0) A_P(t) for every observable, shape (n_samples, n_t, L)."""
    snaps = _snapshots(samples)
    n, N, P = snaps.shape
    if N != spec.n_particles:
        raise ValueError(f"snapshots have N={N}, chain spec has N={spec.n_particles}")
    obs = _as_observables(observables, N)
    A = np.stack([o.coefficients for o in obs])
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid[0] != 0.0:
        raise ValueError("time grid must start at t = 0")
    n_t = len(t_grid)
    spacing = t_grid[1] - t_grid[0] if n_t > 1 else 0.0
    if n_t > 1 and not np.allclose(np.diff(t_grid), spacing, rtol=1e-9, atol=1e-12):
        raise ValueError("time grid must be uniform")
    if spec.alpha >= ALPHA_WARN:
        warnings.warn(f"RPMD short-time accuracy is only argued for alpha < {ALPHA_WARN}", stacklevel=2)
    dt_max = dt if dt is not None else default_rpmd_dt(snaps[0], T, spec)
    n_sub = max(1, int(math.ceil(spacing / dt_max))) if n_t > 1 else 1
    h = spacing / n_sub if n_t > 1 else 0.0
    sign = -1.0 if reverse else 1.0
    prods = np.empty((n, n_t, len(obs)))
    buf = np.empty((n_t, len(obs)))
    for i in range(n):
        q = snaps[i].copy()
        p = draw_momenta(seed, i, (N, P), T, P, sign)
        if not rpmd_observe(q, p, A, float(T), spec.alpha, spec.beta, h, n_sub, n_t, buf):
            raise NumericalAbort(f"non-finite RPMD coordinate for sample {i} at dt={h}")
        prods[i] = buf[0] * buf
    return prods, {"rpmd_dt": float(h), "n_sub": int(n_sub)}


def kubo_autocorrelations(samples, T: float, spec: ChainSpec, observables, t_grid, seed: int = 0,
                          dt: float | None = None, reverse: bool = False) -> list[CorrelationSeries]:
    """Kubo-transformed autocorrelation estimates for several linear observables."""
    obs = _as_observables(observables, spec.n_particles)
    prods, info = kubo_products(samples, T, spec, obs, t_grid, seed, dt, reverse)
    mean = prods.mean(axis=0)
    err = blocked_standard_error(prods, axis=0)
    P = _snapshots(samples).shape[2]
    out = []
    for l, ob in enumerate(obs):
        meta = {"N": spec.n_particles, "P": P, "T": T, "alpha": spec.alpha, "observable": ob.label,
                "n_samples": prods.shape[0], "seed": seed, **info}
        out.append(CorrelationSeries(np.asarray(t_grid, dtype=float), mean[:, l], err[:, l], {}, meta))
    return out


def kubo_autocorrelation(samples, T: float, spec: ChainSpec, observable, t_grid, seed: int = 0,
                         dt: float | None = None) -> CorrelationSeries:
    return kubo_autocorrelations(samples, T, spec, [observable], t_grid, seed, dt)[0]


# static Taylor coefficients

def _particle_forces(snaps, spec):
    # (n, N, P) -> forces with the particle axis first for chain_forces
    return np.moveaxis(chain_forces(np.moveaxis(snaps, 1, 0), spec), 0, 1)


def zeta4_terms(samples, spec: ChainSpec, j: int, form: str = "anchor"):
    """Per-snapshot estimator of zeta_4 for particle j.

    ``anchor``: (1/P) sum_k F^k F^1; ``double``: ((1/P) sum_k F^k)^2.
    """
    snaps = _snapshots(samples)
    _check_j(j, snaps.shape[1])
    F = _particle_forces(snaps, spec)[:, j - 1, :]
    if form == "anchor":
        return np.mean(F * F[:, :1], axis=1)
    if form == "double":
        return np.mean(F, axis=1) ** 2
    raise ValueError(f"unknown zeta_4 form {form!r}")


def zeta6_bracket(q, spec: ChainSpec, j: int):
    """(dF_j/dq_j)^2 + (dF_j/dq_{j-1})^2 + (dF_j/dq_{j+1})^2 with wall neighbours dropped.

    ``q`` has the particle index on axis 0; trailing axes are carried.
    """
    N = np.shape(q)[0]
    _check_j(j, N)
    sub, diag, sup = chain_hessian_terms(q, spec)
    out = diag[j - 1] ** 2
    if j > 1:
        out = out + sub[j - 1] ** 2
    if j < N:
        out = out + sup[j - 1] ** 2
    return out


def zeta6_terms(samples, T: float, spec: ChainSpec, j: int, beads: str = "all"):
    """Per-snapshot estimator of zeta_6: T times the bracket at bead 1 or averaged over beads."""
    snaps = _snapshots(samples)
    b = zeta6_bracket(np.moveaxis(snaps, 1, 0), spec, j)  # (n, P)
    if beads == "anchor":
        return T * b[:, 0]
    if beads == "all":
        return T * b.mean(axis=1)
    raise ValueError(f"unknown bead selection {beads!r}")


def zeta6_from_distribution(cloud, weights, T: float, spec: ChainSpec, j: int):
    """zeta_6 as an integral of the bracket over a three-particle measure.

    ``cloud`` holds points (q_{j-1}, q_j, q_{j+1}) with shape (m, 3) and
    ``weights`` their probabilities.  Wall neighbours are passed as zeros.
    The bracket only depends on the two bonds around j.
    """
    cloud = np.asarray(cloud, dtype=float)
    w = np.asarray(weights, dtype=float)
    left = pair_stiffness(cloud[:, 1] - cloud[:, 0], spec)
    right = pair_stiffness(cloud[:, 2] - cloud[:, 1], spec)
    br = (left + right) ** 2
    if j > 1:
        br = br + left**2
    if j < spec.n_particles:
        br = br + right**2
    return T * float(np.sum(w * br) / np.sum(w))


def neighbour_cloud(samples, j: int):
    """Bead-augmented points (q_{j-1}, q_j, q_{j+1}) with zeros at the walls, shape (n P, 3)."""
    snaps = _snapshots(samples)
    n, N, P = snaps.shape
    _check_j(j, N)
    pad = np.pad(snaps, ((0, 0), (1, 1), (0, 0)))
    pts = pad[:, j - 1 : j + 2, :]  # (n, 3, P)
    return np.moveaxis(pts, 1, 2).reshape(-1, 3)


def _check_j(j, N):
    if not 1 <= j <= N:
        raise ValueError(f"particle index {j} out of range 1..{N}")


def zeta_coefficients(samples, T: float, spec: ChainSpec, j: int, seed: int = 0,
                      zeta4_form: str = "anchor", zeta6_beads: str = "all") -> dict:
    """zeta_0..zeta_6 for particle j with blocked standard errors.

    zeta_2 is returned as the exact constant T; ``zeta2_mc`` holds the
    Monte-Carlo estimate of <p_{j,P}^2> from momenta at P T for comparison.
    """
    snaps = _snapshots(samples)
    n, N, P = snaps.shape
    _check_j(j, N)
    z0 = snaps[:, j - 1, :].mean(axis=1) ** 2
    pc = np.array([draw_momenta(seed, i, (N, P), T, P)[j - 1].mean() for i in range(n)])
    z2 = pc**2
    z4 = zeta4_terms(snaps, spec, j, zeta4_form)
    z6 = zeta6_terms(snaps, T, spec, j, zeta6_beads)

    def pack(x):
        return float(np.mean(x)), float(blocked_standard_error(x))

    out = {}
    out["zeta0"], out["zeta0_stderr"] = pack(z0)
    out["zeta2"], out["zeta2_stderr"] = float(T), 0.0
    out["zeta2_mc"], out["zeta2_mc_stderr"] = pack(z2)
    out["zeta4"], out["zeta4_stderr"] = pack(z4)
    out["zeta6"], out["zeta6_stderr"] = pack(z6)
    out.update(j=j, P=P, T=T, alpha=spec.alpha, n_samples=n)
    return out


def t6_expansion(zeta, t):
    """T_6(t) = sum_{l=0}^{3} (-1)^l zeta_{2l} t^{2l} / (2l)!.

    ``zeta`` is a mapping with keys zeta0..zeta6 or a sequence of the four values.
    """
    if isinstance(zeta, dict):
        z = [zeta[f"zeta{2 * l}"] for l in range(4)]
    else:
        z = list(zeta)
        if len(z) != 4:
            raise ValueError("need exactly zeta_0, zeta_2, zeta_4, zeta_6")
    if not all(np.isfinite(z)):
        raise ValueError("zeta coefficients must be finite")
    t = np.asarray(t, dtype=float)
    return sum((-1) ** l * z[l] * t ** (2 * l) / factorial(2 * l) for l in range(4))


def _cos_taylor_error(x):
    return abs(np.cos(x) - t6_expansion([1.0, 1.0, 1.0, 1.0], x))


def validity_horizon(epsilon: float, n_particles: int) -> float:
    """Smallest t at which some mode's cosine leaves its sixth-order Taylor polynomial by epsilon.

    The error depends on x = w_j t only, so the fastest mode w_N sets the
    horizon t = x*/w_N with x* the first root of |cos x - T_6(x)| = epsilon.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    grid = np.linspace(0.0, 20.0, 20001)
    err = np.array([_cos_taylor_error(x) for x in grid])
    idx = np.nonzero(err >= epsilon)[0]
    if len(idx) == 0:
        raise ValueError(f"epsilon={epsilon} is never reached")
    i = idx[0]
    x = optimize.brentq(lambda y: _cos_taylor_error(y) - epsilon, grid[i - 1], grid[i], xtol=1e-14)
    w = ModeBasis(n_particles).frequencies
    return float(x / w.max())
