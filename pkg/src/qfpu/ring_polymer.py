"""Ring-polymer isomorphism of the chain.

Bead arrays have shape (N, P): axis 0 is the particle index j (fixed ends),
axis 1 the bead index k (cyclic, q^{P+1} = q^1).  In C order the bead index
runs fastest.  ``stage``/``unstage`` act on the last axis, so stacks of
snapshots with shape (..., N, P) are accepted too.

Two Hamiltonians live on the same bead configurations:

``pimd``  sum_k [p^2/(2 mu'_k) + mu_k P T^2 u_k^2/2 + V(q^k)/P], weight exp(-H/T)
``rpmd``  sum_k [p^2/2 + P^2 T^2 (q^{k+1}-q^k)^2/2 + V(q^k)],   weight exp(-H/(P T))

Both give the same configurational measure; they differ by the overall factor
P that the real-time dynamics needs.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .model import ChainSpec, chain_forces, chain_potential


@dataclass(frozen=True)
class StagingMassSchedule:
    mu: np.ndarray
    mu_prime: np.ndarray

    @property
    def n_beads(self) -> int:
        return len(self.mu)


def staging_masses(n_beads: int) -> StagingMassSchedule:
    """mu_1 = 0, mu_k = k/(k-1); mu'_1 = 1, mu'_k = mu_k."""
    if n_beads < 1:
        raise ValueError("n_beads must be >= 1")
    k = np.arange(1, n_beads + 1, dtype=float)
    mu = np.zeros(n_beads)
    mu[1:] = k[1:] / (k[1:] - 1.0)
    mu_prime = mu.copy()
    mu_prime[0] = 1.0
    return StagingMassSchedule(mu, mu_prime)


def staging_mass_product(n_beads: int) -> Fraction:
    """Exact product of the kinetic masses mu'_k (telescopes to P)."""
    out = Fraction(1)
    for k in range(2, n_beads + 1):
        out *= Fraction(k, k - 1)
    return out


def stage(q):
    """Primitive bead positions -> staging variables along the last axis."""
    q = np.asarray(q, dtype=float)
    P = q.shape[-1]
    u = q.copy()
    if P == 1:
        return u
    k = np.arange(2, P + 1, dtype=float)
    q_next = np.roll(q, -1, axis=-1)[..., 1:]  # q^{k+1}, cyclic
    u[..., 1:] = q[..., 1:] - ((k - 1.0) * q_next + q[..., :1]) / k
    return u


def unstage(u):
    """Staging variables -> primitive bead positions (backward recursion)."""
    u = np.asarray(u, dtype=float)
    P = u.shape[-1]
    q = u.copy()
    if P == 1:
        return q
    u1 = u[..., 0]
    q[..., P - 1] = u[..., P - 1] + u1
    for k in range(P - 1, 1, -1):  # 1-based bead k, stored at k-1
        q[..., k - 1] = u[..., k - 1] + (k - 1.0) / k * q[..., k] + u1 / k
    return q


def unstage_matrix(n_beads: int) -> np.ndarray:
    """Dense Jacobian dq^m/du^n of the closed-form inverse (unit upper triangular)."""
    P = n_beads
    J = np.zeros((P, P))
    J[:, 0] = 1.0
    for m in range(2, P + 1):
        for n in range(m, P + 1):
            J[m - 1, n - 1] = (m - 1.0) / (n - 1.0)
    return J


def spring_sum_primitive(q):
    """sum_k (q^{k+1} - q^k)^2 over beads and particles."""
    q = np.asarray(q, dtype=float)
    d = np.roll(q, -1, axis=-1) - q
    return np.sum(d * d, axis=(-2, -1))


def spring_sum_staged(u):
    """sum_{k>=2} k/(k-1) (u^k)^2, equal to the primitive spring sum."""
    u = np.asarray(u, dtype=float)
    mu = staging_masses(u.shape[-1]).mu
    return np.sum(mu * u * u, axis=(-2, -1))


def harmonic_spring_energy(x, T: float, staged: bool = False):
    """Inter-bead spring energy T^2 P/2 * sum (q^{k+1}-q^k)^2 in either representation."""
    P = np.shape(x)[-1]
    s = spring_sum_staged(x) if staged else spring_sum_primitive(x)
    return 0.5 * T * T * P * s


def primitive_gradient(q, spec: ChainSpec):
    """dV(q^k)/dq_j^k for every bead, shape (N, P)."""
    return -chain_forces(q, spec)


def staging_forces(q, spec: ChainSpec):
    """Physical force in staging space, -(1/P) dV(q(u))/du_j^k.

    ``q`` holds primitive positions.  Bead 1 receives the bead-averaged
    primitive force; for k >= 2 the recursion
    F_k = (k-2)/(k-1) F_{k-1} + f_k / P runs over the primitive forces f_k.
    """
    f = chain_forces(np.asarray(q, dtype=float), spec)
    P = f.shape[-1]
    out = np.empty_like(f)
    out[..., 0] = f.sum(axis=-1) / P
    if P > 1:
        out[..., 1] = f[..., 1] / P
        for k in range(3, P + 1):
            out[..., k - 1] = (k - 2.0) / (k - 1.0) * out[..., k - 2] + f[..., k - 1] / P
    return out


@dataclass
class RingPolymerState:
    """Bead positions and momenta, shape (N, P), in one representation.

    ``representation`` is "primitive" or "staged".  Momenta of a staged state
    are conjugate to the staging variables (masses mu'_k); momenta of a
    primitive state carry unit mass.
    """

    q: np.ndarray
    p: np.ndarray
    representation: str = "primitive"

    def __post_init__(self):
        self.q = np.array(self.q, dtype=float)
        self.p = np.array(self.p, dtype=float)
        if self.q.ndim != 2 or self.q.shape != self.p.shape:
            raise ValueError(f"q and p must be matching (N, P) arrays, got {self.q.shape}, {self.p.shape}")
        if self.representation not in ("primitive", "staged"):
            raise ValueError(f"unknown representation {self.representation!r}")

    @property
    def n_particles(self) -> int:
        return self.q.shape[0]

    @property
    def n_beads(self) -> int:
        return self.q.shape[1]

    def positions(self) -> np.ndarray:
        """Primitive bead positions regardless of representation."""
        return unstage(self.q) if self.representation == "staged" else self.q.copy()

    def staged(self) -> "RingPolymerState":
        if self.representation == "staged":
            return RingPolymerState(self.q, self.p, "staged")
        return RingPolymerState(stage(self.q), self.p, "staged")

    def primitive(self) -> "RingPolymerState":
        if self.representation == "primitive":
            return RingPolymerState(self.q, self.p, "primitive")
        return RingPolymerState(unstage(self.q), self.p, "primitive")


def pimd_hamiltonian(state: RingPolymerState, T: float, spec: ChainSpec) -> float:
    """Sampling Hamiltonian of the isomorphism (weight exp(-H/T)).

    A staged state uses kinetic masses mu'_k and the decoupled springs; a
    primitive state uses unit masses and the primitive spring sum.  The
    configurational parts agree exactly.
    """
    P = state.n_beads
    q = state.positions()
    pot = float(np.sum(chain_potential(q, spec))) / P
    if state.representation == "staged":
        sched = staging_masses(P)
        kin = 0.5 * float(np.sum(state.p**2 / sched.mu_prime))
        spring = float(harmonic_spring_energy(state.q, T, staged=True))
    else:
        kin = 0.5 * float(np.sum(state.p**2))
        spring = float(harmonic_spring_energy(q, T))
    return kin + spring + pot


def rpmd_hamiltonian(state: RingPolymerState, T: float, spec: ChainSpec) -> float:
    """Real-time ring-polymer Hamiltonian (weight exp(-H/(P T)), unit masses)."""
    if state.representation != "primitive":
        raise ValueError("rpmd_hamiltonian needs primitive coordinates and momenta")
    P = state.n_beads
    q = state.q
    kin = 0.5 * float(np.sum(state.p**2))
    spring = 0.5 * P * P * T * T * float(spring_sum_primitive(q))
    pot = float(np.sum(chain_potential(q, spec)))
    return kin + spring + pot
