"""The FPU chain: pair potential, chain forces and the sine normal-mode basis.

All quantities are dimensionless.  A configuration is an array whose first
axis runs over the N moving particles; the fixed ends q_0 = q_{N+1} = 0 are
never stored and are inserted on the fly.  Any trailing axes (beads, samples)
are carried along untouched, so the same functions serve a single chain, a
ring polymer of shape (N, P) or a stack of snapshots.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ChainSpecError(ValueError):
    pass


@dataclass(frozen=True)
class ChainSpec:
    """Lattice size and anharmonic couplings of the chain.

    ``beta`` defaults to ``alpha``.  Unequal couplings are refused unless
    ``allow_unequal`` is set, and a positive cubic term always needs a
    positive quartic term to keep the chain globally confined.
    """

    n_particles: int
    alpha: float = 0.0
    beta: float | None = None
    allow_unequal: bool = False

    def __post_init__(self):
        if self.beta is None:
            object.__setattr__(self, "beta", float(self.alpha))
        if int(self.n_particles) != self.n_particles or self.n_particles < 1:
            raise ChainSpecError(f"n_particles must be a positive integer, got {self.n_particles}")
        if self.alpha < 0 or self.beta < 0:
            raise ChainSpecError("alpha and beta must be non-negative")
        if not self.allow_unequal and self.alpha != self.beta:
            raise ChainSpecError(
                f"alpha={self.alpha} differs from beta={self.beta}; pass allow_unequal=True to override"
            )
        if self.alpha > 0 and self.beta <= 0:
            raise ChainSpecError("a cubic term needs beta > 0 for global confinement")
        object.__setattr__(self, "n_particles", int(self.n_particles))
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def is_harmonic(self) -> bool:
        return self.alpha == 0.0 and self.beta == 0.0


def pair_potential(r, spec: ChainSpec):
    """V(r) = r^2/2 + alpha r^3/3 + beta r^4/4."""
    r = np.asarray(r, dtype=float)
    r2 = r * r
    return 0.5 * r2 + spec.alpha / 3.0 * r2 * r + spec.beta / 4.0 * r2 * r2


def pair_force(r, spec: ChainSpec):
    """First derivative V'(r) = r + alpha r^2 + beta r^3."""
    r = np.asarray(r, dtype=float)
    return r + spec.alpha * r * r + spec.beta * r * r * r


def pair_stiffness(r, spec: ChainSpec):
    """Second derivative V''(r) = 1 + 2 alpha r + 3 beta r^2."""
    r = np.asarray(r, dtype=float)
    return 1.0 + 2.0 * spec.alpha * r + 3.0 * spec.beta * r * r


def minimum_displacement(spec: ChainSpec) -> float:
    """Location of the secondary minimum of V, which exists only for alpha >= 4 (alpha = beta)."""
    a = spec.alpha
    if a < 4.0:
        raise ChainSpecError(f"no secondary stationary point for alpha={a} < 4")
    return (-a - np.sqrt(a * a - 4.0 * a)) / (2.0 * a)


def bond_lengths(q):
    """Differences q_{j+1} - q_j for j = 0..N with the fixed ends inserted."""
    q = np.asarray(q, dtype=float)
    pad = [(1, 1)] + [(0, 0)] * (q.ndim - 1)
    return np.diff(np.pad(q, pad), axis=0)


def chain_potential(q, spec: ChainSpec):
    """Sum of the N+1 bond energies; reduces over the particle axis only."""
    return pair_potential(bond_lengths(q), spec).sum(axis=0)


def chain_forces(q, spec: ChainSpec):
    """F_j = -dV/dq_j = -V'(q_j - q_{j-1}) + V'(q_{j+1} - q_j)."""
    dv = pair_force(bond_lengths(q), spec)
    return dv[1:] - dv[:-1]


def chain_hessian_terms(q, spec: ChainSpec):
    """Nonzero entries of dF_j/dq_l for l = j-1, j, j+1.

    Returns three arrays shaped like ``q``: the sub-diagonal V''(q_j - q_{j-1}),
    the diagonal -V''(q_j - q_{j-1}) - V''(q_{j+1} - q_j) and the
    super-diagonal V''(q_{j+1} - q_j).  Entries that would couple to a fixed
    wall are still returned; the wall is not a degree of freedom, so callers
    that sum over neighbours should drop them when j = 1 or j = N.
    """
    k = pair_stiffness(bond_lengths(q), spec)
    left, right = k[:-1], k[1:]
    return left, -left - right, right


@dataclass(frozen=True)
class ModeBasis:
    """Sine transform that diagonalizes the harmonic chain with fixed ends."""

    n_particles: int
    frequencies: np.ndarray = field(init=False, repr=False)
    kernel: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = int(self.n_particles)
        if n < 1:
            raise ValueError("n_particles must be positive")
        j = np.arange(1, n + 1)
        omega = 2.0 * np.sin(np.pi * j / (2.0 * (n + 1)))
        kernel = np.sqrt(2.0 / (n + 1)) * np.sin(np.pi * np.outer(j, j) / (n + 1))
        omega.setflags(write=False)
        kernel.setflags(write=False)
        object.__setattr__(self, "frequencies", omega)
        object.__setattr__(self, "kernel", kernel)


def _check_length(x, basis: ModeBasis):
    x = np.asarray(x, dtype=float)
    if x.shape[0] != basis.n_particles:
        raise ValueError(f"expected leading axis of length {basis.n_particles}, got {x.shape[0]}")
    return x


def to_modes(x, basis: ModeBasis):
    """Mode amplitudes eta_j = sqrt(2/(N+1)) sum_l x_l sin(pi j l/(N+1))."""
    x = _check_length(x, basis)
    return np.tensordot(basis.kernel, x, axes=(1, 0))


def from_modes(eta, basis: ModeBasis):
    # the kernel is symmetric and orthogonal, so it is its own inverse
    eta = _check_length(eta, basis)
    return np.tensordot(basis.kernel, eta, axes=(1, 0))
