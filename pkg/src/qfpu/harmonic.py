"""Closed-form reference results for the harmonic chain and the quartic site.

Particle and mode indices are 1-based (j = 1..N) to match the chain labels;
arrays returned per mode are ordered j = 1..N.  Every routine takes the
temperature T; inverse temperatures are only used internally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .model import ModeBasis

CLASSICAL = "classical"
QUANTUM = "quantum"


def _basis(n_particles: int) -> ModeBasis:
    return ModeBasis(n_particles)


def _omega(j, n_particles: int):
    j = np.asarray(j)
    if np.any(j < 1) or np.any(j > n_particles):
        raise ValueError(f"mode index out of range 1..{n_particles}: {j}")
    return 2.0 * np.sin(np.pi * j / (2.0 * (n_particles + 1)))


def _check_T(T):
    if not np.all(np.asarray(T) > 0):
        raise ValueError(f"temperature must be positive, got {T}")


def _quantum_variance(omega, T):
    # 1/(2 w tanh(w/2T)), written with coth to stay finite as T -> 0
    x = omega / (2.0 * T)
    return 0.5 / omega / np.tanh(x)


@dataclass(frozen=True)
class HarmonicEnsemble:
    n_particles: int
    T: float
    regime: str = QUANTUM

    def __post_init__(self):
        _check_T(self.T)
        if self.regime not in (CLASSICAL, QUANTUM):
            raise ValueError(f"regime must be 'classical' or 'quantum', got {self.regime!r}")

    @property
    def basis(self) -> ModeBasis:
        return _basis(self.n_particles)

    def mode_variances(self) -> np.ndarray:
        return mode_variance(np.arange(1, self.n_particles + 1), self.T, self.n_particles, self.regime)

    def position_covariance(self) -> np.ndarray:
        return position_covariance(self.T, self.n_particles, self.regime)


def mode_variance(j, T, n_particles: int, regime: str = QUANTUM):
    """sigma^2 of mode j: T/w^2 (classical) or 1/(2 w tanh(w/2T)) (quantum)."""
    _check_T(T)
    w = _omega(j, n_particles)
    if regime == CLASSICAL:
        return T / w**2
    if regime == QUANTUM:
        return _quantum_variance(w, T)
    raise ValueError(f"unknown regime {regime!r}")


def ground_state_mode_variance(j, n_particles: int):
    return 0.5 / _omega(j, n_particles)


def mode_distribution(eta, J, T, n_particles: int):
    """Thermal density of the modes in J at points ``eta`` (last axis runs over J)."""
    _check_T(T)
    eta = np.asarray(eta, dtype=float)
    w = _omega(np.atleast_1d(J), n_particles)
    if eta.shape[-1:] != w.shape:
        eta = eta[..., None]
    a = w * np.tanh(w / (2.0 * T))
    return np.prod(np.sqrt(a / np.pi) * np.exp(-a * eta**2), axis=-1)


def ground_state_distribution(eta, J, n_particles: int):
    """|psi_0|^2 product over the modes in J: (w/pi)^{1/2} exp(-w eta^2)."""
    eta = np.asarray(eta, dtype=float)
    w = _omega(np.atleast_1d(J), n_particles)
    if eta.shape[-1:] != w.shape:
        eta = eta[..., None]
    return np.prod(np.sqrt(w / np.pi) * np.exp(-w * eta**2), axis=-1)


def hermite_functions(x, omega: float, n_max: int) -> np.ndarray:
    """Normalized oscillator eigenfunctions psi_0..psi_{n_max} at x, shape (n_max+1, len(x))."""
    y = np.sqrt(omega) * np.asarray(x, dtype=float)
    out = np.empty((n_max + 1,) + y.shape)
    out[0] = (omega / np.pi) ** 0.25 * np.exp(-0.5 * y * y)
    if n_max >= 1:
        out[1] = np.sqrt(2.0) * y * out[0]
    for n in range(2, n_max + 1):
        out[n] = np.sqrt(2.0 / n) * y * out[n - 1] - np.sqrt((n - 1.0) / n) * out[n - 2]
    return out


def hermite_sum_density(eta, omega: float, T: float, n_max: int = 60):
    """Brute-force thermal density sum_n |psi_n|^2 e^{-n w/T} / Z, truncated at n_max.

    Returns (density, tail) where ``tail`` bounds the neglected Boltzmann
    weight relative to Z.
    """
    _check_T(T)
    psi = hermite_functions(eta, omega, n_max)
    x = np.exp(-omega / T)
    weights = x ** np.arange(n_max + 1)
    z = 1.0 / (1.0 - x)
    rho = np.tensordot(weights, psi**2, axes=(0, 0)) / z
    tail = x ** (n_max + 1)
    return rho, tail


def position_covariance(T, n_particles: int, regime: str = QUANTUM) -> np.ndarray:
    """Covariance matrix of the particle displacements, sum_l S_jl S_kl sigma_l^2."""
    b = _basis(n_particles)
    s2 = mode_variance(np.arange(1, n_particles + 1), T, n_particles, regime)
    return (b.kernel * s2) @ b.kernel.T


def position_variance(j, T, n_particles: int, regime: str = QUANTUM):
    """sigma_{q_j}^2 = sum_l sin^2(pi j l/(N+1)) / ((N+1) w_l tanh(w_l/2T)) in the quantum case."""
    _check_T(T)
    j = np.atleast_1d(j)
    _omega(j, n_particles)
    l = np.arange(1, n_particles + 1)
    w = _omega(l, n_particles)
    s2 = mode_variance(l, T, n_particles, regime)
    weight = 2.0 / (n_particles + 1) * np.sin(np.pi * np.outer(j, l) / (n_particles + 1)) ** 2
    out = weight @ s2
    return out if out.size > 1 else float(out[0])


def position_distribution(q, J, T, n_particles: int, regime: str = QUANTUM):
    """Joint Gaussian density of the displacements in J (last axis of ``q`` runs over J)."""
    J = np.atleast_1d(J)
    cov = position_covariance(T, n_particles, regime)[np.ix_(J - 1, J - 1)]
    q = np.asarray(q, dtype=float)
    if q.shape[-1:] != (len(J),):
        q = q[..., None]
    inv = np.linalg.inv(cov)
    quad = np.einsum("...i,ij,...j->...", q, inv, q)
    norm = np.sqrt((2.0 * np.pi) ** len(J) * np.linalg.det(cov))
    return np.exp(-0.5 * quad) / norm


def discretized_mode_variance(j, T, P: int, n_particles: int):
    """Exact single-bead variance of mode j in the harmonic ring polymer with P beads.

    sum_{n=0}^{P-1} T / (4 P^2 T^2 sin^2(pi n/P) + w_j^2); tends to the
    quantum value as P grows and equals T/w_j^2 at P = 1.
    """
    _check_T(T)
    w = np.atleast_1d(_omega(j, n_particles))
    n = np.arange(P)
    lam = 4.0 * P * P * T * T * np.sin(np.pi * n / P) ** 2
    out = np.sum(T / (lam[None, :] + w[:, None] ** 2), axis=1)
    return out if out.size > 1 else float(out[0])


def kubo_exact_mode(j, k, T, t, n_particles: int):
    """delta_jk T cos(w_j t) / w_j^2."""
    _check_T(T)
    t = np.asarray(t, dtype=float)
    if j != k:
        _omega(k, n_particles)
        return np.zeros_like(t)
    w = _omega(j, n_particles)
    return T * np.cos(w * t) / w**2


def kubo_exact_position(j, k, T, t, n_particles: int):
    """sum_l S_jl S_kl T cos(w_l t)/w_l^2 for particles j, k (general, not only j = k)."""
    _check_T(T)
    t = np.asarray(t, dtype=float)
    b = _basis(n_particles)
    _omega(np.array([j, k]), n_particles)
    w = b.frequencies
    c = b.kernel[j - 1] * b.kernel[k - 1] * T / w**2
    return np.tensordot(np.cos(np.multiply.outer(t, w)), c, axes=(-1, 0))


def rp_normal_frequencies(j, k, T, P: int, n_particles: int):
    """Omega_{j,k} = P T [4 sin^2(pi (k-1)/P) + w_j^2/(P^2 T^2)]^{1/2}."""
    _check_T(T)
    k = np.asarray(k)
    if np.any(k < 1) or np.any(k > P):
        raise ValueError(f"bead mode index out of range 1..{P}")
    w = _omega(j, n_particles)
    return P * T * np.sqrt(4.0 * np.sin(np.pi * (k - 1) / P) ** 2 + w**2 / (P * P * T * T))


def rp_force_matrix(T, P: int, n_particles: int) -> np.ndarray:
    """Dense NP x NP harmonic force-constant matrix of the ring polymer.

    Row-major labels i = N(k-1) + j.  The spring part is circulant,
    P^2 T^2 (2 delta_ii' - delta_{i', i+N} - delta_{i', i-N}) with indices mod NP,
    plus the chain stiffness (2, -1) inside every bead block.
    """
    N = n_particles
    D = N * P
    eye = np.eye(D)
    spring = 2.0 * eye - np.roll(eye, N, axis=1) - np.roll(eye, -N, axis=1)
    chain = 2.0 * np.eye(N) - np.eye(N, k=1) - np.eye(N, k=-1)
    return P * P * T * T * spring + np.kron(np.eye(P), chain)


def rpmd_harmonic_mode(j, T, t, n_particles: int, P: int = 1):
    """Centroid correlation of mode j under harmonic RPMD.

    The bead average of mode j is the ring-polymer normal mode with
    frequency Omega_{j,1}; its variance at temperature P T under the potential
    P w^2/2 eta^2 is T/w_j^2, so the correlator is that variance times
    cos(Omega_{j,1} t) for every P.
    """
    _check_T(T)
    w = _omega(j, n_particles)
    centroid_var = (P * T) / (P * w**2)
    return centroid_var * np.cos(rp_normal_frequencies(j, 1, T, P, n_particles) * np.asarray(t, dtype=float))


def rpmd_harmonic_position(j, T, t, n_particles: int, P: int = 1, k: int | None = None):
    """Bead-averaged position correlator <q_j(0) q_k(t)> under harmonic RPMD."""
    k = j if k is None else k
    b = _basis(n_particles)
    t = np.asarray(t, dtype=float)
    l = np.arange(1, n_particles + 1)
    modes = np.stack([rpmd_harmonic_mode(m, T, t, n_particles, P) for m in l], axis=-1)
    return np.tensordot(modes, b.kernel[j - 1] * b.kernel[k - 1], axes=(-1, 0))


# quartic single site, V_4(q) = q^2 + (alpha/2) q^4

def _quartic_z(T, alpha):
    _check_T(T)
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    return 1.0 / (4.0 * alpha * T)


def quartic_site_partition(T, alpha):
    """Z = e^z K_{1/4}(z)/sqrt(2 alpha) with z = 1/(4 alpha T); uses the scaled Bessel K."""
    z = _quartic_z(T, alpha)
    return special.kve(0.25, z) / np.sqrt(2.0 * alpha)


def quartic_site_moment(T, alpha):
    """<q^2> in the quartic site, (K_{3/4}(z)/K_{1/4}(z) - 1)/(2 alpha).

    Ratio form of the I-Bessel combination; it avoids the cancellation that
    combination suffers at small T.  For huge z the asymptotic series of the
    ratio takes over, which tends to T/2.
    """
    z = _quartic_z(T, alpha)
    if z > 1e8:
        # K_{3/4}/K_{1/4} = 1 + 1/(4z) - 1/(16 z^2) + O(z^-3)
        excess = 0.25 / z - 1.0 / (16.0 * z * z)
    else:
        excess = special.kve(0.75, z) / special.kve(0.25, z) - 1.0
    return excess / (2.0 * alpha)


def quartic_site_moment_bessel_i(T, alpha):
    """The same moment as a combination of I_nu; loses digits when T << 1."""
    z = _quartic_z(T, alpha)
    iv = special.iv
    bracket = -iv(-0.25, z) + (1.0 + 2.0 * alpha * T) * iv(0.25, z) - iv(0.75, z) + iv(1.25, z)
    return np.pi * bracket / (2.0 * np.sqrt(2.0) * alpha * special.kv(0.25, z))


def quartic_site_quadrature(T, alpha, power: int = 0):
    """Adaptive quadrature of int q^power exp(-V_4/T) dq (normalized moment for power > 0)."""
    _check_T(T)

    def weight(q):
        return np.exp(-(q * q + 0.5 * alpha * q**4) / T)

    z0, _ = integrate.quad(weight, -np.inf, np.inf, epsabs=0.0, epsrel=1e-13, limit=200)
    if power == 0:
        return z0
    m, _ = integrate.quad(lambda q: q**power * weight(q), -np.inf, np.inf, epsabs=0.0, epsrel=1e-13, limit=200)
    return m / z0
