"""Massive Nose-Hoover chains on every (j, k) degree of freedom.

Each staging coordinate carries its own chain of M thermostats.  The chain
propagator for half a time step is built from a Suzuki-Yoshida composition of
the elementary map S (seven weights, sixth order) with n_R RESPA substeps:

    exp(iL_NHC dt/2) = prod_a [S(w_a dt / (2 n_R))]^{n_R}

Thermostat arrays have shape (N, P, M); the momenta they act on are (N, P).
Chains on different (j, k) never talk to each other, which is what makes the
per-dof loop order irrelevant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import nhc_half_kernel  # noqa: F401  (compiled twin of nhc_half_step)

# Yoshida's solution A for the 7-stage symmetric sixth-order composition
_SY6_OUTER = (0.784513610477560, 0.235573213359357, -1.17767998417887)

SY_TOLERANCE = 1e-12


class ThermostatError(ValueError):
    pass


def sy_weights(order: int = 6) -> np.ndarray:
    """Palindromic Suzuki-Yoshida weights, verified before they are returned.

    Only the seven-stage sixth-order scheme is available.  The weights must
    satisfy sum w = 1 and sum w^3 = sum w^5 = 0 to within 1e-12.
    """
    if order != 6:
        raise ThermostatError(f"unsupported Suzuki-Yoshida order {order}; only 6 is available")
    w1, w2, w3 = _SY6_OUTER
    w0 = 1.0 - 2.0 * (w1 + w2 + w3)
    w = np.array([w1, w2, w3, w0, w3, w2, w1])
    check_sy_conditions(w)
    return w


def sy_residuals(w) -> tuple[float, float, float]:
    w = np.asarray(w, dtype=float)
    return float(w.sum() - 1.0), float(np.sum(w**3)), float(np.sum(w**5))


def check_sy_conditions(w, tol: float = SY_TOLERANCE) -> None:
    w = np.asarray(w, dtype=float)
    if not np.array_equal(w, w[::-1]):
        raise ThermostatError("Suzuki-Yoshida weights are not palindromic")
    res = sy_residuals(w)
    if max(abs(r) for r in res) > tol:
        raise ThermostatError(f"Suzuki-Yoshida order conditions violated: residuals {res}")


def default_tau(n_particles: int) -> float:
    """One period of the slowest harmonic mode, 2 pi / omega_1."""
    return 2.0 * np.pi / (2.0 * np.sin(np.pi / (2.0 * (n_particles + 1))))


def nhc_masses(T: float, P: int, tau_tilde: float, M: int = 5) -> np.ndarray:
    """Thermostat masses per bead: tau^2 T on bead 1, 1/(P T) on beads 2..P.

    Returns shape (P,); every particle j and every chain position shares the
    value of its bead.
    """
    if not T > 0:
        raise ThermostatError(f"temperature must be positive, got {T}")
    if P < 1:
        raise ThermostatError(f"P must be >= 1, got {P}")
    if not tau_tilde > 0:
        raise ThermostatError(f"tau_tilde must be positive, got {tau_tilde}")
    if M < 2:
        raise ThermostatError(f"chain length M must be >= 2, got {M}")
    Q = np.full(P, 1.0 / (P * T))
    Q[0] = tau_tilde * tau_tilde * T
    return Q


@dataclass(frozen=True)
class NHCParams:
    M: int = 5
    tau_tilde: float | None = None
    n_respa: int = 5
    order: int = 6

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 2:
            raise ThermostatError(f"chain length M must be an integer >= 2, got {self.M}")
        if int(self.n_respa) != self.n_respa or self.n_respa < 1:
            raise ThermostatError(f"n_respa must be a positive integer, got {self.n_respa}")
        if self.tau_tilde is not None and not self.tau_tilde > 0:
            raise ThermostatError(f"tau_tilde must be positive, got {self.tau_tilde}")
        sy_weights(self.order)

    @property
    def weights(self) -> np.ndarray:
        return sy_weights(self.order)

    def tau_for(self, n_particles: int) -> float:
        return default_tau(n_particles) if self.tau_tilde is None else float(self.tau_tilde)

    def masses(self, T: float, P: int, n_particles: int) -> np.ndarray:
        return nhc_masses(T, P, self.tau_for(n_particles), self.M)


@dataclass
class NHCState:
    """Thermostat positions and momenta, both shaped (N, P, M)."""

    eta: np.ndarray
    p_eta: np.ndarray

    def __post_init__(self):
        self.eta = np.array(self.eta, dtype=float)
        self.p_eta = np.array(self.p_eta, dtype=float)
        if self.eta.ndim != 3 or self.eta.shape != self.p_eta.shape:
            raise ThermostatError("eta and p_eta must be matching (N, P, M) arrays")
        if self.eta.shape[2] < 2:
            raise ThermostatError("chain length M must be >= 2")

    @classmethod
    def zeros(cls, N: int, P: int, M: int) -> "NHCState":
        return cls(np.zeros((N, P, M)), np.zeros((N, P, M)))

    def copy(self) -> "NHCState":
        return NHCState(self.eta.copy(), self.p_eta.copy())


def _chain_S(p, mu, eta, p_eta, Q, T, h):
    # one application of S over time h, vectorized over all (j, k)
    M = p_eta.shape[-1]

    def g(gamma):
        if gamma == 0:
            return p * p / mu - T
        return p_eta[..., gamma - 1] ** 2 / Q - T

    p_eta[..., M - 1] += 0.5 * h * g(M - 1)
    for gamma in range(M - 2, -1, -1):
        s = np.exp(-0.25 * h * p_eta[..., gamma + 1] / Q)
        p_eta[..., gamma] = (p_eta[..., gamma] * s + 0.5 * h * g(gamma)) * s
    p = p * np.exp(-h * p_eta[..., 0] / Q)
    eta += h * p_eta / Q[:, None]
    for gamma in range(M - 1):
        s = np.exp(-0.25 * h * p_eta[..., gamma + 1] / Q)
        p_eta[..., gamma] = (p_eta[..., gamma] * s + 0.5 * h * g(gamma)) * s
    p_eta[..., M - 1] += 0.5 * h * g(M - 1)
    return p


def nhc_half_step(p, nhc: NHCState, mu_prime, Q, T: float, dt: float, weights, n_respa: int):
    """Propagate the thermostat Liouvillian for dt/2 (reference implementation).

    ``p`` are staging momenta (N, P), ``mu_prime`` the kinetic masses (P,),
    ``Q`` the bead thermostat masses (P,).  Returns the new momenta and a new
    NHCState; the inputs are left untouched.
    """
    p = np.array(p, dtype=float)
    out = nhc.copy()
    mu = np.asarray(mu_prime, dtype=float)
    Q = np.asarray(Q, dtype=float)
    for w in weights:
        h = w * dt / (2.0 * n_respa)
        for _ in range(n_respa):
            p = _chain_S(p, mu, out.eta, out.p_eta, Q, T, h)
    return p, out


def thermostat_energy(nhc: NHCState, Q, T: float) -> float:
    """sum over (j, k, gamma) of p_eta^2/(2Q) + T eta."""
    Q = np.asarray(Q, dtype=float)[None, :, None]
    return float(np.sum(0.5 * nhc.p_eta**2 / Q + T * nhc.eta))


def conserved_energy(state, nhc: NHCState, T: float, spec, Q) -> float:
    """Extended energy H' = H_pimd + thermostat energy for a staged state."""
    from .ring_polymer import pimd_hamiltonian

    if state.representation != "staged":
        raise ThermostatError("conserved_energy expects a staged RingPolymerState")
    return pimd_hamiltonian(state, T, spec) + thermostat_energy(nhc, Q, T)
