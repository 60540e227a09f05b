import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import solve_ivp

from qfpu.thermostat import (
    NHCParams, NHCState, ThermostatError, check_sy_conditions, default_tau, nhc_half_kernel, nhc_half_step,
    nhc_masses, sy_residuals, sy_weights, thermostat_energy,
)


def test_sy_weights_satisfy_order_conditions():
    w = sy_weights()
    assert len(w) == 7
    np.testing.assert_array_equal(w, w[::-1])
    assert max(abs(r) for r in sy_residuals(w)) < 1e-12


def test_sy_checks_reject_bad_weights():
    w = sy_weights().copy()
    w[3] += 1e-9
    with pytest.raises(ThermostatError):
        check_sy_conditions(w)
    with pytest.raises(ThermostatError):
        check_sy_conditions(np.array([0.5, 0.3, 0.2]))
    with pytest.raises(ThermostatError):
        sy_weights(4)


def test_default_tau_is_slowest_period():
    assert default_tau(8) == pytest.approx(18.091711043553783, rel=1e-14)


def test_masses_per_bead():
    Q = nhc_masses(0.5, 4, 2.0)
    np.testing.assert_allclose(Q, [4.0 * 0.5, 0.5, 0.5, 0.5])
    with pytest.raises(ThermostatError):
        nhc_masses(-1.0, 4, 1.0)
    with pytest.raises(ThermostatError):
        nhc_masses(1.0, 4, 1.0, M=1)


def test_params_validation():
    with pytest.raises(ThermostatError):
        NHCParams(M=1)
    with pytest.raises(ThermostatError):
        NHCParams(n_respa=0)
    with pytest.raises(ThermostatError):
        NHCParams(tau_tilde=0.0)
    assert NHCParams().tau_for(8) == default_tau(8)
    assert NHCParams(tau_tilde=1.5).masses(1.0, 1, 8)[0] == 2.25


def _random_chain(rng, N=3, P=4, M=5, T=0.7):
    p = rng.normal(size=(N, P))
    nhc = NHCState(rng.normal(size=(N, P, M)), rng.normal(size=(N, P, M)))
    mu = np.linspace(1.0, 2.0, P)
    Q = nhc_masses(T, P, 1.3, M)
    return p, nhc, mu, Q, T


def _kernel(p, nhc, mu, Q, T, dt, w, n_r):
    p = p.copy()
    out = nhc.copy()
    nhc_half_kernel(p, out.eta, out.p_eta, mu, Q, T, dt, w, n_r)
    return p, out


@pytest.mark.parametrize("n_r", [1, 3])
def test_compiled_kernel_matches_reference(rng, n_r):
    p, nhc, mu, Q, T = _random_chain(rng)
    w = sy_weights()
    p1, a = nhc_half_step(p, nhc, mu, Q, T, 0.05, w, n_r)
    p2, b = _kernel(p, nhc, mu, Q, T, 0.05, w, n_r)
    np.testing.assert_allclose(p2, p1, rtol=1e-13, atol=1e-14)
    np.testing.assert_allclose(b.p_eta, a.p_eta, rtol=1e-13, atol=1e-14)
    np.testing.assert_allclose(b.eta, a.eta, rtol=1e-13, atol=1e-14)


def test_update_order_of_independent_chains_is_irrelevant(rng):
    # permuting particles, or running each particle on its own, is bitwise identical
    p, nhc, mu, Q, T = _random_chain(rng, N=5)
    w = sy_weights()
    p_all, all_ = _kernel(p, nhc, mu, Q, T, 0.08, w, 2)
    perm = rng.permutation(5)
    p_perm, perm_ = _kernel(p[perm], NHCState(nhc.eta[perm], nhc.p_eta[perm]), mu, Q, T, 0.08, w, 2)
    np.testing.assert_array_equal(p_perm, p_all[perm])
    np.testing.assert_array_equal(perm_.p_eta, all_.p_eta[perm])
    for j in range(5):
        pj, sj = _kernel(p[j:j + 1], NHCState(nhc.eta[j:j + 1], nhc.p_eta[j:j + 1]), mu, Q, T, 0.08, w, 2)
        np.testing.assert_array_equal(pj[0], p_all[j])
        np.testing.assert_array_equal(sj.eta[0], all_.eta[j])


def _exact_flow(p0, eta0, peta0, mu, Q, T, t):
    M = len(eta0)

    def rhs(_, y):
        p, eta, pe = y[0], y[1:M + 1], y[M + 1:]
        G = np.empty(M)
        G[0] = p * p / mu - T
        G[1:] = pe[:-1] ** 2 / Q - T
        dpe = G.copy()
        dpe[:-1] -= pe[:-1] * pe[1:] / Q
        return np.concatenate([[-p * pe[0] / Q], pe / Q, dpe])

    y0 = np.concatenate([[p0], eta0, peta0])
    sol = solve_ivp(rhs, (0, t), y0, method="DOP853", rtol=1e-13, atol=1e-14)
    y = sol.y[:, -1]
    return y[0], y[1:M + 1], y[M + 1:]


def _half_step_error(dt, weights, M=2):
    p0, mu, Q, T = 1.3, 1.5, 0.8, 0.9
    eta0 = np.array([0.1, -0.2, 0.05, 0.0, 0.3])[:M]
    pe0 = np.array([0.4, -0.7, 0.2, 0.1, -0.3])[:M]
    pe, eta = pe0[None, None, :].copy(), eta0[None, None, :].copy()
    p = np.array([[p0]])
    nhc_half_kernel(p, eta, pe, np.array([mu]), np.array([Q]), T, dt, np.asarray(weights), 1)
    ref = _exact_flow(p0, eta0, pe0, mu, Q, T, dt / 2)
    return max(abs(p[0, 0] - ref[0]), np.max(np.abs(eta[0, 0] - ref[1])), np.max(np.abs(pe[0, 0] - ref[2])))


@pytest.mark.parametrize("M", [2, 5])
def test_half_step_matches_runge_kutta_oracle(M):
    assert _half_step_error(0.05, sy_weights(), M) < 1e-11


def test_suzuki_yoshida_raises_the_order():
    w6 = sy_weights()
    e6 = [_half_step_error(dt, w6) for dt in (0.8, 0.4)]
    e2 = [_half_step_error(dt, [1.0]) for dt in (0.8, 0.4)]
    # local errors scale as dt^7 and dt^3
    assert np.log2(e6[0] / e6[1]) > 6.0
    assert 2.5 < np.log2(e2[0] / e2[1]) < 3.5


@given(dt=st.floats(0.001, 0.02), seed=st.integers(0, 2**16))
def test_thermostat_flow_conserves_its_energy(dt, seed):
    rng = np.random.default_rng(seed)
    p, nhc, mu, Q, T = _random_chain(rng, N=2, P=3)
    e0 = 0.5 * np.sum(p**2 / mu) + thermostat_energy(nhc, Q, T)
    p1, out = _kernel(p, nhc, mu, Q, T, dt, sy_weights(), 1)
    e1 = 0.5 * np.sum(p1**2 / mu) + thermostat_energy(out, Q, T)
    assert abs(e1 - e0) < 1e-8 * max(1.0, abs(e0))


def test_state_validation():
    with pytest.raises(ThermostatError):
        NHCState(np.zeros((2, 2, 3)), np.zeros((2, 2, 4)))
    with pytest.raises(ThermostatError):
        NHCState.zeros(2, 2, 1)
    s = NHCState.zeros(2, 3, 4)
    c = s.copy()
    c.eta[0, 0, 0] = 1.0
    assert s.eta[0, 0, 0] == 0.0
