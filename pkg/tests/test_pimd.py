import numpy as np
import pytest

from qfpu import harmonic as ho
from qfpu.estimators import mode_second_moments
from qfpu.model import ChainSpec
from qfpu.pimd import (
    NumericalAbort, SamplerConfig, SampleSet, advance, autocorrelation, conserved, init_state, integrated_time,
    pilot, positions, read_archive, run, step, tune_timestep, write_archive,
)
from qfpu.ring_polymer import RingPolymerState, pimd_hamiltonian
from qfpu.thermostat import NHCParams

from conftest import FAST_NHC, short_config


@pytest.mark.parametrize("kw", [dict(T=0.0), dict(P=0), dict(P=1.5), dict(dt=-1.0), dict(stride=0),
                                dict(n_burn=-1), dict(n_samples=0)])
def test_config_validation(kw):
    args = dict(chain=ChainSpec(4), T=1.0)
    args.update(kw)
    with pytest.raises(ValueError):
        SamplerConfig(**args)


def test_default_dt_scales_with_spring_frequency():
    assert SamplerConfig(ChainSpec(4), 1.0, 16).default_dt() == pytest.approx(0.05 / 8)
    assert SamplerConfig(ChainSpec(4), 0.01, 1).default_dt() == 0.05


def test_initial_state():
    cfg = short_config(P=6)
    s = init_state(cfg)
    assert s.u.shape == (8, 6) and s.nhc.p_eta.shape == (8, 6, 5)
    np.testing.assert_array_equal(positions(s), 0.0)
    np.testing.assert_array_equal(init_state(cfg).p, s.p)


def test_conserved_energy_matches_ring_polymer_hamiltonian(rng):
    cfg = short_config(alpha=0.5, P=4, thermostat=False)
    s = init_state(cfg)
    s.u[:] = 0.1 * rng.normal(size=s.u.shape)
    h = pimd_hamiltonian(RingPolymerState(s.u, s.p, "staged"), cfg.T, cfg.chain)
    assert conserved(s, cfg) == pytest.approx(h, rel=1e-13)


def test_microcanonical_dynamics_is_time_reversible(rng):
    cfg = short_config(alpha=1.0, P=4, thermostat=False)
    s = init_state(cfg)
    s.u[:] = 0.1 * rng.normal(size=s.u.shape)
    u0, p0 = s.u.copy(), s.p.copy()
    advance(s, cfg, 500)
    s.p *= -1
    advance(s, cfg, 500)
    np.testing.assert_allclose(s.u, u0, atol=1e-10)
    np.testing.assert_allclose(-s.p, p0, atol=1e-10)


def test_thermostatted_dynamics_is_time_reversible():
    cfg = short_config(alpha=1.0, P=3)
    s = init_state(cfg)
    advance(s, cfg, 200)
    ref = s.copy()
    advance(s, cfg, 300)
    s.p *= -1
    s.nhc.p_eta *= -1
    advance(s, cfg, 300)
    np.testing.assert_allclose(s.u, ref.u, atol=1e-9)
    np.testing.assert_allclose(s.nhc.eta, ref.nhc.eta, atol=1e-9)


@pytest.mark.parametrize("thermostat", [True, False])
def test_extended_energy_is_conserved(thermostat):
    cfg = short_config(alpha=5.0, T=0.5, P=4, dt=0.002, thermostat=thermostat)
    s = init_state(cfg)
    h0 = conserved(s, cfg)
    worst = 0.0
    for _ in range(20):
        advance(s, cfg, 100)
        worst = max(worst, abs(conserved(s, cfg) - h0) / abs(h0))
    assert worst < 1e-5


def test_step_is_one_advance():
    cfg = short_config(P=2)
    s = init_state(cfg)
    t = step(s, cfg)
    advance(s, cfg, 1)
    np.testing.assert_array_equal(t.u, s.u)
    np.testing.assert_array_equal(t.nhc.p_eta, s.nhc.p_eta)


def test_huge_time_step_aborts():
    cfg = short_config(alpha=5.0, T=5.0, P=2, dt=5.0)
    s = init_state(cfg)
    with pytest.raises(NumericalAbort, match="time step"):
        advance(s, cfg, 2000)


def test_tuning_halves_until_the_drift_is_small():
    cfg = SamplerConfig(ChainSpec(8, 5.0), 1.0, 4, nhc=FAST_NHC, tune_steps=500, drift_tol=1e-6)
    s = init_state(cfg)
    dt, n_r, drift = tune_timestep(cfg, s)
    assert dt < cfg.default_dt()
    assert drift < 0.25e-6
    fixed = SamplerConfig(ChainSpec(8, 5.0), 1.0, 4, dt=0.01)
    assert tune_timestep(fixed, init_state(fixed))[0] == 0.01


def test_tuning_gives_up():
    cfg = SamplerConfig(ChainSpec(8, 5.0), 1.0, 4, tune_steps=200, drift_tol=1e-15, max_halvings=1)
    with pytest.raises(NumericalAbort):
        tune_timestep(cfg, init_state(cfg))


def test_pilot_sets_burn_in_and_stride():
    cfg = short_config(n_burn=None, stride=None, pilot_steps=4000)
    s = init_state(cfg)
    burn, stride, info = pilot(cfg, s)
    assert burn >= 10 and stride >= 1
    assert info["pilot_steps"] == 4000


def test_autocorrelation_tools(rng):
    white = rng.normal(size=20000)
    assert integrated_time(white) == pytest.approx(1.0, abs=0.15)
    phi = 0.8
    x = np.empty(200000)
    x[0] = 0.0
    e = rng.normal(size=len(x))
    for i in range(1, len(x)):
        x[i] = phi * x[i - 1] + e[i]
    # 1 + 2 sum phi^k = (1 + phi)/(1 - phi)
    assert integrated_time(x) == pytest.approx(9.0, rel=0.1)
    rho = autocorrelation(x, 4)
    np.testing.assert_allclose(rho, phi ** np.arange(4), atol=0.02)


def test_runs_are_deterministic():
    cfg = short_config(n_samples=20, n_burn=100, stride=5)
    a, b = run(cfg), run(cfg)
    np.testing.assert_array_equal(a.snapshots, b.snapshots)
    c = run(short_config(n_samples=20, n_burn=100, stride=5, seed=4))
    assert not np.array_equal(a.snapshots, c.snapshots)


def test_sample_set_contents(harmonic_samples):
    s = harmonic_samples
    assert s.snapshots.shape == (600, 8, 4)
    assert s.relative_drift() < 1e-4
    eq = np.asarray(s.meta["equipartition"]) / s.T
    assert abs(eq.mean() - 1.0) < 0.05
    both = s.concatenate(s)
    assert both.n_samples == 1200
    with pytest.raises(ValueError):
        s.concatenate(SampleSet(s.snapshots[:, :4], s.config, s.conserved, s.potential))


def test_harmonic_ring_polymer_variances(harmonic_samples):
    m, se = mode_second_moments(harmonic_samples)
    ref = ho.discretized_mode_variance(np.arange(1, 9), 1.0, 4, 8)
    assert np.all(np.abs(m - ref) < 4 * se)


def test_archive_round_trip(tmp_path):
    s = run(short_config(n_samples=7, n_burn=10, stride=3))
    path = tmp_path / "a.qfs"
    write_archive(path, s)
    head, snaps = read_archive(path)
    np.testing.assert_array_equal(snaps, s.snapshots)
    assert head["N"] == 8 and head["P"] == 4 and head["n_samples"] == 7 and head["dt"] == 0.01
    text = path.read_text().splitlines()
    assert text[0] == "QFPU-SNAPSHOTS 1"
    assert len(text[-1].split()) == 32


def test_archive_errors(tmp_path):
    bad = tmp_path / "bad.qfs"
    bad.write_text("HELLO 1\n")
    with pytest.raises(ValueError, match="not a snapshot archive"):
        read_archive(bad)
    empty = tmp_path / "empty.qfs"
    empty.write_text("QFPU-SNAPSHOTS 1\nN=2\nP=1\nn_samples=0\nEND\n")
    with pytest.raises(ValueError, match="no snapshots"):
        read_archive(empty)
    short = tmp_path / "short.qfs"
    short.write_text("QFPU-SNAPSHOTS 1\nN=2\nP=2\nEND\n1 2 3\n")
    with pytest.raises(ValueError, match="record length"):
        read_archive(short)
