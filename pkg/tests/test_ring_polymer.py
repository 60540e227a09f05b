from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from qfpu.model import ChainSpec, chain_forces, chain_potential
from qfpu.ring_polymer import (
    RingPolymerState, harmonic_spring_energy, pimd_hamiltonian, rpmd_hamiltonian, spring_sum_primitive,
    spring_sum_staged, stage, staging_forces, staging_mass_product, staging_masses, unstage, unstage_matrix,
)

beads = st.integers(1, 12)


def bead_arrays(P, N=3):
    return arrays(float, (N, P), elements=st.floats(-3, 3))


@given(P=beads, data=st.data())
def test_staging_round_trip(P, data):
    q = data.draw(bead_arrays(P))
    np.testing.assert_allclose(unstage(stage(q)), q, rtol=0, atol=1e-12)
    np.testing.assert_allclose(stage(unstage(q)), q, rtol=0, atol=1e-12)


@given(P=beads, data=st.data())
def test_staging_decouples_springs(P, data):
    q = data.draw(bead_arrays(P))
    a = spring_sum_primitive(q)
    b = spring_sum_staged(stage(q))
    assert b == pytest.approx(a, rel=1e-10, abs=1e-10)


def test_staging_masses():
    s = staging_masses(4)
    np.testing.assert_allclose(s.mu, [0.0, 2.0, 1.5, 4.0 / 3.0])
    np.testing.assert_allclose(s.mu_prime, [1.0, 2.0, 1.5, 4.0 / 3.0])
    with pytest.raises(ValueError):
        staging_masses(0)


@pytest.mark.parametrize("P", [1, 2, 7, 64])
def test_staging_mass_product_telescopes(P):
    assert staging_mass_product(P) == Fraction(P)


@pytest.mark.parametrize("P", [1, 2, 5, 9])
def test_unstage_matrix_is_the_jacobian(P):
    J = unstage_matrix(P)
    cols = np.stack([unstage(np.eye(P)[i][None, :])[0] for i in range(P)], axis=1)
    np.testing.assert_allclose(J, cols, atol=1e-14)
    assert np.linalg.det(J) == pytest.approx(1.0)


@given(P=st.integers(1, 9), a=st.floats(0, 5), data=st.data())
def test_staging_forces_match_chain_rule(P, a, data):
    spec = ChainSpec(3, a)
    q = data.draw(bead_arrays(P))
    # -(1/P) dV/du = (1/P) J^T f with f the primitive forces
    expected = chain_forces(q, spec) @ unstage_matrix(P) / P
    np.testing.assert_allclose(staging_forces(q, spec), expected, rtol=1e-10, atol=1e-10)


def test_staging_forces_match_finite_differences(rng):
    spec = ChainSpec(3, 1.0)
    u = 0.3 * rng.normal(size=(3, 5))
    F = staging_forces(unstage(u), spec)
    h = 1e-6

    def energy(x):
        return float(np.sum(chain_potential(unstage(x), spec))) / 5

    for j in range(3):
        for k in range(5):
            e = np.zeros_like(u)
            e[j, k] = h
            fd = -(energy(u + e) - energy(u - e)) / (2 * h)
            assert F[j, k] == pytest.approx(fd, rel=1e-6, abs=1e-8)


def test_hamiltonians_share_the_configurational_part(rng):
    spec = ChainSpec(4, 0.7)
    T, P = 0.5, 6
    q = 0.4 * rng.normal(size=(4, P))
    zero = np.zeros_like(q)
    h_prim = pimd_hamiltonian(RingPolymerState(q, zero), T, spec)
    h_stag = pimd_hamiltonian(RingPolymerState(stage(q), zero, "staged"), T, spec)
    assert h_stag == pytest.approx(h_prim, rel=1e-12)
    # exp(-H_pimd/T) and exp(-H_rpmd/(PT)) are the same configurational weight
    assert rpmd_hamiltonian(RingPolymerState(q, zero), T, spec) == pytest.approx(P * h_prim, rel=1e-12)


def test_spring_energy_formula(rng):
    q = rng.normal(size=(2, 4))
    d = np.roll(q, -1, axis=1) - q
    assert harmonic_spring_energy(q, 0.3) == pytest.approx(0.5 * 0.09 * 4 * np.sum(d * d))
    assert harmonic_spring_energy(stage(q), 0.3, staged=True) == pytest.approx(harmonic_spring_energy(q, 0.3))


def test_state_conversions(rng):
    q = rng.normal(size=(3, 4))
    s = RingPolymerState(q, np.zeros_like(q))
    np.testing.assert_allclose(s.staged().positions(), q, atol=1e-12)
    np.testing.assert_allclose(s.staged().primitive().q, q, atol=1e-12)
    with pytest.raises(ValueError):
        RingPolymerState(q, np.zeros((3, 5)))
    with pytest.raises(ValueError):
        RingPolymerState(q, q, "normal")
    with pytest.raises(ValueError):
        rpmd_hamiltonian(s.staged(), 1.0, ChainSpec(3))


def test_single_bead_is_classical(rng):
    q = rng.normal(size=(5, 1))
    np.testing.assert_array_equal(stage(q), q)
    assert spring_sum_primitive(q) == 0.0
