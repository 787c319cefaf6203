import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hubbardlab.errors import CapExceededError, ConstructionError, DomainError, MixingError
from hubbardlab.exact_diag import build_hamiltonian, ground_state_energy
from hubbardlab.free_fermi import BoxSpec, orbital_basis
from hubbardlab.lattice_scattering import build_profile
from hubbardlab.trial_state import JastrowF, JastrowG, TrialState, build_f, build_g
from hubbardlab.variational import (
    decompose_terms,
    epsilon_optimize,
    epsilon_scaling_constant,
    rayleigh_exhaustive,
    rayleigh_sampled,
)


def make_state(shape, n, m, U=1.0, R=2.0, s=2.0):
    box = BoxSpec(shape)
    f = JastrowF.identity() if U == 0 else build_f(build_profile(U), R)
    g = JastrowG.identity() if s is None else build_g(s)
    return TrialState(orbital_basis(box, n), orbital_basis(box, m), f, g)


def fock_quotient(state, U):
    """<psi|H|psi>/<psi|psi> with psi written into the exact-diagonalisation Fock basis."""
    h = build_hamiltonian(state.box, state.n, state.m, U)
    c = state.box.coords()
    psi = np.zeros(h.basis.shape)
    for iu, mu in enumerate(h.basis.up):
        X = c[[v for v in range(state.box.n_sites) if int(mu) >> v & 1]]
        for idn, md in enumerate(h.basis.down):
            Y = c[[v for v in range(state.box.n_sites) if int(md) >> v & 1]]
            psi[iu, idn] = state.amplitude(X, Y)
    if h.allowed is not None:
        assert np.all(psi[~h.allowed] == 0)
    return float(np.sum(psi * h.apply(psi)) / np.sum(psi**2))


@pytest.mark.parametrize("U", [0.0, 1.0, 5.0, math.inf])
def test_quotient_matches_fock_space(U):
    state = make_state((3, 2, 2), 2, 2, U=U if U else 0.0)
    assert rayleigh_exhaustive(state, U).quotient == pytest.approx(fock_quotient(state, U), rel=1e-11)


def test_slater_product_is_free_energy():
    state = make_state(3, 3, 2, U=0.0, s=None)
    rep = rayleigh_exhaustive(state, 0.0)
    assert rep.quotient == pytest.approx(rep.free_kinetic, rel=1e-12)
    assert rep.I2 == 0 and rep.I3 == pytest.approx(0, abs=1e-14)


@pytest.mark.parametrize("U", [1.0, math.inf])
def test_upper_bound_on_ground_energy(U):
    state = make_state(3, 2, 2, U=U)
    e0 = ground_state_energy(build_hamiltonian(state.box, 2, 2, U)).energy
    assert rayleigh_exhaustive(state, U).quotient >= e0 - 1e-10


@pytest.mark.parametrize("U", [1.0, math.inf])
def test_kinetic_split_holds(U):
    rep = decompose_terms(make_state(3, 2, 2, U=U), U)
    assert rep.slack >= -1e-12 * abs(rep.numerator)
    assert rep.I2 > 0 and rep.I3 > 0


@settings(max_examples=8, deadline=None)
@given(st.floats(0.05, 20.0))
def test_split_holds_for_any_epsilon(eps):
    rep = decompose_terms(make_state((3, 3, 2), 2, 1, U=2.0), 2.0, eps=eps)
    assert rep.slack >= -1e-12 * abs(rep.numerator)


def test_optimal_epsilon_minimises_majorant():
    state = make_state((3, 3, 2), 2, 1, U=2.0)
    best = decompose_terms(state, 2.0)
    for e in (0.5 * best.epsilon, 2 * best.epsilon):
        assert decompose_terms(state, 2.0, eps=e).majorant >= best.majorant


def test_epsilon_optimize():
    eps, tot = epsilon_optimize(4.0, 1.0)
    assert eps == 0.5 and tot == pytest.approx(1.5 * 4 + 3 * 1)
    assert epsilon_optimize(0.0, 2.0) == (math.inf, 2.0)
    assert epsilon_optimize(2.0, 0.0) == (0.0, 2.0)
    with pytest.raises(DomainError):
        epsilon_optimize(-1.0, 1.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-6, 1e3), st.floats(1e-6, 1e3))
def test_epsilon_optimum_is_minimum(I2, I3):
    eps, tot = epsilon_optimize(I2, I3)
    assert tot == pytest.approx((math.sqrt(I2) + math.sqrt(I3)) ** 2, rel=1e-12)
    for e in (eps * 0.9, eps * 1.1):
        assert (1 + e) * I2 + (1 + 1 / e) * I3 >= tot * (1 - 1e-12)


def test_epsilon_scaling_constant_inverts_formula():
    const = epsilon_scaling_constant(0.3, 4, 3, 2.0, 10.0, 0.05)
    eps2 = const * 7 ** (8 / 3) * 8.0 / (100.0 * 0.05 * 12)
    assert eps2 == pytest.approx(0.09)


def test_exhaustive_cap_and_zero_state():
    with pytest.raises(CapExceededError):
        rayleigh_exhaustive(make_state(4, 3, 3), 1.0, cap=1000)
    with pytest.raises(ConstructionError):
        rayleigh_exhaustive(make_state((2, 2, 1), 3, 1, s=2.0), 1.0)


def test_hard_core_needs_vanishing_f():
    state = make_state(3, 1, 1, U=0.0, s=None)
    with pytest.raises(DomainError):
        rayleigh_exhaustive(state, math.inf)


def test_sampled_zero_variance_for_eigenstate():
    state = make_state(3, 2, 1, U=0.0, s=None)
    rep = rayleigh_sampled(state, 0.0, steps=2000)
    assert rep.quotient == pytest.approx(rep.free_kinetic, rel=1e-12)
    assert rep.error < 1e-10


def test_sampled_agrees_with_exhaustive():
    state = make_state(3, 2, 2, U=1.0)
    exact = rayleigh_exhaustive(state, 1.0).quotient
    rep = rayleigh_sampled(state, 1.0, steps=12000, seed=3)
    assert abs(rep.quotient - exact) <= 3 * rep.error
    assert 0.01 < rep.acceptance < 1


def test_sampled_is_reproducible():
    state = make_state(3, 1, 1, U=1.0, s=None)
    a = rayleigh_sampled(state, 1.0, steps=2000, seed=9)
    b = rayleigh_sampled(state, 1.0, steps=2000, seed=9)
    assert a == b


def test_sampled_errors():
    state = make_state(3, 1, 1, U=1.0, s=None)
    with pytest.raises(DomainError):
        rayleigh_sampled(state, 1.0, batches=5)
    with pytest.raises(ConstructionError):
        rayleigh_sampled(make_state((2, 2, 1), 3, 1, s=2.0), 1.0, steps=100)


def test_sampled_frozen_walk_raises_mixing_error():
    box = BoxSpec((2, 2, 1))
    full = TrialState(orbital_basis(box, 4), orbital_basis(box, 0), JastrowF.identity(), JastrowG.identity())
    with pytest.raises(MixingError):
        rayleigh_sampled(full, 0.0, steps=400)
