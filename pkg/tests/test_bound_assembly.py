import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hubbardlab.bound_assembly import (
    BRACKET_EXPONENTS,
    assemble,
    assemble_strong,
    assemble_weak,
    calibrate,
    choose_parameters,
    localize,
    plane_wave_interaction,
    polarization_curve,
    power_law_fit,
    regime,
)
from hubbardlab.constants import get_constant, load_registry
from hubbardlab.errors import DomainError, PreconditionError, RegimeError
from hubbardlab.free_fermi import BoxSpec, free_gas_energy_density
from hubbardlab.lattice_scattering import scattering_length

A_HARD = scattering_length(math.inf)
A_ONE = scattering_length(1.0)


def rho_for(x, a):
    return (x / a) ** 3


def test_parameters_power_laws():
    a = 0.3
    p = choose_parameters(0.5 * rho_for(1e-3, a), 0.5 * rho_for(1e-3, a), a)
    assert p.R / a == pytest.approx(1e-3 ** (-2 / 9), rel=1e-12)
    assert p.R / a == pytest.approx(4.6416, rel=1e-4)
    assert p.side * rho_for(1e-3, a) ** (1 / 3) == pytest.approx(4641.6, rel=1e-4)
    assert p.s / p.R == 6.0


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-6, 1e-2), st.floats(0.0, 1.0))
def test_particle_numbers_round_up(x, frac):
    a = 0.2
    rho = rho_for(x, a)
    p = choose_parameters(frac * rho, (1 - frac) * rho, a)
    assert 0 <= p.eps_up < 1 and 0 <= p.eps_down < 1
    assert p.n == pytest.approx(frac * rho * p.side**3 + p.eps_up, rel=1e-12, abs=1e-6)


def test_integer_occupation_has_zero_remainder():
    a = 0.2
    p = choose_parameters(0.5 * rho_for(1e-2, a), 0.5 * rho_for(1e-2, a), a)
    rho_up = 7.0 / p.side**3
    # keep the box side fixed by holding the total density; only the split moves
    q = choose_parameters(rho_up, rho_for(1e-2, a) - rho_up, a)
    assert q.n == 7 and q.eps_up == pytest.approx(0.0, abs=1e-9)


def test_parameter_errors():
    with pytest.raises(DomainError):
        choose_parameters(0.0, 0.0, 0.3)
    with pytest.raises(DomainError):
        choose_parameters(-1e-3, 1e-3, 0.3)
    with pytest.raises(RegimeError):
        choose_parameters(1.0, 1.0, 1.0)


def test_registry_is_complete():
    entries = load_registry()["entries"]
    for name in ("gamma", "kinetic", "inte3", "2pdd", "triple", "lemma2", "lemma3", "xi", "I3"):
        assert entries[name]["value"] >= 0
        assert entries[name]["grid"]
    assert get_constant("gamma") == pytest.approx(0.126365505, rel=1e-8)


def test_calibration_quick(tmp_path):
    path = calibrate(tmp_path / "c.json", quick=True)
    data = json.loads(path.read_text())
    assert data["version"] == 1
    assert all(e["value"] == pytest.approx(e["safety"] * max(e["raw"], 0)) for e in data["entries"].values())


def test_strong_bound_above_leading_terms():
    rho = rho_for(1e-9, A_HARD)
    rep = assemble_strong(0.5 * rho, 0.5 * rho, math.inf, strict=False)
    assert rep.total >= rep.e0 + rep.interaction
    assert all(v >= 0 for v in rep.brackets.values())
    assert rep.epsilon > 0


def test_strong_strict_rejects_weak_regime_and_large_brackets():
    rho = rho_for(1e-3, A_HARD)
    with pytest.raises(RegimeError, match="weak regime"):
        assemble_strong(0.5 * rho, 0.5 * rho, math.inf)
    # the regime holds at tiny x but the confinement bracket is still large
    rho = rho_for(1e-9, A_HARD)
    assert regime(A_HARD, rho) == "strong"
    with pytest.raises(RegimeError, match="confinement"):
        assemble_strong(0.5 * rho, 0.5 * rho, math.inf)


def test_strong_single_species_has_no_interaction():
    rho = rho_for(1e-4, A_HARD)
    rep = assemble_strong(0.0, rho, math.inf, strict=False)
    assert rep.params.n == 0 and rep.params.eps_up == 0
    assert rep.terms["pair"] == 0 and rep.terms["pair_errors"] == 0 and rep.terms["same_spin"] == 0
    assert rep.total >= free_gas_energy_density(0.0, rho)


def test_epsilon_exponent():
    xs = np.logspace(-5, -2, 7)
    eps = [assemble_strong(0.5 * rho_for(x, A_HARD), 0.5 * rho_for(x, A_HARD), math.inf, strict=False).epsilon for x in xs]
    assert power_law_fit(xs, eps)[0] == pytest.approx(2 / 9, abs=0.02)


@pytest.mark.parametrize("name", sorted(BRACKET_EXPONENTS))
def test_bracket_exponents(name):
    xs = np.logspace(-8, -5, 7)
    reps = [assemble_strong(0.4 * rho_for(x, A_HARD), 0.6 * rho_for(x, A_HARD), math.inf, strict=False) for x in xs]
    vals = [r.brackets[name] for r in reps]
    p, _ = power_law_fit(xs, vals)
    assert p == pytest.approx(BRACKET_EXPONENTS[name], rel=0.05)


def test_weak_bound_values():
    rho = rho_for(1e-3, A_ONE)
    rep = assemble_weak(0.5 * rho, 0.5 * rho, 1.0)
    assert rep.total == pytest.approx(rep.e0 + rep.interaction * (1 + rep.gamma), rel=1e-12)
    assert rep.total == pytest.approx(rep.e0 + 0.25 * rho**2, rel=1e-12)
    zero = assemble_weak(0.5 * rho, 0.5 * rho, 0.0)
    assert zero.total == zero.e0


def test_weak_correction_factor_small_coupling():
    rho = rho_for(1e-3, scattering_length(0.1))
    rep = assemble_weak(0.5 * rho, 0.5 * rho, 0.1)
    assert (rep.total - rep.e0) / rep.interaction == pytest.approx(1.0126366, rel=1e-6)


def test_plane_wave_interaction_exact():
    for N, M in ((2, 2), (3, 5), (7, 1)):
        box = BoxSpec(4, "periodic")
        assert plane_wave_interaction(box, N, M) == pytest.approx(N * M / 64, abs=1e-12)


def test_weak_rejects_strong_regime():
    rho = rho_for(1e-9, A_HARD)
    with pytest.raises(RegimeError):
        assemble_weak(0.5 * rho, 0.5 * rho, math.inf)


@pytest.mark.parametrize("U", [0.5, 1.0, 5.0, math.inf])
@pytest.mark.parametrize("x", [1e-9, 1e-6, 1e-3])
def test_exactly_one_branch_accepts(U, x):
    a = scattering_length(U)
    rho = rho_for(x, a)
    ok = 0
    for fn in (assemble_strong, assemble_weak):
        try:
            fn(0.5 * rho, 0.5 * rho, U)
            ok += 1
        except RegimeError as err:
            if "regime" not in str(err):
                ok += 1  # branch accepted, but a bracket is large
    assert ok == 1


def test_weak_monotone_in_coupling():
    rho = 1e-6
    totals = [assemble(0.5 * rho, 0.5 * rho, U).total for U in (0.0, 0.5, 1.0, 2.0, 10.0)]
    assert all(x <= y for x, y in zip(totals, totals[1:]))


def test_localize():
    assert localize(3.0, 2.0) == pytest.approx(3.0 / 8)
    assert localize(8 * 3.0, 2.0) * 8 == pytest.approx(8 * localize(3.0, 2.0) * 8)
    assert localize(3.0, 2.0, 6.0) == localize(3.0, 2.0)
    with pytest.raises(PreconditionError, match="6 or 8"):
        localize(3.0, 2.0, 7.0)


def test_polarization_exponent_and_monotone():
    pts = polarization_curve([rho_for(x, A_ONE) for x in (1e-2, 1e-3, 1e-4)], 1.0)
    z = [p.zeta_max for p in pts]
    assert z[0] > z[1] > z[2] > 0
    assert 0.45 <= power_law_fit([p.x for p in pts], z)[0] <= 0.55


def test_polarization_free_gas_is_balanced():
    (pt,) = polarization_curve([1e-4], 0.0)
    assert pt.zeta_max == 0.0 and pt.zeta_opt == pytest.approx(0.0, abs=1e-6)
