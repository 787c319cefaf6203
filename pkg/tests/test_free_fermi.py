import math
from itertools import permutations, product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hubbardlab.errors import DomainError, PreconditionError
from hubbardlab.free_fermi import (
    BoxSpec,
    continuum_kinetic,
    density_square_constant,
    dirichlet_spectrum,
    fill,
    finite_box_energy_density,
    free_gas_energy_density,
    kinetic_bound_constant,
    orbital_basis,
    pair_density_constant,
    slater_densities,
    spectrum,
    sum_lowest,
    triple_density_constant,
)


def hopping_matrix(box):
    """Dense -Delta on the box sites, built from the neighbour table (independent of sine modes)."""
    V = box.n_sites
    H = np.diag(np.full(V, 6.0))
    nb = box.neighbours()
    for x in range(V):
        for y in nb[x]:
            if y >= 0:
                H[x, y] -= 1.0
    return H / box.r0**2


def test_single_site():
    spec = dirichlet_spectrum(BoxSpec(1))
    assert spec.eigenvalues.tolist() == pytest.approx([6.0])
    assert sum_lowest(BoxSpec(1), 1) == pytest.approx(6.0)


def test_two_sites_per_side_lowest():
    e = dirichlet_spectrum(BoxSpec(2)).eigenvalues
    assert e[0] == pytest.approx(3.0)
    assert e.size == 8
    assert e[-1] == pytest.approx(9.0)


def test_spacing_scaling():
    e1 = dirichlet_spectrum(BoxSpec(3)).eigenvalues
    e2 = dirichlet_spectrum(BoxSpec(3, r0=0.5)).eigenvalues
    assert np.allclose(e2, 4 * e1)


@pytest.mark.parametrize("M", [2, 3, 5])
def test_full_filling_is_trace(M):
    assert sum_lowest(BoxSpec(M), M**3) == pytest.approx(6.0 * M**3, rel=1e-12)


@pytest.mark.parametrize("shape,boundary", [(4, "dirichlet"), ((2, 3, 4), "dirichlet"), (4, "periodic"), ((3, 1, 2), "periodic")])
def test_spectrum_matches_dense_diagonalisation(shape, boundary):
    box = BoxSpec(shape, boundary)
    H = hopping_matrix(box)
    assert np.allclose(np.linalg.eigvalsh(H), spectrum(box).eigenvalues, atol=1e-12)


def test_regression_n7_m4():
    box = BoxSpec(4)
    dense = np.sort(np.linalg.eigvalsh(hopping_matrix(box)))[:7].sum()
    assert sum_lowest(box, 7) == pytest.approx(dense, rel=1e-13)
    c = 2 * (1 - math.cos(math.pi / 5))
    c2 = 2 * (1 - math.cos(2 * math.pi / 5))
    assert sum_lowest(box, 7) == pytest.approx(3 * c + 3 * (2 * c + c2) + 3 * (c + 2 * c2), rel=1e-13)


def test_tie_break_is_lexicographic():
    _, labels = fill(BoxSpec(4), 4)
    assert labels.tolist() == [[1, 1, 1], [1, 1, 2], [1, 2, 1], [2, 1, 1]]


def test_spectrum_symmetric_under_axis_permutation():
    spec = spectrum(BoxSpec(5))
    lookup = {tuple(l): e for l, e in zip(spec.labels.tolist(), spec.eigenvalues)}
    for lab, e in lookup.items():
        for p in permutations(lab):
            assert lookup[p] == pytest.approx(e, rel=1e-14)


def test_sum_lowest_range():
    with pytest.raises(DomainError):
        sum_lowest(BoxSpec(2), 0)
    with pytest.raises(DomainError):
        sum_lowest(BoxSpec(2), 9)


def test_dirichlet_spectrum_needs_dirichlet_box():
    with pytest.raises(PreconditionError):
        dirichlet_spectrum(BoxSpec(3, "periodic"))


def test_invalid_box():
    with pytest.raises(DomainError):
        BoxSpec(0)
    with pytest.raises(DomainError):
        BoxSpec(3, "open")


@pytest.mark.parametrize("box", [BoxSpec(5), BoxSpec((3, 4, 2), r0=0.7), BoxSpec(4, "periodic")])
def test_orbitals_orthonormal_eigenfunctions(box):
    n = min(20, box.n_sites)
    basis = orbital_basis(box, n)
    phi = basis.orbitals
    gram = box.r0**3 * phi.conj().T @ phi
    assert np.allclose(gram, np.eye(n), atol=1e-10)
    H = hopping_matrix(box)
    assert np.allclose(H @ phi, phi * basis.eigenvalues, atol=1e-10)


def test_kinetic_constant_m10_n50():
    C = kinetic_bound_constant(BoxSpec(10), 50)
    assert 0 < C <= 10
    box = BoxSpec(10)
    e_cont = continuum_kinetic(50, box.side)
    scale = 50 ** (-1 / 3) + 50 ** (2 / 3) / box.side**2
    assert sum_lowest(box, 50) <= e_cont * (1 + C * scale) * (1 + 1e-12)


def test_free_gas_trivial():
    assert free_gas_energy_density(0.0, 0.0) == 0.0
    rho = 0.01
    assert free_gas_energy_density(rho, 0.0) == pytest.approx(0.6 * (6 * math.pi**2) ** (2 / 3) * rho ** (5 / 3))


def test_density_ceiling():
    with pytest.raises(DomainError):
        free_gas_energy_density(0.6, 0.6)
    with pytest.raises(DomainError):
        free_gas_energy_density(-0.1, 0.0)


def test_finite_box_extrapolation_within_five_percent():
    d = finite_box_energy_density(0.005, 0.005, sizes=(8, 12, 16))
    assert d["extrapolated"] == pytest.approx(d["asymptote"], rel=0.05)
    # the raw finite boxes approach the asymptote from above
    assert d["ratios"][0] > d["ratios"][1] > d["ratios"][2] > 1


@pytest.mark.slow
def test_lattice_correction_scales_as_rho_seven_thirds():
    rhos = np.array([0.005, 0.01, 0.02])
    diff = []
    for r in rhos:
        d = finite_box_energy_density(r, r, sizes=(24, 32, 40))
        diff.append(d["asymptote"] - d["extrapolated"])
    slope = np.polyfit(np.log(rhos), np.log(diff), 1)[0]
    assert slope == pytest.approx(7 / 3, abs=0.15)


def test_density_normalisation_and_pauli():
    box = BoxSpec(4)
    basis = orbital_basis(box, 6)
    rho1 = slater_densities(basis, 1)
    sites = np.arange(box.n_sites)[:, None]
    assert box.r0**3 * rho1(sites).sum() == pytest.approx(6, abs=1e-10)
    rho2 = slater_densities(basis, 2)
    assert np.allclose(rho2(np.stack([sites[:, 0]] * 2, axis=1)), 0.0, atol=1e-14)


def test_two_body_normalisation():
    box = BoxSpec(3)
    basis = orbital_basis(box, 4)
    rho2 = slater_densities(basis, 2)
    V = box.n_sites
    pairs = np.array(list(product(range(V), repeat=2)))
    assert rho2(pairs).sum() == pytest.approx(math.comb(4, 2), rel=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 5), st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_densities_non_negative(M, k, seed):
    box = BoxSpec(M)
    n = min(box.n_sites, 3 + k)
    basis = orbital_basis(box, n)
    rho = slater_densities(basis, k)
    pts = np.random.default_rng(seed).integers(0, box.n_sites, size=(200, k))
    assert np.all(rho(pts) >= -1e-12)


def test_slater_k_range():
    basis = orbital_basis(BoxSpec(3), 2)
    with pytest.raises(DomainError):
        slater_densities(basis, 3)


def test_empirical_constants_finite():
    kin, sq = [], []
    for M in (6, 8, 10, 12):
        for n in (2, 5, 10, 20):
            kin.append(kinetic_bound_constant(BoxSpec(M), n))
            sq.append(density_square_constant(orbital_basis(BoxSpec(M), n)))
    assert np.all(np.isfinite(kin)) and np.all(np.isfinite(sq))
    assert max(sq) < 5 and max(kin) < 5


def test_pair_and_triple_constants():
    basis = orbital_basis(BoxSpec(5), 8)
    c2 = pair_density_constant(basis)
    c3 = triple_density_constant(basis)
    assert 0 < c2 < np.inf
    assert 0 < c3 < np.inf
    # a three-particle density cannot exceed the product bound (rho^(1))^3 / 3!
    rho1max = basis.density().max()
    dens = 8 / basis.box.side**3
    assert c3 <= rho1max**3 / 6 / dens**3 + 1e-12
