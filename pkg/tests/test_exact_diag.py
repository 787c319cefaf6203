import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hubbardlab.errors import CapExceededError, DomainError
from hubbardlab.exact_diag import (
    FockBasis,
    build_hamiltonian,
    eigsh_ground_energy,
    ground_state_energy,
    spin_sector_scan,
)
from hubbardlab.free_fermi import BoxSpec, sum_lowest


def jordan_wigner_energy(box, N, M, U):
    """Ground energy from dense second-quantised operators (Jordan-Wigner)."""
    V = box.n_sites
    L = 2 * V  # mode 2v is (v, up), 2v+1 is (v, down)
    a = np.array([[0.0, 1.0], [0.0, 0.0]])
    z = np.diag([1.0, -1.0])
    eye = np.eye(2)

    def annihilate(k):
        op = np.ones((1, 1))
        for j in range(L):
            op = np.kron(op, z if j < k else a if j == k else eye)
        return op

    c = [annihilate(k) for k in range(L)]
    num = [ck.T @ ck for ck in c]
    r0 = box.r0
    H = np.zeros((2**L, 2**L))
    nb = box.neighbours()
    for v in range(V):
        for s in (0, 1):
            H += 6.0 / r0**2 * num[2 * v + s]
            for w in nb[v]:
                if w >= 0:
                    H -= c[2 * v + s].T @ c[2 * w + s] / r0**2
        H += U * num[2 * v] @ num[2 * v + 1]
    n_up = sum(num[2 * v] for v in range(V)).diagonal()
    n_dn = sum(num[2 * v + 1] for v in range(V)).diagonal()
    keep = np.flatnonzero((n_up == N) & (n_dn == M))
    return np.linalg.eigvalsh(H[np.ix_(keep, keep)])[0]


@pytest.mark.parametrize("N,M", [(1, 1), (2, 1), (2, 2), (3, 1)])
@pytest.mark.parametrize("U", [0.0, 1.0, 7.5])
def test_against_jordan_wigner(N, M, U):
    box = BoxSpec((2, 2, 1))
    e = ground_state_energy(build_hamiltonian(box, N, M, U)).energy
    assert e == pytest.approx(jordan_wigner_energy(box, N, M, U), rel=1e-10)


def test_single_site():
    assert ground_state_energy(build_hamiltonian(BoxSpec(1), 1, 1, 2.5)).energy == pytest.approx(14.5, rel=1e-14)


@pytest.mark.parametrize("U", [0.0, 1.0, 4.0, 30.0])
def test_dimer(U):
    e = ground_state_energy(build_hamiltonian(BoxSpec((2, 1, 1)), 1, 1, U)).energy
    assert e == pytest.approx(12 + U / 2 - math.sqrt(4 + U * U / 4), rel=1e-12)


@pytest.mark.parametrize("shape,N,M", [(3, 2, 2), ((3, 2, 2), 3, 1), ((4, 2, 1), 2, 3)])
def test_zero_coupling_factorises(shape, N, M):
    box = BoxSpec(shape)
    e = ground_state_energy(build_hamiltonian(box, N, M, 0.0)).energy
    assert e == pytest.approx(sum_lowest(box, N) + sum_lowest(box, M), rel=1e-10)


def test_known_value_three_cube():
    box = BoxSpec(3)
    assert ground_state_energy(build_hamiltonian(box, 2, 2, 1.0)).energy == pytest.approx(9.966799314194, abs=1e-8)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_hamiltonian_symmetric(seed):
    h = build_hamiltonian(BoxSpec((3, 2, 2)), 2, 2, 1.3)
    rng = np.random.default_rng(seed)
    u, v = rng.normal(size=(2, h.basis.dimension))
    assert np.dot(u, h.matvec(v)) == pytest.approx(np.dot(h.matvec(u), v), rel=1e-11)


def test_monotone_in_coupling():
    box = BoxSpec((3, 2, 2))
    es = [ground_state_energy(build_hamiltonian(box, 2, 2, U)).energy for U in (0.0, 0.5, 2.0, 10.0, math.inf)]
    assert all(x <= y + 1e-10 for x, y in zip(es, es[1:]))


def test_lanczos_matches_dense_and_arpack():
    h = build_hamiltonian(BoxSpec((3, 3, 2)), 2, 1, 2.0)
    e = ground_state_energy(h, check_dense=False).energy
    assert e == pytest.approx(np.linalg.eigvalsh(h.to_dense())[0], abs=1e-9)
    assert e == pytest.approx(eigsh_ground_energy(h), abs=1e-8)


def test_projected_hard_core_matches_large_U_limit():
    box = BoxSpec((2, 2, 2))
    e_inf = ground_state_energy(build_hamiltonian(box, 2, 2, math.inf)).energy
    e_big = ground_state_energy(build_hamiltonian(box, 2, 2, 1e6)).energy
    assert e_inf == pytest.approx(e_big, rel=1e-4)
    assert e_inf >= e_big


def test_ground_vector_residual():
    h = build_hamiltonian(BoxSpec((3, 2, 2)), 2, 1, 3.0)
    g = ground_state_energy(h, return_vector=True)
    v = g.vector.ravel()
    assert np.linalg.norm(h.matvec(v) - g.energy * v) < 1e-7
    assert np.linalg.norm(v) == pytest.approx(1.0)


def test_index_round_trip():
    b = FockBasis.build(6, 2, 3)
    idx = np.arange(b.dimension)
    up, dn = b.masks(idx)
    np.testing.assert_array_equal(b.index(up, dn), idx)
    assert b.dimension == math.comb(6, 2) * math.comb(6, 3)


def test_doubles_count():
    b = FockBasis.build(4, 2, 2)
    d = b.doubles()
    brute = np.array([[bin(int(u) & int(v)).count("1") for v in b.down] for u in b.up])
    np.testing.assert_array_equal(d, brute)


def test_errors():
    with pytest.raises(CapExceededError):
        build_hamiltonian(BoxSpec(4), 4, 4, 1.0, cap=1000)
    with pytest.raises(DomainError):
        build_hamiltonian(BoxSpec(2), 1, 1, -1.0)
    with pytest.raises(DomainError):
        build_hamiltonian(BoxSpec(2, "periodic"), 1, 1, 1.0)
    with pytest.raises(DomainError):
        build_hamiltonian(BoxSpec((2, 1, 1)), 2, 1, math.inf)


def test_sector_scan_hard_core_two_particles():
    scan = spin_sector_scan(BoxSpec(3), 2, math.inf)
    assert scan.minimizer == 0
    splits = {r[2]: r[3] for r in scan.rows}
    assert splits[2] == splits[-2]
    assert scan.energy == pytest.approx(min(e for e in splits.values()))


def test_sector_scan_free_three_particles():
    box = BoxSpec((2, 2, 1))
    scan = spin_sector_scan(box, 3, 0.0)
    def e(k):
        return sum_lowest(box, k) if k else 0.0

    exact = min(e(N) + e(3 - N) for N in range(4))
    assert scan.energy == pytest.approx(exact, rel=1e-10)
    assert len(scan.rows) == 4
