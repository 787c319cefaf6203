r"""Exact ground states of the Hubbard Hamiltonian on small boxes.

.. math:: H = -\Delta_X - \Delta_Y + U \sum_x n_{x\uparrow} n_{x\downarrow}

with Dirichlet walls: each particle carries the diagonal ``6/r0^2`` and hops
with amplitude ``-1/r0^2`` to neighbouring sites inside the box; hops that
would leave the box are dropped.

The Fock basis is a pair of occupation bitmasks (one per spin, bit ``i`` =
site ``i`` in lexicographic order, so at most 64 sites). A state vector is
stored as a ``(C(V,N), C(V,M))`` matrix ``Psi[up, down]`` and the
Hamiltonian acts as

    H Psi = T_up Psi + Psi T_down^T + U (doubles * Psi),

where ``T_sigma`` is the sparse one-species hopping matrix including the
fermionic sign of moving a particle past the occupied sites in between.
``U = inf`` is handled by projecting out doubly occupied configurations.
"""
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, eigsh

from .errors import CapExceededError, ConvergenceError, DomainError, InvariantError
from .free_fermi import BoxSpec

__all__ = [
    "DIMENSION_CAP",
    "FockBasis",
    "SparseHamiltonian",
    "GroundState",
    "SectorScan",
    "build_hamiltonian",
    "ground_state_energy",
    "spin_sector_scan",
    "eigsh_ground_energy",
]

DIMENSION_CAP = 20_000_000
DENSE_LIMIT = 2000
_VECTOR_BUDGET = 600_000_000  # bytes for the Krylov basis


def _masks(V, N):
    """All ``N``-subsets of ``V`` sites as sorted uint64 bitmasks."""
    if N == 0:
        return np.zeros(1, dtype=np.uint64)
    out = np.fromiter(
        (sum(1 << i for i in c) for c in combinations(range(V), N)), dtype=np.uint64, count=math.comb(V, N)
    )
    return np.sort(out)


@dataclass(frozen=True, eq=False)
class FockBasis:
    """Occupation bitmasks for ``n_up`` and ``n_down`` fermions on ``n_sites`` sites."""

    n_sites: int
    n_up: int
    n_down: int
    up: np.ndarray = field(repr=False)
    down: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, n_sites, n_up, n_down, cap=DIMENSION_CAP):
        if n_sites > 64:
            raise DomainError("bitmask basis supports at most 64 sites")
        if not (0 <= n_up <= n_sites and 0 <= n_down <= n_sites):
            raise DomainError(f"particle numbers ({n_up}, {n_down}) do not fit on {n_sites} sites")
        dim = math.comb(n_sites, n_up) * math.comb(n_sites, n_down)
        if dim > cap:
            raise CapExceededError(f"Fock dimension {dim} exceeds cap {cap}")
        return cls(n_sites, n_up, n_down, _masks(n_sites, n_up), _masks(n_sites, n_down))

    @property
    def shape(self):
        return (self.up.size, self.down.size)

    @property
    def dimension(self):
        return self.up.size * self.down.size

    def index(self, up_mask, down_mask):
        """Flat index of a pair of bitmasks (row-major in ``(up, down)``)."""
        iu = np.searchsorted(self.up, np.asarray(up_mask, dtype=np.uint64))
        idn = np.searchsorted(self.down, np.asarray(down_mask, dtype=np.uint64))
        return iu * self.down.size + idn

    def masks(self, index):
        """Inverse of :meth:`index`."""
        iu, idn = np.divmod(np.asarray(index), self.down.size)
        return self.up[iu], self.down[idn]

    def doubles(self):
        """Number of doubly occupied sites for every basis state, shape ``self.shape``."""
        return np.bitwise_count(self.up[:, None] & self.down[None, :]).astype(float)


def _hopping(box, masks):
    """Sparse one-species hopping matrix (without the diagonal) in a mask basis."""
    r0 = box.r0
    nb = box.neighbours()
    rows, cols, vals = [], [], []
    one = np.uint64(1)
    for i in range(box.n_sites):
        bi = one << np.uint64(i)
        occ = (masks & bi) != 0
        if not occ.any():
            continue
        src = masks[occ]
        src_idx = np.nonzero(occ)[0]
        for j in set(int(v) for v in nb[i] if v >= 0):
            bj = one << np.uint64(j)
            ok = (src & bj) == 0
            if not ok.any():
                continue
            m = src[ok]
            lo, hi = min(i, j), max(i, j)
            between = ((one << np.uint64(hi)) - (one << np.uint64(lo + 1))) if hi > lo + 1 else np.uint64(0)
            sign = 1.0 - 2.0 * (np.bitwise_count(m & between) % 2)
            new = m ^ bi ^ bj
            rows.append(np.searchsorted(masks, new))
            cols.append(src_idx[ok])
            vals.append(-sign / r0**2)
    n = masks.size
    if not rows:
        return sp.csr_matrix((n, n))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


@dataclass(frozen=True, eq=False)
class SparseHamiltonian:
    """Hubbard Hamiltonian acting on ``Psi[up, down]`` matrices.

    ``allowed`` is None for finite ``U``; for ``U = inf`` it marks the
    configurations without double occupancy.
    """

    box: BoxSpec
    basis: FockBasis
    U: float
    t_up: sp.csr_matrix = field(repr=False)
    t_down: sp.csr_matrix = field(repr=False)
    diagonal: np.ndarray = field(repr=False)
    allowed: object = field(repr=False, default=None)

    @property
    def projected(self):
        return self.allowed is not None

    @property
    def dimension(self):
        """Dimension of the (projected) Hilbert space."""
        if self.allowed is None:
            return self.basis.dimension
        return int(self.allowed.sum())

    def apply(self, psi):
        """``H psi`` for ``psi`` of shape ``basis.shape``."""
        out = self.t_up @ psi + (self.t_down @ psi.T).T + self.diagonal * psi
        if self.allowed is not None:
            out = out * self.allowed
        return out

    def matvec(self, v):
        return self.apply(np.asarray(v).reshape(self.basis.shape)).ravel()

    def operator(self):
        n = self.basis.dimension
        return LinearOperator((n, n), matvec=self.matvec, dtype=float)

    def to_sparse(self):
        """Explicit sparse matrix on the full (unprojected) product basis."""
        nu, nd = self.basis.shape
        H = sp.kron(self.t_up, sp.identity(nd)) + sp.kron(sp.identity(nu), self.t_down)
        return (H + sp.diags(self.diagonal.ravel())).tocsr()

    def to_dense(self):
        """Dense matrix on the (projected) basis; for small dimensions only."""
        if self.dimension > 8000:
            raise CapExceededError("dense matrix requested for a large Hilbert space")
        H = self.to_sparse()
        if self.allowed is not None:
            keep = np.flatnonzero(self.allowed.ravel())
            H = H[keep][:, keep]
        return H.toarray()


def build_hamiltonian(box, n_up, n_down, U, cap=DIMENSION_CAP):
    """Assemble the sparse Hubbard Hamiltonian for ``(n_up, n_down)`` on ``box``.

    ``U`` may be ``math.inf`` (hard core, projected basis).
    """
    U = float(U)
    if math.isnan(U) or U < 0:
        raise DomainError(f"U must be >= 0, got {U}")
    if box.boundary != "dirichlet":
        raise DomainError("exact diagonalisation uses Dirichlet boxes")
    basis = FockBasis.build(box.n_sites, n_up, n_down, cap)
    t_up = _hopping(box, basis.up)
    t_down = t_up if (n_down == n_up) else _hopping(box, basis.down)
    doubles = basis.doubles()
    kinetic = 6.0 * (n_up + n_down) / box.r0**2
    allowed = None
    if math.isinf(U):
        allowed = doubles == 0
        if not allowed.any():
            raise DomainError("no configuration without double occupancy (N + M > V)")
        diagonal = np.full(basis.shape, kinetic)
    else:
        diagonal = kinetic + U * doubles
    return SparseHamiltonian(box, basis, U, t_up, t_down, diagonal, allowed)


@dataclass(frozen=True)
class GroundState:
    energy: float
    residual: float
    iterations: int
    dimension: int
    vector: object = field(default=None, repr=False)


def _lanczos(h, tol, max_restarts, krylov, rng):
    shape = h.basis.shape
    size = h.basis.dimension
    mask = None if h.allowed is None else h.allowed.ravel()
    v = rng.standard_normal(size)
    if mask is not None:
        v = v * mask
    v /= np.linalg.norm(v)
    Q = np.empty((krylov, size))
    iterations = 0
    theta = math.nan
    res = math.inf
    for _ in range(max_restarts):
        Q[0] = v
        alpha, beta = [], []
        k = 0
        while True:
            iterations += 1
            w = h.apply(Q[k].reshape(shape)).ravel()
            alpha.append(float(Q[k] @ w))
            # full reorthogonalisation against the whole Krylov basis, done twice
            for _rep in range(2):
                w -= Q[: k + 1].T @ (Q[: k + 1] @ w)
            b = float(np.linalg.norm(w))
            if k == krylov - 1 or b < 1e-14:
                break
            beta.append(b)
            k += 1
            Q[k] = w / b
        T = np.diag(alpha) + np.diag(beta, 1) + np.diag(beta, -1)
        evals, evecs = np.linalg.eigh(T)
        theta = float(evals[0])
        v = evecs[:, 0] @ Q[: k + 1]
        v /= np.linalg.norm(v)
        r = h.apply(v.reshape(shape)).ravel() - theta * v
        res = float(np.linalg.norm(r))
        if res <= tol:
            return theta, v.reshape(shape), res, iterations
    raise ConvergenceError(f"Lanczos residual {res:.3g} above tol {tol:g} after {max_restarts} restarts", (theta, res))


def ground_state_energy(h, tol=1e-8, max_restarts=200, return_vector=False, seed=0, check_dense=True):
    """Lowest eigenvalue of ``h`` by restarted Lanczos with full reorthogonalisation.

    Parameters
    ----------
    h : SparseHamiltonian
    tol : float
        Required residual ``||H v - E v||`` for the unit Ritz vector.
    check_dense : bool
        For dimensions up to 2000 compare with a dense eigensolver and raise
        :class:`InvariantError` on disagreement.

    Returns
    -------
    GroundState
    """
    dim = h.dimension
    rng = np.random.default_rng(seed)
    if dim == 1:
        psi = np.zeros(h.basis.shape)
        psi.ravel()[0 if h.allowed is None else int(np.flatnonzero(h.allowed.ravel())[0])] = 1.0
        e = float(np.vdot(psi, h.apply(psi)))
        return GroundState(e, 0.0, 0, 1, psi if return_vector else None)
    krylov = int(max(8, min(60, dim, _VECTOR_BUDGET // (8 * h.basis.dimension))))
    energy, vec, res, its = _lanczos(h, tol, max_restarts, krylov, rng)
    if check_dense and dim <= DENSE_LIMIT:
        e_dense = float(np.linalg.eigvalsh(h.to_dense())[0])
        if abs(e_dense - energy) > max(10 * tol, 1e-9 * abs(e_dense)):
            raise InvariantError("lanczos_vs_dense", f"Lanczos {energy!r} vs dense {e_dense!r}")
    return GroundState(energy, res, its, dim, vec if return_vector else None)


def eigsh_ground_energy(h, tol=1e-10):
    """Cross-check with ARPACK (``scipy.sparse.linalg.eigsh``); unprojected only."""
    if h.projected:
        raise DomainError("ARPACK cross-check is only wired for finite U")
    val = eigsh(h.operator(), k=1, which="SA", tol=tol, return_eigenvectors=False)
    return float(val[0])


@dataclass(frozen=True)
class SectorScan:
    """Ground energies per ``(N, M)`` split at fixed ``N + M``.

    ``rows`` holds ``(N, M, N - M, energy)``; skipped sectors have energy None.
    ``minimizer`` is the largest ``|N - M|`` among sectors attaining the
    minimum (ties within ``1e-9``), a proxy for ``2S``.
    """

    rows: list
    minimizer: int
    energy: float


def spin_sector_scan(box, total, U, cap=DIMENSION_CAP, tol=1e-8):
    """Ground energy of every spin split ``N + M = total``."""
    V = box.n_sites
    if not 0 < total <= 2 * V:
        raise DomainError(f"total particle number {total} outside (0, {2 * V}]")
    energies = {}
    for N in range(total, -1, -1):
        M = total - N
        if N > V or M > V or N < M:
            continue
        try:
            h = build_hamiltonian(box, N, M, U, cap=cap)
            energies[(N, M)] = ground_state_energy(h, tol=tol).energy
        except CapExceededError:
            energies[(N, M)] = None
        except DomainError:
            if not math.isinf(float(U)):
                raise
            energies[(N, M)] = None
    rows = []
    for N in range(total + 1):
        M = total - N
        if N > V or M > V:
            continue
        e = energies[(max(N, M), min(N, M))]
        rows.append((N, M, N - M, e))
    done = [r for r in rows if r[3] is not None]
    if not done:
        raise CapExceededError("every sector exceeded the dimension cap")
    emin = min(r[3] for r in done)
    ties = [abs(r[2]) for r in done if r[3] - emin <= 1e-9 * max(1.0, abs(emin))]
    return SectorScan(rows=rows, minimizer=max(ties), energy=emin)
