r"""The Jastrow-Slater trial state for the dilute Hubbard gas.

.. math:: \Psi(X, Y) = D_n(X) D_m(Y)\, G_n(X) G_m(Y)\, F(X, Y),

with ``D`` free-fermion Slater determinants, ``G_n(X) = prod_{i<j} g(x_i - x_j)``
a same-spin cutoff and ``F(X, Y) = prod_{i,j} f(x_i - y_j)`` the opposite-spin
Jastrow factor. ``f`` is the zero-energy scattering solution ``phi`` rescaled
by its average on the boundary of ``Omega = {x : phi(x) <= 1 - a/R}`` and set
to one outside ``Omega``.

Positions are integer lattice coordinates; ``r0`` converts them to lengths.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstructionError, DomainError, PreconditionError
from .lattice_scattering import _NEIGHBOURS, _is_simply_connected, flux_through

__all__ = [
    "JastrowF",
    "JastrowG",
    "TrialState",
    "XiReport",
    "build_f",
    "build_g",
    "evaluate_psi",
    "xi_sum",
    "boundary_tolerance",
    "max_bond_increment",
]

MIN_OMEGA_SITES = 7


def boundary_tolerance(a, R, r0):
    """``10 a r0 / R^2``, the allowed spread of phi on the boundary of Omega."""
    return 10.0 * a * r0 / R**2


def _lookup(table, offsets, outside):
    """Cube-table lookup at integer offsets, ``outside`` beyond the table."""
    x = np.asarray(offsets, dtype=int)
    w = (table.shape[0] - 1) // 2
    inside = np.all(np.abs(x) <= w, axis=-1)
    idx = np.where(inside[..., None], x + w, 0)
    vals = table[idx[..., 0], idx[..., 1], idx[..., 2]]
    return np.where(inside, vals, outside)


@dataclass(frozen=True, eq=False)
class JastrowF:
    """Opposite-spin Jastrow factor.

    Attributes
    ----------
    a, R, r0, U : float
        Scattering length, domain radius, lattice spacing and coupling.
    omega : ndarray of int, shape (N, 3)
        Sites of ``Omega``.
    boundary : ndarray of int, shape (B, 3)
        Sites of ``Omega`` with a nearest neighbour outside ``Omega``.
    boundary_avg : float
        Average of phi over ``boundary``.
    table : ndarray
        ``f`` on the cube ``|x_i| <= w``; ``f = 1`` beyond it.
    fallback : bool
        True when ``Omega`` was too small and replaced by the origin.
    """

    a: float
    R: float
    r0: float
    U: float
    omega: np.ndarray = field(repr=False)
    boundary: np.ndarray = field(repr=False)
    boundary_avg: float
    table: np.ndarray = field(repr=False)
    fallback: bool = False

    def __call__(self, offsets):
        return _lookup(self.table, offsets, 1.0)

    @property
    def half_width(self):
        return (self.table.shape[0] - 1) // 2

    @classmethod
    def identity(cls, r0=1.0):
        """``f = 1`` everywhere (no interaction)."""
        table = np.ones((1, 1, 1))
        table.setflags(write=False)
        empty = np.zeros((0, 3), dtype=int)
        return cls(a=0.0, R=math.inf, r0=r0, U=0.0, omega=empty, boundary=empty, boundary_avg=1.0, table=table)


@dataclass(frozen=True)
class JastrowG:
    """Same-spin cutoff: ``g = 0`` for ``|x| <= s``, ``1`` for ``|x| >= 2s``."""

    s: float
    r0: float = 1.0
    shape: str = "linear"

    def __call__(self, offsets):
        x = np.asarray(offsets, dtype=float)
        if self.s == 0:
            return np.ones(x.shape[:-1])
        r = self.r0 * np.sqrt(np.sum(x**2, axis=-1))
        t = np.clip((r - self.s) / self.s, 0.0, 1.0)
        if self.shape == "smoothstep":
            return t * t * (3.0 - 2.0 * t)
        return t

    @classmethod
    def identity(cls, r0=1.0):
        """``g = 1`` everywhere (no same-spin cutoff)."""
        return cls(s=0.0, r0=r0)


def build_f(profile, R, delta=0.5):
    """Construct the opposite-spin Jastrow factor for domain radius ``R``.

    Parameters
    ----------
    profile : ScatteringProfile
        Tabulation must reach ``2R``.
    R : float
        Domain radius (length units).
    delta : float
        Require ``r0 / R <= delta``.

    Raises
    ------
    ConstructionError
        ``Omega`` not simply connected, or phi on its boundary too far from
        ``1 - a/R``.
    """
    r0 = profile.r0
    if not R > 0 or r0 / R > delta * (1 + 1e-12):
        raise PreconditionError(f"R={R:g} must satisfy r0/R <= {delta:g}")
    if profile.radius < 2 * R / r0:
        raise PreconditionError(f"tabulation radius {profile.radius} does not cover 2R/r0={2 * R / r0:g}")
    a = profile.a
    if a == 0:
        f = JastrowF.identity(r0)
        return JastrowF(**{**f.__dict__, "R": float(R)})
    level = 1.0 - a / R
    w0 = min(profile.radius - 2, int(math.ceil(2 * R / r0)))
    P = profile.radius
    sub = profile.phi_table[P - w0 : P + w0 + 1, P - w0 : P + w0 + 1, P - w0 : P + w0 + 1]
    mask = sub <= level
    fallback = False
    if mask.sum() < MIN_OMEGA_SITES:
        mask = np.zeros_like(mask)
        mask[w0, w0, w0] = True
        fallback = True
    if mask[[0, -1], :, :].any() or mask[:, [0, -1], :].any() or mask[:, :, [0, -1]].any():
        raise PreconditionError("Omega reaches the edge of the tabulated region")
    if not mask[w0, w0, w0] or not _is_simply_connected(mask):
        raise ConstructionError(f"Omega is not simply connected at R={R:g}; R is too small relative to r0")
    pts = np.argwhere(mask) - w0
    # inner boundary: sites of Omega with a neighbour outside
    on_bd = np.zeros(len(pts), dtype=bool)
    for d in _NEIGHBOURS:
        nb = pts + d + w0
        on_bd |= ~mask[tuple(nb.T)]
    bd = pts[on_bd] if not fallback else pts
    phi_bd = profile.phi(bd)
    c = float(np.mean(phi_bd))
    if not c > 0:
        raise ConstructionError("boundary average of phi vanishes; f is undefined")
    tol = boundary_tolerance(a, R, r0)
    if not fallback:
        if abs(c - level) > tol:
            raise ConstructionError(f"boundary average {c:.6g} differs from 1 - a/R = {level:.6g} by more than {tol:.3g}")
        spread = float(np.max(np.abs(phi_bd - c)))
        if spread > tol:
            raise ConstructionError(f"phi varies by {spread:.3g} on the boundary, more than {tol:.3g}")
    w = int(np.abs(pts).max()) + 1
    table = np.ones((2 * w + 1,) * 3)
    table[tuple((pts + w).T)] = profile.phi(pts) / c
    table.setflags(write=False)
    return JastrowF(
        a=a, R=float(R), r0=r0, U=profile.U, omega=pts, boundary=bd, boundary_avg=c, table=table, fallback=fallback
    )


def build_g(s, shape="linear", r0=1.0):
    """Radial cutoff ramping from 0 at ``|x| = s`` to 1 at ``|x| = 2s``."""
    if shape not in ("linear", "smoothstep"):
        raise DomainError(f"unknown shape {shape!r}")
    if s < 2 * r0:
        raise PreconditionError(f"s={s:g} must be at least 2 r0={2 * r0:g}")
    return JastrowG(s=float(s), r0=r0, shape=shape)


def max_bond_increment(g, radius_factor=4.0):
    """``max |g(x') - g(x)|`` over nearest-neighbour bonds inside ``|x| <= radius_factor * s``."""
    w = int(math.ceil(radius_factor * g.s / g.r0))
    r = np.arange(-w, w + 1)
    pts = np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1).reshape(-1, 3)
    pts = pts[np.sum(pts**2, axis=1) * g.r0**2 <= (radius_factor * g.s) ** 2]
    gx = g(pts)
    return float(max(np.max(np.abs(g(pts + d) - gx)) for d in _NEIGHBOURS[:3]))


@dataclass(frozen=True, eq=False)
class TrialState:
    """``Psi = D_n D_m G_n G_m F`` on a common box."""

    up: object
    down: object
    f: JastrowF
    g: JastrowG

    def __post_init__(self):
        if self.up.box != self.down.box:
            raise DomainError("both spin species must live on the same box")

    @property
    def box(self):
        return self.up.box

    @property
    def n(self):
        return self.up.n

    @property
    def m(self):
        return self.down.n

    def _slater(self, basis, X):
        k = basis.n
        if k == 0:
            return np.ones(X.shape[:-2])
        idx = self.box.index(X)
        ext = np.vstack([basis.orbitals, np.zeros((1, k), dtype=basis.orbitals.dtype)])
        mats = ext[idx]
        return np.linalg.det(mats) / math.sqrt(math.factorial(k))

    def _same_spin(self, X):
        k = X.shape[-2]
        if k < 2:
            return np.ones(X.shape[:-2])
        iu, ju = np.triu_indices(k, 1)
        return np.prod(self.g(X[..., iu, :] - X[..., ju, :]), axis=-1)

    def _cross(self, X, Y):
        if X.shape[-2] == 0 or Y.shape[-2] == 0:
            return np.ones(np.broadcast_shapes(X.shape[:-2], Y.shape[:-2]))
        off = X[..., :, None, :] - Y[..., None, :, :]
        return np.prod(self.f(off).reshape(off.shape[:-3] + (-1,)), axis=-1)

    def amplitude(self, X, Y):
        """Batched ``Psi``; positions outside a Dirichlet box give 0.

        ``X`` has shape ``(..., n, 3)``, ``Y`` shape ``(..., m, 3)``.
        """
        X = np.asarray(X, dtype=int)
        Y = np.asarray(Y, dtype=int)
        return (
            self._slater(self.up, X)
            * self._slater(self.down, Y)
            * self._same_spin(X)
            * self._same_spin(Y)
            * self._cross(X, Y)
        )


def evaluate_psi(state, X, Y):
    """``Psi(X, Y)`` for integer coordinates inside the box."""
    X = np.asarray(X, dtype=int).reshape(-1, 3) if np.size(X) else np.zeros((0, 3), dtype=int)
    Y = np.asarray(Y, dtype=int).reshape(-1, 3) if np.size(Y) else np.zeros((0, 3), dtype=int)
    if X.shape[0] != state.n or Y.shape[0] != state.m:
        raise DomainError(f"expected {state.n} up and {state.m} down positions")
    for P in (X, Y):
        if P.size and np.any(state.box.index(P) < 0):
            raise PreconditionError("coordinates must lie inside the box")
    return state.amplitude(X, Y)[()]


@dataclass(frozen=True)
class XiReport:
    """The sum of ``xi`` computed four ways.

    ``total`` sums bond gradients directly; ``by_parts`` is
    ``sum r0^3 f (-Delta f)`` plus the on-site term; ``boundary_split``
    keeps only the bonds leaving ``Omega``; ``rearranged`` is
    ``boundary_fluctuation + flux_term`` with ``flux_term = 4 pi a / <phi>``.
    """

    total: float
    by_parts: float
    boundary_split: float
    boundary_fluctuation: float
    flux_term: float
    rearranged: float
    boundary_avg: float
    ratio: float
    tolerance: float
    holds: bool


def xi_sum(f, profile, U=None):
    r"""``sum_x r0^3 xi(x)`` with ``xi = |grad f|^2 + (U/2) delta_{x,0} f^2``.

    Raises
    ------
    PreconditionError
        If the tabulation does not reach two sites beyond ``Omega``.
    """
    U = profile.U if U is None else float(U)
    r0 = profile.r0
    a = profile.a
    if f.a == 0:
        return XiReport(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, math.nan, 0.0, True)
    ext = int(np.abs(f.omega).max())
    if profile.radius < ext + 2:
        raise PreconditionError(f"tabulation radius {profile.radius} must reach {ext + 2}")
    # work with f - 1, which vanishes away from Omega; one extra zero layer makes
    # -Delta f complete on every site next to Omega
    D = np.pad(np.asarray(f.table) - 1.0, 1)
    onsite = 0.0 if math.isinf(U) else r0**3 * 0.5 * U * float(f([0, 0, 0])) ** 2
    grad2 = sum(float(np.sum(np.diff(D, axis=ax) ** 2)) for ax in range(3))
    total = r0 * grad2 + onsite
    inner = D[1:-1, 1:-1, 1:-1]
    lap = 6.0 * inner
    for d in _NEIGHBOURS:
        lap = lap - D[1 + d[0] : D.shape[0] - 1 + d[0], 1 + d[1] : D.shape[1] - 1 + d[1], 1 + d[2] : D.shape[2] - 1 + d[2]]
    # sum f (-Delta f) = sum (f - 1)(-Delta f) + sum (-Delta f)
    by_parts = r0 * (float(np.sum(inner * lap)) + float(np.sum(lap))) + onsite
    c = f.boundary_avg
    tol = 10.0 * a * a * r0 / f.R**2
    origin_interior = not f.fallback and all(np.any(np.all(f.omega == d, axis=1)) for d in _NEIGHBOURS)
    if not origin_interior:
        nan = math.nan
        return XiReport(total, by_parts, nan, nan, nan, nan, c, total / (4 * math.pi * a), tol, False)
    omega = f.omega
    w = f.half_width + 1
    mask = np.zeros(D.shape, dtype=bool)
    mask[tuple((omega + w).T)] = True
    split = 0.0
    fluct = 0.0
    for d in _NEIGHBOURS:
        nb = omega + d
        out = ~mask[tuple((nb + w).T)]
        u = profile.phi(omega[out]) / c
        up = profile.phi(nb[out]) / c
        split += float(np.sum(u * (up - 1.0) + (1.0 - u)))
        fluct += float(np.sum((u - 1.0) * (up - 1.0)))
    split *= r0
    fluct *= r0
    flux = flux_through(omega, profile) / c
    rearranged = fluct + flux
    return XiReport(
        total=total,
        by_parts=by_parts,
        boundary_split=split,
        boundary_fluctuation=fluct,
        flux_term=flux,
        rearranged=rearranged,
        boundary_avg=c,
        ratio=total / (4 * math.pi * a),
        tolerance=tol,
        holds=bool(abs(total - 4 * math.pi * a / c) <= tol),
    )
