r"""Zero-energy scattering on the simple cubic lattice.

The repulsive on-site interaction ``U`` between an up and a down particle is
characterised by the solution of

.. math:: -\Delta \varphi(x) + \frac{U}{2}\delta_{x,0}\varphi(x) = 0,
          \qquad \varphi(x) \to 1,

which is :math:`\varphi(x) = 1 - 4\pi (a/r_0) G(x/r_0)` with :math:`G` the
lattice Green's function of :math:`-\Delta` (``r0 = 1``) and ``a`` the
scattering length, :math:`8\pi a/r_0 = U r_0^2/(1 + \gamma U r_0^2)`.

Lattice vectors are integer triples (site offsets). Physical lengths are
``r0`` times lattice lengths. Energies are in units where the hopping
Laplacian carries the factor ``r0**-2``.

Two routes to the Brillouin-zone integrals are provided:

* a tensor-product midpoint rule on a shifted grid (never samples ``k=0``),
  refined by doubling and Richardson-extrapolated in the known error powers
  ``h, h^3, h^5, ...`` of an integrable ``1/k^2`` singularity;
* Gauss-Legendre per axis after splitting the octant into three pyramids and
  a Duffy substitution that removes the singularity.

Tabulating :math:`G(x)` out to ``|x| ~ 60`` uses the heat-kernel form
:math:`G(x) = \int_0^\infty \prod_i e^{-2t} I_{x_i}(2t)\,dt`, which is the
same integral after writing :math:`1/E = \int_0^\infty e^{-tE} dt` and doing
each ``k`` integral in closed form.
"""
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import ndimage
from scipy.special import ive

from .errors import ConvergenceError, DomainError, InvariantError, PreconditionError

__all__ = [
    "LatticeSpec",
    "ScatteringProfile",
    "dispersion",
    "gamma_integrand",
    "midpoint_estimate",
    "gauss_estimate",
    "compute_gamma",
    "lattice_green_table",
    "green_bz",
    "scattering_length",
    "build_profile",
    "phi_at",
    "verify_zero_energy_equation",
    "origin_balance",
    "flux_through",
    "cube_domain",
    "ball_domain",
    "octahedron_domain",
    "spruch_rosenberg_check",
    "asymptotic_deficit",
]

DEFAULT_TAB_RADIUS = 60

# heat-kernel quadrature in s = log t on [log T_MIN, log T_MAX]; analytic tail above
_T_MIN = 1e-12
_T_MAX = 1e7
_PANELS = 60
_PANEL_ORDER = 20

# Richardson powers of the shifted midpoint rule for a 1/k^2 point singularity in 3D
_RICHARDSON_POWERS = (1, 3, 5, 7, 9, 11)


@dataclass(frozen=True)
class LatticeSpec:
    """Lattice spacing and Brillouin-zone quadrature settings.

    Parameters
    ----------
    r0 : float
        Lattice spacing.
    quadrature_order : int
        Starting number of points per axis (octant) for BZ quadrature.
    rtol : float
        Relative agreement required between successive refinements.
    max_refinements : int
        Number of doublings attempted before giving up.
    """

    r0: float = 1.0
    quadrature_order: int = 16
    rtol: float = 1e-10
    max_refinements: int = 6

    def __post_init__(self):
        if not self.r0 > 0:
            raise DomainError(f"r0 must be positive, got {self.r0}")
        if int(self.quadrature_order) != self.quadrature_order or self.quadrature_order < 8:
            raise DomainError(f"quadrature_order must be an integer >= 8, got {self.quadrature_order}")
        if not self.rtol > 0:
            raise DomainError("rtol must be positive")


def dispersion(k):
    """Lattice dispersion ``2 * sum_i (1 - cos k_i)`` for ``k`` of shape (..., 3)."""
    k = np.asarray(k, dtype=float)
    return 2.0 * np.sum(1.0 - np.cos(k), axis=-1)


def gamma_integrand(k):
    """Integrand of gamma before the ``(2 pi)^-3`` measure: ``1/(2 * dispersion)``."""
    return 0.5 / dispersion(k)


def midpoint_estimate(q, x=(0, 0, 0), octant=True):
    r"""Shifted-midpoint value of :math:`\frac12\int \frac{d^3k}{(2\pi)^3}\frac{\cos(k\cdot x)}{E(k)}`.

    With ``octant=True`` the rule uses ``q`` points per axis on ``[0, pi]``
    and the evenness of the integrand; otherwise ``2q`` points per axis on
    ``[-pi, pi]``. Both grids contain the same nodes up to reflection.
    """
    x = np.asarray(x, dtype=float)
    if octant:
        h = np.pi / q
        k = (np.arange(q) + 0.5) * h
        norm = h**3 / np.pi**3
    else:
        h = np.pi / q
        k = -np.pi + (np.arange(2 * q) + 0.5) * h
        norm = h**3 / (2.0 * np.pi) ** 3
    c = 1.0 - np.cos(k)
    cx = np.cos(np.outer(x, k))  # (3, len(k))
    total = 0.0
    plane = c[:, None] + c[None, :]
    weight_yz = cx[1][:, None] * cx[2][None, :]
    for i in range(k.size):
        total += np.sum(weight_yz / (2.0 * (c[i] + plane))) * cx[0][i]
    return 0.5 * norm * total


def _pyramid_nodes(q):
    x, w = np.polynomial.legendre.leggauss(q)
    u = (x + 1.0) * np.pi / 2.0
    wu = w * np.pi / 2.0
    v = (x + 1.0) / 2.0
    wv = w / 2.0
    return u, wu, v, wv


def gauss_estimate(q):
    """Gauss-Legendre value of gamma with ``q`` nodes per axis.

    The octant ``[0, pi]^3`` is cut into three pyramids according to the
    largest coordinate; on the pyramid ``k1 >= k2, k3`` the substitution
    ``k = (u, u v, u w)`` has Jacobian ``u^2`` which cancels the ``1/k^2``
    singularity, leaving an analytic integrand.
    """
    u, wu, v, wv = _pyramid_nodes(q)
    U, V, W = np.meshgrid(u, v, v, indexing="ij")
    weights = wu[:, None, None] * wv[None, :, None] * wv[None, None, :]
    d = 2.0 * ((1.0 - np.cos(U)) + (1.0 - np.cos(U * V)) + (1.0 - np.cos(U * W)))
    # all three pyramids give the same contribution by symmetry
    return 3.0 * 0.5 * np.sum(weights * U**2 / d) / np.pi**3


def _richardson_row(prev_row, value):
    row = [value]
    for j, p in enumerate(_RICHARDSON_POWERS[: len(prev_row)]):
        row.append(row[j] + (row[j] - prev_row[j]) / (2.0**p - 1.0))
    return row


def _refine_midpoint(spec, x=(0, 0, 0)):
    q = spec.quadrature_order
    row = [midpoint_estimate(q, x)]
    best_prev = row[-1]
    for _ in range(spec.max_refinements):
        q *= 2
        row = _richardson_row(row, midpoint_estimate(q, x))
        best = row[-1]
        if abs(best - best_prev) <= spec.rtol * abs(best):
            return best
        best_prev = best
    raise ConvergenceError(
        f"midpoint quadrature did not reach rtol={spec.rtol} by q={q}", (best_prev, row[-1])
    )


def _refine_gauss(spec):
    q = spec.quadrature_order
    prev = gauss_estimate(q)
    for _ in range(spec.max_refinements):
        q *= 2
        cur = gauss_estimate(q)
        if abs(cur - prev) <= spec.rtol * abs(cur):
            return cur
        prev = cur
    raise ConvergenceError(f"Gauss-Legendre quadrature did not reach rtol={spec.rtol}", (prev, cur))


@lru_cache(maxsize=None)
def compute_gamma(spec=LatticeSpec(), scheme="midpoint"):
    r"""The lattice constant :math:`\gamma = \frac12\int\frac{d^3k}{(2\pi)^3}\frac{1}{2\sum(1-\cos k_i)}`.

    Parameters
    ----------
    spec : LatticeSpec
    scheme : {"midpoint", "gauss"}
        ``midpoint`` is the primary scheme, ``gauss`` the cross-check.

    Raises
    ------
    ConvergenceError
        If successive refinements never agree to ``spec.rtol``; carries the
        last two iterates.
    """
    if scheme == "midpoint":
        return float(_refine_midpoint(spec))
    if scheme == "gauss":
        return float(_refine_gauss(spec))
    raise ValueError(f"unknown scheme {scheme!r}")


def green_bz(x, spec=LatticeSpec()):
    """Lattice Green's function ``G(x)`` (``r0 = 1``) by refined BZ midpoint quadrature.

    Only practical for short offsets; used to cross-check the tabulation.
    """
    return 2.0 * float(_refine_midpoint(spec, tuple(int(v) for v in x)))


def _heat_kernel_nodes():
    x, w = np.polynomial.legendre.leggauss(_PANEL_ORDER)
    edges = np.linspace(math.log(_T_MIN), math.log(_T_MAX), _PANELS + 1)
    a, b = edges[:-1, None], edges[1:, None]
    s = ((a + b) / 2 + (b - a) / 2 * x).ravel()
    ws = ((b - a) / 2 * w).ravel()
    t = np.exp(s)
    return t, ws * t


def _tail(nu_a, nu_b, nu_c):
    # large-t expansion e^{-z} I_nu(z) ~ (2 pi z)^{-1/2} [1 - (mu-1)/(8z) + (mu-1)(mu-9)/(2 (8z)^2)]
    mus = [4.0 * np.asarray(nu, dtype=float) ** 2 for nu in (nu_a, nu_b, nu_c)]
    c1 = [(mu - 1.0) / 16.0 for mu in mus]
    c2 = [(mu - 1.0) * (mu - 9.0) / 512.0 for mu in mus]
    A = c1[0] + c1[1] + c1[2]
    B = c2[0] + c2[1] + c2[2] + c1[0] * c1[1] + c1[0] * c1[2] + c1[1] * c1[2]
    T = _T_MAX
    return (4.0 * np.pi) ** -1.5 * (2.0 * T**-0.5 - A * (2.0 / 3.0) * T**-1.5 + B * 0.4 * T**-2.5)


@lru_cache(maxsize=4)
def lattice_green_table(radius):
    """``G[a, b, c]`` for ``0 <= a, b, c <= radius`` (lattice units, ``r0 = 1``).

    ``G`` solves ``-Delta G = delta_0`` with ``G -> 0`` at infinity, so
    ``G(0) = 2 gamma`` and ``G(x) ~ 1/(4 pi |x|)``.
    """
    radius = int(radius)
    t, w = _heat_kernel_nodes()
    nu = np.arange(radius + 1)
    E = ive(nu[:, None], 2.0 * t[None, :])
    pairs = (E[:, None, :] * E[None, :, :]).reshape(-1, t.size)
    G = ((E * w) @ pairs.T).reshape(radius + 1, radius + 1, radius + 1)
    a, b, c = np.meshgrid(nu, nu, nu, indexing="ij")
    G += _tail(a, b, c)
    G[0, 0, 0] += _T_MIN  # integrand tends to 1 at t -> 0 only for x = 0
    G.setflags(write=False)
    return G


def _green_cube(radius):
    G = lattice_green_table(radius)
    idx = np.abs(np.arange(-radius, radius + 1))
    return G[np.ix_(idx, idx, idx)]


def scattering_length(U, spec=LatticeSpec()):
    """Scattering length from ``8 pi a = r0 * U r0^2 / (U r0^2 gamma + 1)``.

    ``U = math.inf`` (hard core) gives ``a = r0 / (8 pi gamma)``.

    Raises
    ------
    DomainError
        For negative or NaN ``U``.
    """
    U = float(U)
    if math.isnan(U) or U < 0:
        raise DomainError(f"U must be >= 0 (attractive case unsupported), got {U}")
    gamma = compute_gamma(spec)
    r0 = spec.r0
    if math.isinf(U):
        return r0 / (8.0 * np.pi * gamma)
    u = U * r0**2
    return r0 * u / (u * gamma + 1.0) / (8.0 * np.pi)


@dataclass(frozen=True, eq=False)
class ScatteringProfile:
    """Tabulated zero-energy scattering solution.

    ``phi_table[i, j, k]`` is phi at lattice offset ``(i, j, k) - radius``.
    Immutable once built.
    """

    U: float
    gamma: float
    a: float
    r0: float
    radius: int
    phi_table: np.ndarray = field(repr=False)

    @property
    def hard_core(self):
        return math.isinf(self.U)

    def _index(self, x):
        x = np.asarray(x, dtype=int)
        if x.shape[-1] != 3:
            raise ValueError("lattice vectors must have 3 components")
        if np.any(np.abs(x) > self.radius):
            raise PreconditionError(
                f"offset outside the tabulation radius {self.radius}: max |x_i| = {np.abs(x).max()}"
            )
        return tuple(np.moveaxis(x + self.radius, -1, 0))

    def phi(self, x):
        """phi at integer offsets ``x`` of shape (..., 3)."""
        return self.phi_table[self._index(x)]

    def offsets(self, half_width=None):
        """Integer offsets of the (sub)cube ``|x_i| <= half_width`` in table order."""
        w = self.radius if half_width is None else int(half_width)
        r = np.arange(-w, w + 1)
        return np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1)


def build_profile(U, spec=LatticeSpec(), radius=DEFAULT_TAB_RADIUS):
    """Tabulate phi on the cube ``|x_i| <= radius`` (lattice units)."""
    a = scattering_length(U, spec)
    table = 1.0 - 4.0 * np.pi * (a / spec.r0) * _green_cube(int(radius))
    if math.isinf(float(U)):
        # hard core: phi(0) = 0 exactly, not merely to quadrature accuracy
        table[radius, radius, radius] = 0.0
    table.setflags(write=False)
    return ScatteringProfile(
        U=float(U),
        gamma=compute_gamma(spec),
        a=a,
        r0=spec.r0,
        radius=int(radius),
        phi_table=table,
    )


def phi_at(x, a, spec=LatticeSpec(), radius=DEFAULT_TAB_RADIUS):
    """phi(x) for scattering length ``a`` at integer offset(s) ``x``."""
    x = np.asarray(x, dtype=int)
    if np.any(np.abs(x) > radius):
        raise PreconditionError(f"offset outside tabulation radius {radius}")
    G = lattice_green_table(int(radius))
    g = G[tuple(np.moveaxis(np.abs(x), -1, 0))]
    return 1.0 - 4.0 * np.pi * (a / spec.r0) * g


def _laplacian(table, r0):
    """Discrete Laplacian on the interior of a cube table (drops one layer)."""
    c = table[1:-1, 1:-1, 1:-1]
    s = (
        table[2:, 1:-1, 1:-1] + table[:-2, 1:-1, 1:-1]
        + table[1:-1, 2:, 1:-1] + table[1:-1, :-2, 1:-1]
        + table[1:-1, 1:-1, 2:] + table[1:-1, 1:-1, :-2]
    )
    return (s - 6.0 * c) / r0**2


def verify_zero_energy_equation(profile, radius):
    """Max residual of ``-Delta phi + (U/2) delta_0 phi`` over ``|x| <= radius``.

    ``radius`` is a physical length. For the hard core the origin carries
    the constraint ``phi(0) = 0`` instead and is excluded from the maximum.
    """
    r0 = profile.r0
    w = int(math.floor(radius / r0 + 1e-12))
    if profile.radius < w + 1:
        raise PreconditionError(
            f"tabulation radius {profile.radius} r0 must be >= radius + r0 ({w + 1} r0)"
        )
    lo, hi = profile.radius - w - 1, profile.radius + w + 2
    sub = profile.phi_table[lo:hi, lo:hi, lo:hi]
    lap = _laplacian(sub, r0)
    res = -lap
    off = profile.offsets(w)
    inside = np.sum(off.astype(float) ** 2, axis=-1) * r0**2 <= radius**2 + 1e-9
    centre = (w, w, w)
    if profile.hard_core:
        inside[centre] = False
    else:
        res[centre] += 0.5 * profile.U * sub[w + 1, w + 1, w + 1]
    return float(np.max(np.abs(res[inside])))


def origin_balance(profile):
    """``(-Delta phi(0), -(U/2) phi(0))`` computed separately from the table."""
    R = profile.radius
    sub = profile.phi_table[R - 1:R + 2, R - 1:R + 2, R - 1:R + 2]
    lhs = -float(_laplacian(sub, profile.r0)[0, 0, 0])
    rhs = -0.5 * profile.U * float(profile.phi_table[R, R, R]) if not profile.hard_core else math.nan
    return lhs, rhs


_NEIGHBOURS = np.array(
    [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=int
)


def cube_domain(side):
    """Sites of a cube of ``side`` sites per axis centred at the origin (odd ``side``)."""
    if side % 2 != 1:
        raise ValueError("cube side must be odd to be centred on the origin")
    h = side // 2
    r = np.arange(-h, h + 1)
    return np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1).reshape(-1, 3)


def ball_domain(radius):
    """Sites with Euclidean norm ``<= radius`` (lattice units)."""
    h = int(math.floor(radius))
    pts = cube_domain(2 * h + 1)
    return pts[np.sum(pts**2, axis=1) <= radius**2 + 1e-9]


def octahedron_domain(radius):
    """Sites with l1 norm ``<= radius``."""
    h = int(radius)
    pts = cube_domain(2 * h + 1)
    return pts[np.sum(np.abs(pts), axis=1) <= radius]


def _is_simply_connected(mask):
    six = ndimage.generate_binary_structure(3, 1)
    _, n_in = ndimage.label(mask, structure=six)
    padded = np.pad(~mask, 1, constant_values=True)
    _, n_out = ndimage.label(padded, structure=six)
    return n_in == 1 and n_out == 1


def flux_through(domain, profile):
    """Flux ``r0 * sum_{<x,x'>, x in D, x' not in D} (phi(x') - phi(x))``.

    Equals ``4 pi a`` for every admissible domain.

    Parameters
    ----------
    domain : array_like of int, shape (N, 3)
        Lattice sites of a simply connected region containing the origin.
    profile : ScatteringProfile
    """
    pts = np.unique(np.asarray(domain, dtype=int).reshape(-1, 3), axis=0)
    if not np.any(np.all(pts == 0, axis=1)):
        raise PreconditionError("domain must contain the origin")
    if np.abs(pts).max() > profile.radius - 1:
        raise PreconditionError("domain must lie within tabulation radius - r0")
    R = profile.radius
    mask = np.zeros(profile.phi_table.shape, dtype=bool)
    mask[tuple((pts + R).T)] = True
    if not _is_simply_connected(mask):
        raise PreconditionError("domain is not simply connected")
    total = 0.0
    phi_in = profile.phi_table[tuple((pts + R).T)]
    for d in _NEIGHBOURS:
        nb = pts + d + R
        outside = ~mask[tuple(nb.T)]
        total += float(np.sum(profile.phi_table[tuple(nb[outside].T)] - phi_in[outside]))
    return profile.r0 * total


def spruch_rosenberg_check(U_grid, spec=LatticeSpec()):
    """Rows ``(U, 8 pi a, U r0^3)``; raises if ``8 pi a > U r0^3`` anywhere.

    Raises
    ------
    InvariantError
        Naming the offending ``U``.
    """
    rows = []
    for U in U_grid:
        a = scattering_length(U, spec)
        lhs = 8.0 * np.pi * a
        rhs = float(U) * spec.r0**3
        if lhs > rhs * (1.0 + 1e-14) + 1e-300:
            raise InvariantError("spruch_rosenberg", f"8 pi a = {lhs} > U r0^3 = {rhs} at U = {U}")
        rows.append((float(U), lhs, rhs))
    return rows


def asymptotic_deficit(profile, distances):
    """``(1 - phi(x)) |x|`` along the positive x axis at the given lattice distances."""
    d = np.asarray(distances, dtype=int)
    x = np.zeros((d.size, 3), dtype=int)
    x[:, 0] = d
    return (1.0 - profile.phi(x)) * d * profile.r0
