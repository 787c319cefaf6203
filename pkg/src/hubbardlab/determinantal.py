r"""Weighted Slater determinants: norms, densities and the two Jastrow lemmas.

For orbitals :math:`\phi_\alpha` on a box and a single-particle weight
:math:`h`, the function :math:`\Phi(X) = D_n(X)\prod_i h(x_i)` with
:math:`D_n = \det[\phi_\alpha(x_i)]/\sqrt{n!}` has

.. math:: \langle\Phi|\Phi\rangle = \det M,\qquad
          M_{\alpha\beta} = \sum_x r_0^3\,\phi_\alpha^*(x)\phi_\beta(x)|h(x)|^2 ,

and its ``k``-particle densities are ``det[P(x_i, x_j)] / k!`` with the
projector kernel ``P(x, y) = sum psi_a(x) (M^-1)_ab conj(psi_b(y))`` built
from ``psi_a = h phi_a``.

Every determinant formula here has an exhaustive counterpart summing over
all particle configurations; these are the oracles used for small systems.

Weights may be given as a scalar, an array over the box sites, or a
callable taking integer site coordinates of shape ``(V, 3)``. Jastrow
factors (``f`` and ``g``) are callables on integer lattice offsets.
"""
import math
import warnings
from dataclasses import dataclass
from itertools import combinations, islice

import numpy as np

from .errors import CapExceededError, DomainError, PreconditionError, SingularMatrixError

__all__ = [
    "EXHAUSTIVE_CAP",
    "site_weights",
    "overlap_matrix",
    "condition_estimate",
    "weighted_norm",
    "exhaustive_norm",
    "projector_kernel",
    "k_particle_density",
    "trace_identity",
    "jastrow_weight",
    "Lemma2Report",
    "lemma2_bound",
    "lemma2_scale",
    "Lemma3Report",
    "lemma3_ratio",
    "lemma3_scale",
]

EXHAUSTIVE_CAP = 20_000_000
NEAR_SINGULAR = 0.99
_CHUNK = 100_000


def site_weights(basis, h):
    """Evaluate a weight on every site of ``basis.box``; returns shape ``(V,)``."""
    V = basis.box.n_sites
    if callable(h):
        w = np.asarray(h(basis.box.coords()))
    else:
        w = np.asarray(h)
        if w.ndim == 0:
            w = np.full(V, w.item())
    if w.shape != (V,):
        raise DomainError(f"weight must have one value per site ({V}), got shape {w.shape}")
    return w


def overlap_matrix(basis, h):
    """``M_ab = sum_x r0^3 conj(phi_a) phi_b |h|^2`` (Hermitian, ``n x n``)."""
    w2 = np.abs(site_weights(basis, h)) ** 2
    phi = basis.orbitals
    M = basis.r0**3 * (phi.conj().T * w2) @ phi
    return 0.5 * (M + M.conj().T)


def condition_estimate(M):
    """2-norm condition number of a Hermitian matrix (inf if singular)."""
    ev = np.abs(np.linalg.eigvalsh(M))
    if ev.size == 0:
        return 1.0
    return float(ev.max() / ev.min()) if ev.min() > 0 else math.inf


def _inverse(M, what="M"):
    cond = condition_estimate(M)
    if not cond < 1e13:
        raise SingularMatrixError(f"{what} is singular to working precision (condition {cond:.3g})", cond)
    return np.linalg.inv(M)


def weighted_norm(basis, h, method="determinant", cap=EXHAUSTIVE_CAP):
    """``<Phi|Phi>`` for ``Phi = D_n prod h``.

    ``method="determinant"`` returns ``det M``; ``method="exhaustive"``
    sums over all configurations. A near-singular ``M`` triggers a
    ``RuntimeWarning`` carrying the condition estimate.
    """
    if method == "exhaustive":
        return exhaustive_norm(basis, h, cap=cap)
    if method != "determinant":
        raise DomainError(f"unknown method {method!r}")
    M = overlap_matrix(basis, h)
    cond = condition_estimate(M)
    if cond > 1e12:
        warnings.warn(f"overlap matrix is near-singular (condition {cond:.3g})", RuntimeWarning, stacklevel=2)
    return float(np.real(np.linalg.det(M)))


def _configurations(V, n, cap, exclude=()):
    """Yield sorted ``n``-subsets of ``range(V) minus exclude`` in chunks."""
    sites = [v for v in range(V) if v not in set(exclude)]
    total = math.comb(len(sites), n)
    if total > cap:
        raise CapExceededError(f"{total} configurations exceed the exhaustive cap {cap}")
    it = combinations(sites, n)
    while True:
        block = list(islice(it, _CHUNK))
        if not block:
            return
        yield np.array(block, dtype=np.intp).reshape(len(block), n)


def _abs_det2(phi, conf):
    """``|det phi[conf, :]|^2`` for a batch of configurations."""
    if conf.shape[1] == 0:
        return np.ones(conf.shape[0])
    return np.abs(np.linalg.det(phi[conf])) ** 2


def exhaustive_norm(basis, h, cap=EXHAUSTIVE_CAP):
    """Sum of ``r0^{3n} |D_n(X)|^2 prod |h(x_i)|^2`` over ordered configurations."""
    w2 = np.abs(site_weights(basis, h)) ** 2
    n = basis.n
    total = 0.0
    for conf in _configurations(basis.box.n_sites, n, cap):
        total += np.sum(_abs_det2(basis.orbitals, conf) * np.prod(w2[conf], axis=1))
    # ordered sum = n! * sorted sum, and |D_n|^2 carries 1/n!
    return basis.r0 ** (3 * n) * total


def projector_kernel(basis, h):
    """``P(x, y)`` on all box sites, normalised so ``sum r0^3 P(x, x) = n``."""
    w = site_weights(basis, h)
    psi = basis.orbitals * w[:, None]
    Minv = _inverse(overlap_matrix(basis, h))
    return psi @ Minv @ psi.conj().T


def k_particle_density(basis, h, k, points):
    """``k``-particle density of the normalised ``Phi`` at site tuples.

    Parameters
    ----------
    points : array_like of int, shape (..., k)
        Site indices.

    Returns
    -------
    ndarray
        ``det[P(x_i, x_j)] / k!``, summing to ``C(n, k)`` over ordered tuples
        in the ``r0^3`` measure.
    """
    if not 1 <= k <= basis.n:
        raise DomainError(f"k must be in [1, n={basis.n}]")
    p = np.asarray(points, dtype=np.intp)
    if p.shape[-1] != k:
        raise ValueError(f"expected {k} points per evaluation")
    P = projector_kernel(basis, h)
    mat = P[p[..., :, None], p[..., None, :]]
    return np.real(np.linalg.det(mat)) / math.factorial(k)


def trace_identity(basis, h, k_weight, cap=EXHAUSTIVE_CAP):
    r"""Both sides of ``sum_i <Phi'_i|Phi'_i> = det M Tr[K M^-1]``.

    ``Phi'_i`` replaces the ``i``-th factor ``h(x_i)`` by ``k(x_i)``. The
    left side is an exhaustive configuration sum, the right side uses the
    weighted overlap matrices.

    Returns
    -------
    tuple of float
        ``(lhs, rhs)``.
    """
    h2 = np.abs(site_weights(basis, h)) ** 2
    k2 = np.abs(site_weights(basis, k_weight)) ** 2
    n = basis.n
    lhs = 0.0
    for conf in _configurations(basis.box.n_sites, n, cap):
        hh = h2[conf]
        kk = k2[conf]
        s = np.zeros(conf.shape[0])
        for i in range(n):
            s += kk[:, i] * np.prod(np.delete(hh, i, axis=1), axis=1)
        lhs += np.sum(_abs_det2(basis.orbitals, conf) * s)
    lhs *= basis.r0 ** (3 * n)
    if not np.any(k2):
        return float(lhs), 0.0
    M = overlap_matrix(basis, h)
    K = overlap_matrix(basis, np.sqrt(k2))
    rhs = np.real(np.linalg.det(M) * np.trace(K @ _inverse(M)))
    return float(lhs), float(rhs)


def jastrow_weight(basis, f, y_sites):
    """``h(x) = prod_j f(x - y_j)`` on the box sites for fixed positions ``y_j``."""
    coords = basis.box.coords()
    ys = np.atleast_2d(np.asarray(y_sites, dtype=int))
    w = np.ones(coords.shape[0])
    for y in ys:
        w = w * np.asarray(f(coords - y))
    return w


def _check_separation(y_sites, s, r0):
    ys = np.atleast_2d(np.asarray(y_sites, dtype=float)) * r0
    if len(ys) < 2:
        return
    d = np.sqrt(np.sum((ys[:, None] - ys[None]) ** 2, axis=-1))
    dmin = d[np.triu_indices(len(ys), 1)].min()
    if dmin < s * (1 - 1e-12):
        raise PreconditionError(f"positions are {dmin:g} apart, closer than s={s:g}")


def lemma2_scale(a, R, s, n, side):
    """``a R^2 / s^3 + n^{2/3} s^2 / l^2``."""
    return a * R**2 / s**3 + n ** (2.0 / 3.0) * s**2 / side**2


@dataclass(frozen=True)
class Lemma2Report:
    norm: float
    scale: float
    constant: float
    bound: float
    holds: bool
    near_singular: bool
    inverse_norm: float
    inverse_norm_direct: float
    fermi_proxy: float


def lemma2_bound(y_sites, basis, f, R, s, constant=None, delta=0.25):
    """Spectral norm of ``1 - M_Y`` against ``C (a R^2/s^3 + n^{2/3} s^2/l^2)``.

    ``M_Y`` is the overlap matrix with weight ``prod_j f(x - y_j)``. ``f``
    must expose ``a`` (scattering length) and be callable on integer
    offsets. With ``constant=None`` the calibrated value from the
    constants registry is used.

    The report also carries ``||M_Y^-1||`` both from ``1/(1 - ||1 - M_Y||)``
    and from direct inversion, and ``fermi_proxy = e_n s^2`` with ``e_n``
    the highest occupied level (an alternative for the kinetic scale).
    """
    r0 = basis.r0
    if s < 5 * R * (1 - 1e-12):
        raise PreconditionError(f"s={s:g} must be at least 5R={5 * R:g}")
    if r0 / R > delta * (1 + 1e-12):
        raise PreconditionError(f"r0/R={r0 / R:g} exceeds delta={delta:g}")
    _check_separation(y_sites, s, r0)
    if constant is None:
        from .constants import get_constant

        constant = get_constant("lemma2")
    M = overlap_matrix(basis, jastrow_weight(basis, f, y_sites))
    ev = np.linalg.eigvalsh(M)
    norm = float(max(abs(1.0 - ev.min()), abs(1.0 - ev.max())))
    scale = lemma2_scale(f.a, R, s, basis.n, basis.box.side)
    bound = constant * scale
    near = norm >= NEAR_SINGULAR
    inv_alg = 1.0 / (1.0 - norm) if norm < 1 else math.inf
    inv_dir = 1.0 / ev.min() if ev.min() > 0 else math.inf
    return Lemma2Report(
        norm=norm,
        scale=scale,
        constant=float(constant),
        bound=bound,
        holds=bool(near or norm <= bound * (1 + 1e-12)),
        near_singular=bool(near),
        inverse_norm=float(inv_alg),
        inverse_norm_direct=float(inv_dir),
        fermi_proxy=float(basis.eigenvalues[-1] * s**2) if basis.n else 0.0,
    )


def lemma3_scale(n, inverse_norm, s, side):
    """``n^{8/3} ||M_Y^-1||^2 (s/l)^5``."""
    return n ** (8.0 / 3.0) * inverse_norm**2 * (s / side) ** 5


@dataclass(frozen=True)
class Lemma3Report:
    ratio: float
    numerator: float
    denominator: float
    inverse_norm: float
    scale: float
    constant: float
    lower_bound: float
    holds: bool


def lemma3_ratio(basis, f, g, y_sites, constant=None, cap=EXHAUSTIVE_CAP):
    r"""Exhaustive ``sum D^2 F^2 G^2 / sum D^2 F^2`` over same-spin configurations.

    ``F(X) = prod_{i,j} f(x_i - y_j)`` for the fixed opposite-spin positions
    and ``G(X) = prod_{i<j} g(x_i - x_j)``. The ratio is compared with
    ``1 - c n^{8/3} ||M_Y^-1||^2 (s/l)^5`` where ``s = g.s``.
    """
    if constant is None:
        from .constants import get_constant

        constant = get_constant("lemma3")
    n = basis.n
    w2 = jastrow_weight(basis, f, y_sites) ** 2
    coords = basis.box.coords()
    iu, ju = np.triu_indices(n, 1)
    num = 0.0
    den = 0.0
    for conf in _configurations(basis.box.n_sites, n, cap):
        base = _abs_det2(basis.orbitals, conf) * np.prod(w2[conf], axis=1)
        if iu.size:
            off = coords[conf[:, iu]] - coords[conf[:, ju]]
            G2 = np.prod(np.asarray(g(off)) ** 2, axis=1)
        else:
            G2 = 1.0
        num += np.sum(base * G2)
        den += np.sum(base)
    if not den > 1e-300:
        raise SingularMatrixError("degenerate configuration: the weighted norm vanishes", math.inf)
    M = overlap_matrix(basis, np.sqrt(w2))
    lam = np.linalg.eigvalsh(M).min()
    inv_norm = 1.0 / lam if lam > 0 else math.inf
    scale = lemma3_scale(n, inv_norm, g.s, basis.box.side)
    ratio = num / den
    lower = 1.0 - constant * scale
    return Lemma3Report(
        ratio=float(ratio),
        numerator=float(num),
        denominator=float(den),
        inverse_norm=float(inv_norm),
        scale=float(scale),
        constant=float(constant),
        lower_bound=float(lower),
        holds=bool(ratio >= lower - 1e-12),
    )
