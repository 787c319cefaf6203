r"""Rayleigh quotient of the trial state, exhaustively or by Metropolis sampling.

Everything is in first quantisation: configurations are tuples of site
positions, amplitudes come from :meth:`TrialState.amplitude` evaluated at
the (unsorted) moved positions, and the hopping Laplacian is applied by
moving one particle to each of its six neighbours. A move that leaves the
Dirichlet box produces a vanishing amplitude. This is independent of the
Fock-space sign bookkeeping in :mod:`hubbardlab.exact_diag`, which makes the
exact ground energy a genuine oracle for the upper-bound property.

The kinetic energy splits as

.. math:: \langle\Psi|H|\Psi\rangle \le [E^D(n) + E^D(m)]\langle\Psi|\Psi\rangle
          + (1+\varepsilon) I_2 + (1 + \varepsilon^{-1}) I_3 ,

with ``I_2`` collecting Jastrow ``F`` gradients and the on-site term and
``I_3`` the same-spin ``G`` gradients; both sums include neighbour positions
just outside the box, where ``D`` vanishes but ``F`` and ``G`` do not.
"""
import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import CapExceededError, ConstructionError, DomainError, MixingError

__all__ = [
    "EXHAUSTIVE_CAP",
    "RayleighReport",
    "rayleigh_exhaustive",
    "decompose_terms",
    "epsilon_optimize",
    "epsilon_scaling_constant",
    "rayleigh_sampled",
]

EXHAUSTIVE_CAP = 10_000_000
_BLOCK = 4_000_000
_STEPS = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]])


@dataclass(frozen=True)
class RayleighReport:
    """Result of a Rayleigh-quotient evaluation.

    ``numerator`` and ``denominator`` use the ordered-configuration sums with
    the ``r0^{3(n+m)}`` measure. ``free_kinetic`` is ``E^D(n) + E^D(m)``.
    ``I2``, ``I3`` and ``epsilon`` are filled by the exhaustive path only.
    """

    numerator: float
    denominator: float
    quotient: float
    free_kinetic: float
    I2: float = math.nan
    I3: float = math.nan
    epsilon: float = math.nan
    majorant: float = math.nan
    method: str = "exhaustive"
    error: float = 0.0
    samples: int = 0
    acceptance: float = math.nan

    @property
    def slack(self):
        """``majorant - numerator`` (non-negative when the split holds)."""
        return self.majorant - self.numerator


def _configs(V, k):
    if k == 0:
        return np.zeros((1, 0), dtype=np.intp)
    return np.array(list(combinations(range(V), k)), dtype=np.intp).reshape(-1, k)


class _Evaluator:
    """Tables for amplitude pieces on a box padded by one layer."""

    def __init__(self, state):
        self.state = state
        box = state.box
        self.box = box
        L = np.array(box.shape)
        self.L = L
        # extended sites: coordinates -1..L_i on each axis
        g = np.meshgrid(*[np.arange(-1, Li + 1) for Li in L], indexing="ij")
        self.ext_coords = np.stack(g, axis=-1).reshape(-1, 3)
        coords = box.coords()
        self.coords = coords
        self.box_to_ext = self.ext_index(coords)
        self.fpair = np.asarray(state.f(self.ext_coords[:, None, :] - coords[None, :, :]))

    def ext_index(self, c):
        E = self.L + 2
        c = np.asarray(c) + 1
        return (c[..., 0] * E[1] + c[..., 1]) * E[2] + c[..., 2]

    def det(self, basis, P):
        """``D_k`` at integer positions ``P`` of shape (K, k, 3), zero outside the box."""
        return self.state._slater(basis, P)

    def G(self, P):
        return self.state._same_spin(P)

    def F(self, Pext, Qbox):
        """``prod_{i,j} f(p_i - q_j)`` for extended indices ``Pext`` (K, a), box indices ``Qbox`` (L, b)."""
        out = np.ones((Pext.shape[0], Qbox.shape[0]))
        for i in range(Pext.shape[1]):
            rows = self.fpair[Pext[:, i]]
            for j in range(Qbox.shape[1]):
                out *= rows[:, Qbox[:, j]]
        return out


def _exhaustive(state, U, eps, cap):
    box = state.box
    n, m = state.n, state.m
    V = box.n_sites
    size = math.comb(V, n) * math.comb(V, m)
    if size > cap:
        raise CapExceededError(f"{size} configuration pairs exceed the exhaustive cap {cap}; use rayleigh_sampled")
    U = float(U)
    if math.isnan(U) or U < 0:
        raise DomainError(f"U must be >= 0, got {U}")
    r0 = box.r0
    ev = _Evaluator(state)
    coords = ev.coords
    Xi = _configs(V, n)
    Yi = _configs(V, m)
    Xc = coords[Xi]
    Yc = coords[Yi]
    Dn = ev.det(state.up, Xc)
    Dm = ev.det(state.down, Yc)
    Gn = ev.G(Xc)
    Gm = ev.G(Yc)
    Xe = ev.box_to_ext[Xi]
    Ye = ev.box_to_ext[Yi]
    B = Dm * Gm
    sums = dict(den=0.0, kin=0.0, pot=0.0, I2=0.0, I2_pot=0.0, I3=0.0)
    rows = max(1, _BLOCK // max(1, Yi.shape[0]))
    for lo in range(0, Xi.shape[0], rows):
        sl = slice(lo, lo + rows)
        F0 = ev.F(Xe[sl], Yi)
        DD2 = (Dn[sl] ** 2)[:, None] * (Dm**2)[None, :]
        psi = (Dn[sl] * Gn[sl])[:, None] * B[None, :] * F0
        sums["den"] += float(np.sum(psi**2))
        if n and m:
            v = np.zeros_like(F0)
            for i in range(n):
                for j in range(m):
                    v += Xi[sl][:, i, None] == Yi[None, :, j]
            w = psi**2 * v
            if math.isinf(U):
                if np.any(w > 0):
                    raise DomainError("trial state has weight on doubly occupied sites; U = inf needs f(0) = 0")
            elif U > 0:
                sums["pot"] += U * float(np.sum(w))
                sums["I2_pot"] += U * float(np.sum(DD2 * (Gn[sl] ** 2)[:, None] * (Gm**2)[None, :] * F0**2 * v))
        # moves of up particles
        for i in range(n):
            for d in _STEPS:
                P = Xc[sl].copy()
                P[:, i] += d
                A1 = ev.det(state.up, P) * ev.G(P)
                Gp = ev.G(P)
                Pe = Xe[sl].copy()
                Pe[:, i] = ev.ext_index(P[:, i])
                F1 = ev.F(Pe, Yi)
                psi1 = A1[:, None] * B[None, :] * F1
                sums["kin"] += float(np.sum(psi * (psi - psi1)))
                sums["I2"] += 0.5 * float(np.sum(DD2 * (Gm**2)[None, :] * (Gp**2)[:, None] * (F1 - F0) ** 2))
                sums["I3"] += 0.5 * float(np.sum(DD2 * F0**2 * (Gm**2)[None, :] * ((Gp - Gn[sl]) ** 2)[:, None]))
        # moves of down particles
        A = (Dn[sl] * Gn[sl])[:, None]
        for j in range(m):
            for d in _STEPS:
                Q = Yc.copy()
                Q[:, j] += d
                B1 = ev.det(state.down, Q) * ev.G(Q)
                Gq = ev.G(Q)
                Qe = Ye.copy()
                Qe[:, j] = ev.ext_index(Q[:, j])
                F1 = ev.F(Qe, Xi[sl]).T
                psi1 = A * B1[None, :] * F1
                sums["kin"] += float(np.sum(psi * (psi - psi1)))
                sums["I2"] += 0.5 * float(np.sum(DD2 * (Gn[sl] ** 2)[:, None] * (Gq**2)[None, :] * (F1 - F0) ** 2))
                sums["I3"] += 0.5 * float(np.sum(DD2 * F0**2 * (Gn[sl] ** 2)[:, None] * ((Gq - Gm) ** 2)[None, :]))
    if not sums["den"] > 0:
        raise ConstructionError("trial state vanishes identically on this box")
    norm = math.factorial(n) * math.factorial(m) * r0 ** (3 * (n + m))
    den = sums["den"] * norm
    num = (sums["kin"] / r0**2 + sums["pot"]) * norm
    I2 = (sums["I2"] / r0**2 + sums["I2_pot"]) * norm
    I3 = sums["I3"] * norm / r0**2
    free = float(np.sum(state.up.eigenvalues) + np.sum(state.down.eigenvalues))
    if eps is None:
        eps, _ = epsilon_optimize(I2, I3)
    majorant = free * den + _combine(eps, I2, I3)
    return RayleighReport(
        numerator=num,
        denominator=den,
        quotient=num / den,
        free_kinetic=free,
        I2=I2,
        I3=I3,
        epsilon=eps,
        majorant=majorant,
    )


def _combine(eps, I2, I3):
    if math.isinf(eps):
        return I3 if I2 == 0 else math.inf
    if eps == 0:
        return I2 if I3 == 0 else math.inf
    return (1 + eps) * I2 + (1 + 1 / eps) * I3


def rayleigh_exhaustive(state, U, cap=EXHAUSTIVE_CAP):
    """Exact ``<Psi|H|Psi> / <Psi|Psi>`` by summing over all configuration pairs."""
    return _exhaustive(state, U, None, cap)


def decompose_terms(state, U, eps=None, cap=EXHAUSTIVE_CAP):
    """``(free kinetic, I2, I3)`` plus the majorant at ``eps`` (optimal if None).

    Returns the full :class:`RayleighReport`; ``slack >= 0`` is the
    inequality chain.
    """
    if eps is not None and not eps > 0:
        raise DomainError("epsilon must be positive")
    return _exhaustive(state, U, eps, cap)


def epsilon_optimize(I2, I3):
    """Minimiser ``sqrt(I3/I2)`` of ``(1+e) I2 + (1+1/e) I3`` and the minimum.

    ``I2 = 0`` returns ``(inf, I3)``; ``I3 = 0`` returns ``(0, I2)``.
    """
    if I2 < 0 or I3 < 0:
        raise DomainError("I2 and I3 must be non-negative")
    if I2 == 0:
        return math.inf, float(I3)
    if I3 == 0:
        return 0.0, float(I2)
    eps = math.sqrt(I3 / I2)
    return eps, _combine(eps, I2, I3)


def epsilon_scaling_constant(eps, n, m, s, side, a):
    """Measured ``const`` in ``eps^2 = const (n+m)^{8/3} s^3 / (l^2 a n m)``."""
    return eps**2 * side**2 * a * n * m / ((n + m) ** (8.0 / 3.0) * s**3)


def _start(state, rng, tries=20000):
    box = state.box
    V = box.n_sites
    coords = box.coords()
    for _ in range(tries):
        X = coords[rng.choice(V, state.n, replace=False)]
        Y = coords[rng.choice(V, state.m, replace=False)]
        if state.amplitude(X, Y) != 0:
            return X, Y
    raise ConstructionError("could not find a configuration with non-zero amplitude (zero-support start)")


def rayleigh_sampled(state, U, steps=20000, seed=0, batches=20, burn_in=None, thin=None):
    """Variational Monte Carlo estimate of the Rayleigh quotient.

    Metropolis walk on ``|Psi|^2`` with single-particle nearest-neighbour
    hops (particle and direction uniform). The local energy
    ``(H Psi)/Psi`` is recorded every ``thin`` steps (default ``n + m``) and
    the error bar is the standard error of ``batches`` batch means.

    Raises
    ------
    MixingError
        Acceptance rate below 1%.
    ConstructionError
        No configuration with non-zero amplitude found.
    """
    U = float(U)
    if math.isnan(U) or U < 0:
        raise DomainError(f"U must be >= 0, got {U}")
    if batches < 20:
        raise DomainError("at least 20 batches are required for the error bar")
    rng = np.random.default_rng(seed)
    n, m = state.n, state.m
    k = n + m
    if k == 0:
        raise DomainError("no particles")
    r0 = state.box.r0
    thin = k if thin is None else int(thin)
    burn_in = steps // 10 if burn_in is None else int(burn_in)
    X, Y = _start(state, rng)
    C = np.vstack([X, Y])
    amp = float(state.amplitude(C[:n], C[n:]))
    # neighbour template: (6k, k, 3) displacements
    disp = np.zeros((6 * k, k, 3), dtype=int)
    for p in range(k):
        disp[6 * p : 6 * p + 6, p] = _STEPS
    if math.isinf(U) and state.f([0, 0, 0]) != 0:
        raise DomainError("U = inf needs a trial state with f(0) = 0")

    def local_energy(C, amp):
        nb = C[None] + disp
        amps = state.amplitude(nb[:, :n], nb[:, n:])
        kin = float(np.sum(amp - amps)) / (r0**2 * amp)
        if U > 0 and not math.isinf(U) and n and m:
            v = int(np.sum(np.all(C[:n, None, :] == C[None, n:, :], axis=-1)))
            return kin + U * v
        return kin

    accepted = 0
    samples = []
    total = burn_in + steps
    for t in range(total):
        p = rng.integers(k)
        d = _STEPS[rng.integers(6)]
        trial = C.copy()
        trial[p] += d
        new = float(state.amplitude(trial[:n], trial[n:]))
        if new != 0 and rng.random() < (new / amp) ** 2:
            C, amp = trial, new
            if t >= burn_in:
                accepted += 1
        if t >= burn_in and (t - burn_in) % thin == 0:
            samples.append(local_energy(C, amp))
    acceptance = accepted / steps
    if acceptance < 0.01:
        raise MixingError(f"acceptance rate {acceptance:.3%} below 1%")
    e = np.asarray(samples)
    usable = (e.size // batches) * batches
    if usable < batches:
        raise DomainError("too few samples for the requested number of batches")
    means = e[:usable].reshape(batches, -1).mean(axis=1)
    mean = float(means.mean())
    err = float(means.std(ddof=1) / math.sqrt(batches))
    free = float(np.sum(state.up.eigenvalues) + np.sum(state.down.eigenvalues))
    return RayleighReport(
        numerator=mean,
        denominator=1.0,
        quotient=mean,
        free_kinetic=free,
        method="sampled",
        error=err,
        samples=int(e.size),
        acceptance=acceptance,
    )
