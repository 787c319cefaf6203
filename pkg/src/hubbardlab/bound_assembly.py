r"""Closed-form upper bound on the energy density and the polarization curve.

Two branches, selected by comparing ``a/r0`` with ``delta^{-1} x^{2/9}``
where ``x = a rho^{1/3}``:

* strong coupling: particles are localised in Dirichlet boxes of side
  ``l`` holding ``n`` up and ``m`` down particles, and the box energy is
  bounded by

  .. math::

     \tfrac35(6\pi^2)^{2/3}\frac{n^{5/3}+m^{5/3}}{l^2}
       \bigl(1 + C n^{-1/3} + C m^{-1/3} + C (n+m)^{2/3}(r_0/l)^2\bigr)
     + 8\pi a \frac{nm}{l^3}\bigl(1 + C[\dots]\bigr)
     + C (n+m)^{7/3} \frac{s^{3/2} a^{1/2}}{l^4},

  with every ``C`` taken from the frozen constants registry;
* weak coupling: the free Fermi sea on the whole lattice gives
  ``e0 + U r0^3 rho_up rho_down = e0 + 8 pi a rho_up rho_down (1 + gamma U r0^2)``.

:func:`calibrate` measures the registry constants on a fixed grid.
"""
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .constants import get_constant, save_registry
from .errors import DomainError, InvariantError, PreconditionError, RegimeError
from .free_fermi import FERMI_PREFACTOR, BoxSpec, free_gas_energy_density, orbital_basis
from .lattice_scattering import LatticeSpec, compute_gamma, scattering_length

__all__ = [
    "DEFAULT_DELTA",
    "BRACKET_EXPONENTS",
    "Parameters",
    "BoundReport",
    "choose_parameters",
    "regime",
    "assemble_strong",
    "assemble_weak",
    "assemble",
    "plane_wave_interaction",
    "polarization_curve",
    "PolarizationPoint",
    "localize",
    "power_law_fit",
    "calibrate",
]

DEFAULT_DELTA = 0.1
SAFETY = 2.0

#: exponent of x = a rho^{1/3} predicted for each bracket term with the
#: parameter choices of :func:`choose_parameters` (fixed a, rho -> 0)
BRACKET_EXPONENTS = {
    "kin_up": 11.0 / 9.0,
    "kin_down": 11.0 / 9.0,
    "kin_lattice": 2.0,
    "core": 2.0 / 9.0,
    "spread": 14.0 / 9.0,
    "boundary": 2.0 / 9.0,
    "shell_up": 11.0 / 9.0,
    "shell_down": 11.0 / 9.0,
    "confinement": 2.0 / 9.0,
}


@dataclass(frozen=True)
class Parameters:
    """Localisation parameters; ``n = rho_up l^3 + eps_up`` with ``0 <= eps_up < 1``."""

    x: float
    R: float
    s: float
    side: float
    n: int
    m: int
    eps_up: float
    eps_down: float


def _round_up(v):
    """Smallest integer ``>= v``; values within rounding noise of an integer snap to it."""
    k = round(v)
    if abs(v - k) <= max(1e-9, 1e-13 * v):
        return int(k), 0.0
    k = math.ceil(v)
    return k, k - v


def choose_parameters(rho_up, rho_down, a, r0=1.0):
    """``R = a x^{-2/9}``, ``s = 6R``, ``l = rho^{-1/3} x^{-11/9}`` and integer ``n, m``.

    Raises
    ------
    DomainError
        Negative densities, zero total density or ``a <= 0``.
    RegimeError
        ``rho a^3 >= 1``.
    """
    if rho_up < 0 or rho_down < 0:
        raise DomainError("densities must be non-negative")
    rho = rho_up + rho_down
    if not rho > 0:
        raise DomainError("total density must be positive")
    if not a > 0 or math.isinf(a):
        raise DomainError(f"scattering length must be positive and finite, got {a}")
    if rho * a**3 >= 1:
        raise RegimeError(f"rho a^3 = {rho * a**3:.3g} is not dilute")
    x = a * rho ** (1.0 / 3.0)
    R = a * x ** (-2.0 / 9.0)
    s = 6.0 * R
    side = rho ** (-1.0 / 3.0) * x ** (-11.0 / 9.0)
    vol = side**3
    n, eps_up = _round_up(rho_up * vol)
    m, eps_down = _round_up(rho_down * vol)
    params = Parameters(x, R, s, side, n, m, eps_up, eps_down)
    if not (0 <= params.eps_up < 1 and 0 <= params.eps_down < 1):
        raise InvariantError("particle_rounding", f"rounding remainders {params.eps_up}, {params.eps_down}")
    if params.s < 5 * params.R:
        raise InvariantError("separation", "s >= 5R violated")
    return params


def regime(a, rho, r0=1.0, delta=DEFAULT_DELTA):
    """``"strong"`` if ``a/r0 > delta^{-1} (a rho^{1/3})^{2/9}``, else ``"weak"``."""
    if a == 0:
        return "weak"
    x = a * rho ** (1.0 / 3.0)
    return "strong" if a / r0 > x ** (2.0 / 9.0) / delta else "weak"


@dataclass(frozen=True)
class BoundReport:
    """Upper bound on the energy density with all its ingredients.

    ``terms`` holds energy-density contributions (already divided by the
    box volume for the strong branch); ``brackets`` the dimensionless
    bracket entries ``C * term`` that the assembly requires to be small;
    ``flags`` names every violated assumption when assembled non-strictly.
    ``epsilon`` is ``(total - e0 - 8 pi a rho_up rho_down) / (a rho^2)``.
    """

    branch: str
    rho_up: float
    rho_down: float
    U: float
    r0: float
    a: float
    gamma: float
    delta: float
    regime: str
    e0: float
    interaction: float
    total: float
    epsilon: float
    params: object = None
    terms: dict = field(default_factory=dict)
    brackets: dict = field(default_factory=dict)
    flags: tuple = ()

    def row(self):
        """Flat ``{column: value}`` mapping used for CSV output."""
        out = {
            k: v for k, v in asdict(self).items() if k not in ("params", "terms", "brackets", "flags")
        }
        p = self.params
        for name in ("x", "R", "s", "side", "n", "m", "eps_up", "eps_down"):
            out[name] = getattr(p, name) if p is not None else math.nan
        for name in BRACKET_EXPONENTS:
            out[f"bracket_{name}"] = self.brackets.get(name, math.nan)
        out["flags"] = ";".join(self.flags)
        return out


def _scattering(U, r0):
    spec = LatticeSpec(r0=r0)
    return scattering_length(U, spec), compute_gamma(spec)


def _registry_constants(constants):
    names = ("kinetic", "inte3", "lemma2", "lemma3", "xi", "I3")
    if constants is None:
        return {k: get_constant(k) for k in names}
    missing = [k for k in names if k not in constants]
    if missing:
        raise PreconditionError(f"missing constants {missing}")
    return {k: float(constants[k]) for k in names}


def _power(base, p):
    return base**p if base > 0 else 0.0


def assemble_strong(rho_up, rho_down, U, r0=1.0, delta=DEFAULT_DELTA, constants=None, strict=True):
    """Strong-coupling bound from the localised trial state.

    With ``strict=False`` the formula is evaluated outside its regime and
    with large brackets too; the violations are listed in ``flags``.

    Raises
    ------
    RegimeError
        (strict only) the weak regime applies, or a bracket entry is >= 1;
        the message names the offending term.
    """
    a, gamma = _scattering(U, r0)
    rho = rho_up + rho_down
    reg = regime(a, rho, r0, delta)
    flags = []
    if reg != "strong":
        if strict:
            raise RegimeError(f"a/r0 = {a / r0:.4g} is in the weak regime for delta = {delta}")
        flags.append("regime")
    C = _registry_constants(constants)
    p = choose_parameters(rho_up, rho_down, a, r0)
    n, m, l, R, s = p.n, p.m, p.side, p.R, p.s
    k = n + m
    # bracket entries, set to 0 where their prefactor vanishes
    br = {
        "kin_up": C["kinetic"] * _power(n, -1.0 / 3.0) if n else 0.0,
        "kin_down": C["kinetic"] * _power(m, -1.0 / 3.0) if m else 0.0,
        "kin_lattice": C["kinetic"] * k ** (2.0 / 3.0) * (r0 / l) ** 2,
    }
    inter = {
        "core": C["lemma2"] * a * R**2 / s**3,
        "spread": C["lemma2"] * k ** (2.0 / 3.0) * (s / l) ** 2,
        "boundary": C["xi"] * a / R,
        "shell_up": C["inte3"] * n ** (-1.0 / 3.0) if n else 0.0,
        "shell_down": C["inte3"] * m ** (-1.0 / 3.0) if m else 0.0,
        "confinement": C["lemma3"] * k ** (8.0 / 3.0) * (s / l) ** 5,
    }
    if n * m == 0:
        inter = {key: 0.0 for key in inter}
    br.update(inter)
    vol = l**3
    kin_up = FERMI_PREFACTOR * _power(n, 5.0 / 3.0) / l**2
    kin_dn = FERMI_PREFACTOR * _power(m, 5.0 / 3.0) / l**2
    pair = 8.0 * math.pi * a * n * m / vol
    last = math.sqrt(8.0 * math.pi * C["I3"]) * k ** (7.0 / 3.0) * s**1.5 * math.sqrt(a) / l**4 if n * m else 0.0
    terms = {
        "free": (kin_up + kin_dn) / vol,
        "free_errors": (kin_up * (br["kin_up"] + br["kin_lattice"]) + kin_dn * (br["kin_down"] + br["kin_lattice"])) / vol,
        "pair": pair / vol,
        "pair_errors": pair * sum(inter.values()) / vol,
        "same_spin": last / vol,
    }
    total = localize(sum(v * vol for v in terms.values()), l, l)
    e0 = free_gas_energy_density(rho_up, rho_down)
    interaction = 8.0 * math.pi * a * rho_up * rho_down
    for name, val in br.items():
        if val >= 1:
            if strict:
                raise RegimeError(f"bracket term {name!r} = {val:.4g} is not small")
            flags.append(name)
    if any(v < 0 for v in br.values()):
        raise InvariantError("bracket_sign", "negative bracket term")
    return BoundReport(
        branch="strong",
        rho_up=rho_up,
        rho_down=rho_down,
        U=float(U),
        r0=r0,
        a=a,
        gamma=gamma,
        delta=delta,
        regime=reg,
        e0=e0,
        interaction=interaction,
        total=total,
        epsilon=(total - e0 - interaction) / (a * rho**2),
        params=p,
        terms=terms,
        brackets=br,
        flags=tuple(flags),
    )


def plane_wave_interaction(box, N, M):
    """``<Psi|v|Psi> = sum_x r0^6 rho_N(x) rho_M(x)`` for two free Fermi seas on ``box``."""
    dn = orbital_basis(box, N).density() if N else np.zeros(box.n_sites)
    dm = orbital_basis(box, M).density() if M else np.zeros(box.n_sites)
    return float(box.r0**6 * np.sum(dn * dm))


def assemble_weak(rho_up, rho_down, U, r0=1.0, delta=DEFAULT_DELTA, strict=True, check_box=(4, 2, 2)):
    """First-order bound ``e0 + U r0^3 rho_up rho_down`` from the free Fermi sea.

    Checks the identity ``U r0^3 = 8 pi a (1 + gamma U r0^2)`` and, on a
    periodic box ``(side, N, M)`` given by ``check_box`` (None to skip),
    that ``<Psi|v|Psi> = N M / V``.

    Raises
    ------
    RegimeError
        (strict only) the strong regime applies.
    InvariantError
        One of the two identities fails.
    """
    a, gamma = _scattering(U, r0)
    rho = rho_up + rho_down
    if rho_up < 0 or rho_down < 0 or not rho > 0:
        raise DomainError("densities must be non-negative with positive sum")
    reg = regime(a, rho, r0, delta)
    flags = []
    if reg != "weak":
        if strict:
            raise RegimeError(f"a/r0 = {a / r0:.4g} is in the strong regime for delta = {delta}")
        flags.append("regime")
    U = float(U)
    if not math.isinf(U):
        lhs = U * r0**3
        rhs = 8.0 * math.pi * a * (1.0 + gamma * U * r0**2)
        if abs(lhs - rhs) > 1e-8 * max(lhs, 1e-300):
            raise InvariantError("scattering_identity", f"U r0^3 = {lhs!r} but 8 pi a (1 + gamma U r0^2) = {rhs!r}")
    if check_box is not None:
        side, N, M = check_box
        box = BoxSpec(side, "periodic", r0)
        v = plane_wave_interaction(box, N, M)
        if abs(v - N * M / box.n_sites) > 1e-10:
            raise InvariantError("plane_wave_interaction", f"<v> = {v!r}, expected {N * M / box.n_sites!r}")
    e0 = free_gas_energy_density(rho_up, rho_down)
    interaction = 8.0 * math.pi * a * rho_up * rho_down
    if rho_up * rho_down == 0:
        onsite = 0.0
    elif math.isinf(U):
        onsite = math.inf
    else:
        onsite = U * r0**3 * rho_up * rho_down
    total = e0 + onsite
    eps = (total - e0 - interaction) / (a * rho**2) if a > 0 else 0.0
    return BoundReport(
        branch="weak",
        rho_up=rho_up,
        rho_down=rho_down,
        U=U,
        r0=r0,
        a=a,
        gamma=gamma,
        delta=delta,
        regime=reg,
        e0=e0,
        interaction=interaction,
        total=total,
        epsilon=eps,
        terms={"free": e0, "onsite": onsite},
        flags=tuple(flags),
    )


def assemble(rho_up, rho_down, U, r0=1.0, delta=DEFAULT_DELTA, constants=None, **kw):
    """Dispatch to the branch selected by :func:`regime`."""
    a, _ = _scattering(U, r0)
    if regime(a, rho_up + rho_down, r0, delta) == "strong":
        return assemble_strong(rho_up, rho_down, U, r0, delta, constants)
    return assemble_weak(rho_up, rho_down, U, r0, delta, **kw)


def localize(energy, side, big_side=None):
    """Energy density ``E / l^3`` of a lattice tiled by decoupled boxes of side ``l``.

    Raises
    ------
    PreconditionError
        ``big_side`` is not a multiple of ``side``; the message lists the
        nearest admissible sides.
    """
    if big_side is not None:
        q = big_side / side
        if abs(q - round(q)) > 1e-9 * max(1.0, q) or round(q) < 1:
            lo = max(1, math.floor(q)) * side
            hi = math.ceil(q) * side
            raise PreconditionError(f"side {big_side:g} is not a multiple of {side:g}; nearest admissible: {lo:g} or {hi:g}")
    return energy / side**3


@dataclass(frozen=True)
class PolarizationPoint:
    """``zeta_max`` bounds ``S/S_max``: larger splits cost more free energy than the best bound."""

    rho: float
    x: float
    branch: str
    zeta_opt: float
    bound: float
    zeta_max: float


def polarization_curve(densities, U, r0=1.0, delta=DEFAULT_DELTA, constants=None):
    """Largest admissible spin polarisation ``|rho_up - rho_down| / rho`` for each density.

    For each total density the upper bound ``B(zeta)`` is minimised over the
    split ``rho_up,down = rho (1 +- zeta)/2``; the free energy
    ``e0(zeta)`` is a lower bound at every split, so the ground state obeys
    ``e0(zeta) <= min B``. ``zeta_max`` is the largest such split.
    """
    a, _ = _scattering(U, r0)
    out = []
    for rho in densities:
        rho = float(rho)

        def bound(z):
            up, dn = 0.5 * rho * (1 + z), 0.5 * rho * (1 - z)
            if regime(a, rho, r0, delta) == "strong":
                return assemble_strong(up, dn, U, r0, delta, constants, strict=False).total
            return assemble_weak(up, dn, U, r0, delta, strict=False, check_box=None).total

        def free(z):
            return free_gas_energy_density(0.5 * rho * (1 + z), 0.5 * rho * (1 - z))

        branch = regime(a, rho, r0, delta)
        res = minimize_scalar(bound, bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-12})
        candidates = [(bound(0.0), 0.0), (bound(1.0), 1.0), (float(res.fun), float(res.x))]
        best, z_opt = min(candidates)
        if free(1.0) <= best:
            z_max = 1.0
        elif free(0.0) >= best:
            z_max = 0.0
        else:
            z_max = brentq(lambda z: free(z) - best, 0.0, 1.0, xtol=1e-15, rtol=1e-14)
        out.append(PolarizationPoint(rho, a * rho ** (1.0 / 3.0), branch, z_opt, best, z_max))
    return out


def power_law_fit(x, y):
    """Least-squares exponent and prefactor of ``y = c x^p`` in log-log space."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    p, logc = np.polyfit(lx, ly, 1)
    return float(p), float(math.exp(logc))


def calibrate(path=None, safety=SAFETY, quick=False):
    """Measure every registry constant on a fixed grid and write the registry.

    Each entry stores ``value = safety * max(raw, 0)`` together with the raw
    maximum and a description of the grid. ``quick`` shrinks the grids
    (for smoke tests; never used for the shipped registry).
    """
    from .determinantal import lemma2_bound, lemma2_scale, lemma3_ratio
    from .free_fermi import density_square_constant, kinetic_bound_constant, pair_density_constant, triple_density_constant
    from .lattice_scattering import build_profile
    from .trial_state import TrialState, build_f, build_g, xi_sum
    from .variational import decompose_terms, epsilon_scaling_constant

    entries = {}

    def put(name, raw, grid):
        entries[name] = {"value": safety * max(float(raw), 0.0), "raw": float(raw), "safety": safety, "grid": grid}

    gamma = compute_gamma(LatticeSpec())
    entries["gamma"] = {"value": gamma, "raw": gamma, "safety": 1.0, "grid": "Brillouin-zone quadrature, rtol 1e-10"}

    ns = range(2, 21, 6) if quick else range(2, 21)
    Ms = (6, 12) if quick else range(6, 13)
    kin, sq = [], []
    for M in Ms:
        box = BoxSpec(M)
        for n in ns:
            kin.append(kinetic_bound_constant(box, n))
            sq.append(density_square_constant(orbital_basis(box, n)))
    grid = f"Dirichlet M in {list(Ms)}, n in {list(ns)}"
    put("kinetic", max(kin), grid)
    put("inte3", max(sq), grid)

    pair, triple = [], []
    for M in (6, 8):
        for n in (4, 8, 16):
            b = orbital_basis(BoxSpec(M), n)
            pair.append(pair_density_constant(b))
            triple.append(triple_density_constant(b, max_triples=200_000 if quick else 2_000_000))
    put("2pdd", max(pair), "Dirichlet M in [6, 8], n in [4, 8, 16]")
    put("triple", max(triple), "Dirichlet M in [6, 8], n in [4, 8, 16], sampled triples")

    profiles = {U: build_profile(U) for U in (1.0, math.inf)}
    xi = []
    for prof in profiles.values():
        for R in (5.0, 10.0, 20.0):
            rep = xi_sum(build_f(prof, R), prof)
            xi.append((rep.ratio - 1.0) * R / prof.a)
    put("xi", max(xi), "U r0^2 in [1, inf], R/r0 in [5, 10, 20]")

    l2 = []
    for prof in profiles.values():
        f = build_f(prof, 5.0)
        for M in (21,) if quick else (21, 31):
            c = M // 2
            for n in (2, 4, 8):
                b = orbital_basis(BoxSpec(M), n)
                l2.append(lemma2_bound([[c, c, c]], b, f, 5.0, 25.0, constant=1.0).norm / lemma2_scale(f.a, 5.0, 25.0, n, b.box.side))
                if M >= 31:
                    ys = [[c - 12, c, c], [c + 13, c, c]]
                    l2.append(lemma2_bound(ys, b, f, 5.0, 25.0, constant=1.0).norm / lemma2_scale(f.a, 5.0, 25.0, n, b.box.side))
    put("lemma2", max(l2), "U r0^2 in [1, inf], R=5, s=25, M in [21, 31], n in [2, 4, 8], one or two centres")

    l3 = []
    f2 = build_f(profiles[1.0], 2.0)
    g2 = build_g(2.0)
    cases = [(5, 2), (6, 2)] if quick else [(5, 2), (6, 2), (8, 2), (6, 3)]
    for M, n in cases:
        c = M // 2
        rep = lemma3_ratio(orbital_basis(BoxSpec(M), n), f2, g2, [[c, c, c]], constant=1.0)
        l3.append((1.0 - rep.ratio) / rep.scale)
    put("lemma3", max(l3), f"U r0^2 = 1, R = 2, s = 2, one centre, (M, n) in {cases}")

    i3, eps_const = [], []
    cases = [(3, 2, 2), (3, 2, 1)] if quick else [(3, 2, 2), (3, 2, 1), (4, 2, 1), (4, 1, 2)]
    for M, n, m in cases:
        box = BoxSpec(M)
        st = TrialState(orbital_basis(box, n), orbital_basis(box, m), f2, g2)
        rep = decompose_terms(st, 1.0)
        scale = (n ** (8 / 3) + m ** (8 / 3)) * g2.s**3 / box.side**5
        i3.append(rep.I3 / (rep.denominator * scale))
        eps_const.append(epsilon_scaling_constant(rep.epsilon, n, m, g2.s, box.side, f2.a))
    put("I3", max(i3), f"U r0^2 = 1, R = 2, s = 2, exhaustive (M, n, m) in {cases}")
    entries["epsilon_scaling"] = {
        "value": max(eps_const),
        "raw": max(eps_const),
        "safety": 1.0,
        "grid": f"measured eps*^2 l^2 a n m / ((n+m)^(8/3) s^3) on the I3 grid, range [{min(eps_const):.4g}, {max(eps_const):.4g}]",
    }
    return save_registry(entries, path)
