"""Fixture suite behind ``hubbardlab verify-all``.

Each check returns ``(passed, details)``; exceptions count as failures and
are reported with their message. The quick suite touches every module and
finishes in well under five minutes.
"""
import math
import time

import numpy as np

__all__ = ["CHECKS", "run_suite"]


def _gamma():
    from .lattice_scattering import compute_gamma

    g1, g2 = compute_gamma(), compute_gamma(scheme="gauss")
    return abs(g1 - g2) <= 1e-6 * g1, {"midpoint": g1, "gauss": g2}


def _flux():
    from .lattice_scattering import ball_domain, build_profile, cube_domain, flux_through

    ratios = {}
    for U in (1.0, math.inf):
        prof = build_profile(U, radius=20)
        for name, dom in (("ball", ball_domain(6)), ("cube", cube_domain(9))):
            ratios[f"{U}/{name}"] = flux_through(dom, prof) / (4 * math.pi * prof.a)
    return all(abs(r - 1) <= 1e-4 for r in ratios.values()), ratios


def _asymptote():
    from .lattice_scattering import asymptotic_deficit, build_profile

    prof = build_profile(1.0)
    r = float(asymptotic_deficit(prof, [50])[0] / prof.a)
    return 0.98 <= r <= 1.02, {"ratio": r}


def _free_spectrum():
    from .free_fermi import BoxSpec, sum_lowest

    box = BoxSpec(4)
    nb = box.neighbours()
    H = 6.0 * np.eye(box.n_sites)
    for v in range(box.n_sites):
        for w in nb[v]:
            if w >= 0:
                H[v, w] -= 1.0
    ref = float(np.sum(np.linalg.eigvalsh(H)[:7]))
    val = sum_lowest(box, 7)
    return abs(val - ref) <= 1e-10 * ref, {"sum_lowest": val, "dense": ref}


def _lemma1():
    from .determinantal import exhaustive_norm, trace_identity, weighted_norm
    from .free_fermi import BoxSpec, orbital_basis

    rng = np.random.default_rng(0)
    b = orbital_basis(BoxSpec(3), 3)
    h = rng.uniform(0.05, 1, 27)
    det, brute = weighted_norm(b, h), exhaustive_norm(b, h)
    lhs, rhs = trace_identity(b, h, rng.normal(size=27))
    ok = abs(det - brute) <= 1e-9 * brute and abs(lhs - rhs) <= 1e-9 * abs(rhs)
    return ok, {"det": det, "exhaustive": brute, "trace": [lhs, rhs]}


def _xi():
    from .lattice_scattering import build_profile
    from .trial_state import build_f, xi_sum

    prof = build_profile(1.0)
    rep = xi_sum(build_f(prof, 10.0), prof)
    return rep.holds and rep.ratio <= 1 + 10 * prof.a / 10.0, {"ratio": rep.ratio, "total": rep.total}


def _ed():
    from .exact_diag import build_hamiltonian, ground_state_energy
    from .free_fermi import BoxSpec, sum_lowest

    U = 3.0
    dimer = ground_state_energy(build_hamiltonian(BoxSpec((2, 1, 1)), 1, 1, U)).energy
    exact = 12 + U / 2 - math.sqrt(4 + U * U / 4)
    box = BoxSpec((3, 2, 2))
    free = ground_state_energy(build_hamiltonian(box, 2, 2, 0.0)).energy
    ok = abs(dimer - exact) <= 1e-10 and abs(free - 2 * sum_lowest(box, 2)) <= 1e-8
    return ok, {"dimer": dimer, "free": free}


def _variational():
    from .exact_diag import build_hamiltonian, ground_state_energy
    from .free_fermi import BoxSpec, orbital_basis
    from .lattice_scattering import build_profile
    from .trial_state import JastrowF, JastrowG, TrialState, build_f, build_g
    from .variational import rayleigh_exhaustive

    box = BoxSpec(3)
    out = {}
    ok = True
    for U in (1.0, math.inf):
        st = TrialState(orbital_basis(box, 2), orbital_basis(box, 1), build_f(build_profile(U), 2.0), build_g(2.0))
        q = rayleigh_exhaustive(st, U).quotient
        e0 = ground_state_energy(build_hamiltonian(box, 2, 1, U)).energy
        ok &= q >= e0 - 1e-9
        out[str(U)] = {"quotient": q, "ground": e0}
    free = TrialState(orbital_basis(box, 2), orbital_basis(box, 2), JastrowF.identity(), JastrowG.identity())
    rep = rayleigh_exhaustive(free, 0.0)
    ok &= abs(rep.quotient - rep.free_kinetic) <= 1e-10 * rep.free_kinetic
    return bool(ok), out


def _weak():
    from .bound_assembly import assemble_weak, plane_wave_interaction
    from .free_fermi import BoxSpec

    v = plane_wave_interaction(BoxSpec(4, "periodic"), 2, 2)
    rep = assemble_weak(5e-7, 5e-7, 1.0)  # runs both identity checks
    return abs(v - 4 / 64) <= 1e-10, {"interaction": v, "total": rep.total}


def _scaling():
    from .bound_assembly import assemble_strong, power_law_fit
    from .lattice_scattering import scattering_length

    a = scattering_length(math.inf)
    xs = np.logspace(-5, -2, 7)
    eps = [assemble_strong(0.5 * (x / a) ** 3, 0.5 * (x / a) ** 3, math.inf, strict=False).epsilon for x in xs]
    p, _ = power_law_fit(xs, eps)
    return abs(p - 2 / 9) <= 0.02, {"exponent": p}


def _polarization():
    from .bound_assembly import polarization_curve, power_law_fit
    from .lattice_scattering import scattering_length

    a = scattering_length(1.0)
    pts = polarization_curve([(x / a) ** 3 for x in (1e-2, 1e-3, 1e-4)], 1.0)
    z = [p.zeta_max for p in pts]
    p, _ = power_law_fit([q.x for q in pts], z)
    return 0.45 <= p <= 0.55 and z[0] > z[1] > z[2] > 0, {"exponent": p, "zeta_max": z}


def _sampled():
    from .free_fermi import BoxSpec, orbital_basis
    from .lattice_scattering import build_profile
    from .trial_state import JastrowG, TrialState, build_f
    from .variational import rayleigh_exhaustive, rayleigh_sampled

    box = BoxSpec(3)
    st = TrialState(orbital_basis(box, 1), orbital_basis(box, 1), build_f(build_profile(1.0), 2.0), JastrowG.identity())
    ex = rayleigh_exhaustive(st, 1.0).quotient
    rep = rayleigh_sampled(st, 1.0, steps=6000, seed=1)
    return abs(rep.quotient - ex) <= 3 * rep.error, {"exhaustive": ex, "sampled": rep.quotient, "error": rep.error}


def _lemmas23():
    from .determinantal import lemma2_bound, lemma3_ratio
    from .free_fermi import BoxSpec, orbital_basis
    from .lattice_scattering import build_profile
    from .trial_state import build_f, build_g

    prof = build_profile(1.0)
    r2 = lemma2_bound([[10, 10, 10]], orbital_basis(BoxSpec(21), 4), build_f(prof, 5.0), 5.0, 25.0)
    r3 = lemma3_ratio(orbital_basis(BoxSpec(5), 2), build_f(prof, 2.0), build_g(2.0), [[2, 2, 2]])
    return r2.holds and r3.holds, {"lemma2_norm": r2.norm, "lemma2_bound": r2.bound, "lemma3_ratio": r3.ratio}


CHECKS = {
    "gamma_two_schemes": (_gamma, True),
    "flux_identity": (_flux, True),
    "asymptotic_deficit": (_asymptote, True),
    "dirichlet_spectrum": (_free_spectrum, True),
    "lemma1_identities": (_lemma1, True),
    "lemmas_2_3_calibrated": (_lemmas23, True),
    "xi_sum": (_xi, True),
    "exact_diag_fixtures": (_ed, True),
    "variational_upper_bound": (_variational, True),
    "weak_coupling_identities": (_weak, True),
    "epsilon_exponent": (_scaling, True),
    "polarization_exponent": (_polarization, True),
    "sampled_vs_exhaustive": (_sampled, True),
}


def run_suite(quick=False):
    """Run the checks (all of them, or the quick subset) and return result rows."""
    rows = []
    for name, (fn, in_quick) in CHECKS.items():
        if quick and not in_quick:
            continue
        t0 = time.perf_counter()
        try:
            ok, details = fn()
        except Exception as err:  # a crashing check is a failed check
            ok, details = False, {"error": f"{type(err).__name__}: {err}"}
        rows.append({"check": name, "pass": bool(ok), "seconds": time.perf_counter() - t0, "details": details})
    return rows
