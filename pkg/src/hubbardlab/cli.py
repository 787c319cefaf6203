"""Command-line front end: ``hubbardlab <subcommand> [flags]``.

Exit status is 0 on success, 1 on usage errors (bad flags, unknown config
keys) and 2 when a check or invariant fails; the failing check is named on
stderr. Numerical modules are imported lazily so that the thread count
(``--threads`` or ``HUBBARDLAB_THREADS``) reaches the BLAS runtime before
numpy loads it.
"""
import argparse
import json
import math
import os
import sys

CSV_HEADER = "# hubbardlab-csv v1"
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")

GLOBAL_KEYS = {"r0", "seed", "tol", "output", "format", "threads", "constants"}
SUBCOMMANDS = ("scatter", "free", "lemmas", "trial", "ed", "var", "bound", "verify-all")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ---------------------------------------------------------------- emission


def _fmt(x):
    if isinstance(x, bool) or x is None:
        return json.dumps(x)
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        if math.isnan(x):
            return "NaN"
        if math.isinf(x):
            return "Infinity" if x > 0 else "-Infinity"
        return format(x, ".17g")
    return json.dumps(x)


def _plain(obj):
    """Convert numpy scalars/arrays, dataclasses and tuples to JSON-ready values."""
    import dataclasses

    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj) if f.repr}
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if hasattr(obj, "tolist"):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, int, float, str)) or obj is None:
        return obj
    return str(obj)


def to_json(obj, indent=0):
    """JSON text with floats at 17 significant digits and insertion order kept."""
    obj = _plain(obj)
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {to_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_fmt(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + to_json(v, indent + 1) for v in obj) + "\n" + end + "]"
    return _fmt(obj)


def to_csv(rows):
    """Versioned CSV: a header comment, the column names, one line per row."""
    rows = [_plain(r) for r in rows]
    if not rows:
        return CSV_HEADER + "\n"
    cols = list(rows[0])
    lines = [CSV_HEADER, ",".join(cols)]
    for r in rows:
        lines.append(",".join(_fmt(r[c]) if not isinstance(r[c], str) else r[c] for c in cols))
    return "\n".join(lines) + "\n"


def emit(report, path=None, fmt="json"):
    """Write ``report`` (a mapping, or a list of rows for CSV) to ``path`` or stdout."""
    text = to_csv(report) if fmt == "csv" else to_json(report) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
        return None
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as err:
        raise OSError(f"cannot write {path}: {err.strerror}") from err
    return path


# ---------------------------------------------------------------- parsing


def _coupling(text):
    t = str(text).strip().lower()
    if t in ("inf", "infinity", "+inf"):
        return math.inf
    try:
        return float(t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a coupling: {text!r}") from None


def _sites(text):
    parts = [int(p) for p in str(text).replace("x", ",").split(",") if p]
    if len(parts) == 1:
        return parts[0]
    if len(parts) == 3:
        return tuple(parts)
    raise argparse.ArgumentTypeError(f"sites must be M or Mx,My,Mz, got {text!r}")


REQUIRED = {}


def _flag(parser, name, required=False, **kw):
    """Add a flag; required ones are checked after the config file is merged."""
    action = parser.add_argument(name, **kw)
    if required:
        action.help = (action.help + " " if action.help else "") + "(required)"
        REQUIRED.setdefault(parser.prog.split()[-1], []).append(action.dest)
    return action


def build_parser():
    REQUIRED.clear()
    p = _Parser(prog="hubbardlab", description="Numerical checks of the dilute Hubbard upper bound.")
    p.add_argument("--config", help="JSON config file with global keys and per-subcommand blocks")
    p.add_argument("--output", "-o", help="output path (default stdout)")
    p.add_argument("--format", choices=("json", "csv"))
    p.add_argument("--r0", type=float, help="lattice spacing (default 1)")
    p.add_argument("--seed", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--threads", type=int, help="BLAS/OpenMP threads (env HUBBARDLAB_THREADS)")
    p.add_argument("--constants", help="constants registry path")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("scatter", help="scattering length, gamma and flux checks")
    _flag(s, "--U", type=_coupling, required=True)
    _flag(s, "--radius", type=int)

    s = sub.add_parser("free", help="free-fermion spectrum and bound constants")
    _flag(s, "--sites", type=_sites, required=True)
    _flag(s, "--boundary", choices=("dirichlet", "periodic"))
    _flag(s, "--n-up", type=int, required=True)
    _flag(s, "--n-down", type=int)

    s = sub.add_parser("lemmas", help="determinantal identities and bounds")
    _flag(s, "--which", type=int, choices=(1, 2, 3), required=True)
    _flag(s, "--n", type=int, required=True)
    _flag(s, "--sites", type=_sites, required=True)

    s = sub.add_parser("trial", help="trial state construction and the xi sum")
    _flag(s, "--U", type=_coupling, required=True)
    _flag(s, "--R", type=float, required=True)
    _flag(s, "--s", type=float, required=True)
    _flag(s, "--n-up", type=int)
    _flag(s, "--n-down", type=int)
    _flag(s, "--sites", type=_sites)

    s = sub.add_parser("ed", help="exact ground energy")
    _flag(s, "--sites", type=_sites, required=True)
    _flag(s, "--n-up", type=int, required=True)
    _flag(s, "--n-down", type=int, required=True)
    _flag(s, "--U", type=_coupling, required=True)

    s = sub.add_parser("var", help="Rayleigh quotient of the trial state")
    _flag(s, "--sites", type=_sites, required=True)
    _flag(s, "--n-up", type=int, required=True)
    _flag(s, "--n-down", type=int, required=True)
    _flag(s, "--U", type=_coupling, required=True)
    _flag(s, "--R", type=float, required=True)
    _flag(s, "--s", type=float, required=True)
    _flag(s, "--method", choices=("exhaustive", "sampled"))
    _flag(s, "--steps", type=int)

    s = sub.add_parser("bound", help="assembled upper bound (CSV, one row per grid point)")
    _flag(s, "--rho-up", type=float)
    _flag(s, "--rho-down", type=float)
    _flag(s, "--U", type=_coupling, required=True)
    _flag(s, "--delta", type=float)
    _flag(s, "--sweep", help="log grid in x = a rho^(1/3) as XMIN:XMAX:COUNT (polarization rho_up/rho fixed)")
    _flag(s, "--strict", action="store_true", help="raise on regime or bracket violations")
    _flag(s, "--recalibrate", action="store_true", help="re-measure the constants registry first")

    s = sub.add_parser("verify-all", help="run the fixture suite")
    _flag(s, "--quick", action="store_true")
    return p


def _load_config(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as err:
        raise UsageError(f"cannot read config {path}: {err.strerror}") from None
    except json.JSONDecodeError as err:
        raise UsageError(f"config {path} is not valid JSON: {err}") from None
    if not isinstance(data, dict):
        raise UsageError("config must be a JSON object")
    unknown = [k for k in data if k not in GLOBAL_KEYS and k not in SUBCOMMANDS]
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return data


def _merge(args, parser, argv):
    """Fill unset flags from the config file; explicit flags win."""
    if not args.config:
        return args
    data = _load_config(args.config)
    sub_parser = parser._subparsers._group_actions[0].choices[args.command]
    allowed = {a.dest for a in sub_parser._actions if a.dest != "help"}
    block = data.get(args.command, {})
    if not isinstance(block, dict):
        raise UsageError(f"config block {args.command!r} must be an object")
    bad = [k for k in block if k.replace("-", "_") not in allowed]
    if bad:
        raise UsageError(f"unknown keys in config block {args.command!r}: {', '.join(sorted(bad))}")
    for k, v in data.items():
        if k in GLOBAL_KEYS and getattr(args, k) is None:
            setattr(args, k, v)
    for k, v in block.items():
        dest = k.replace("-", "_")
        current = getattr(args, dest, None)
        if current is None or current is False:
            if dest == "U":
                v = _coupling(v)
            elif dest == "sites":
                v = _sites(v) if isinstance(v, str) else (tuple(v) if isinstance(v, list) else v)
            setattr(args, dest, v)
    return args


def _check_required(args, parser):
    missing = [d for d in REQUIRED.get(args.command, []) if getattr(args, d, None) is None]
    if missing:
        sub = parser._subparsers._group_actions[0].choices[args.command]
        sub.print_usage(sys.stderr)
        flags = ", ".join("--" + d.replace("_", "-") for d in missing)
        raise UsageError(f"hubbardlab {args.command}: error: missing required flag(s) {flags}")


def _defaults(args):
    args.r0 = 1.0 if args.r0 is None else float(args.r0)
    args.seed = 0 if args.seed is None else int(args.seed)
    if args.format is None:
        args.format = "csv" if args.command == "bound" else "json"


# ---------------------------------------------------------------- subcommands


def cmd_scatter(args):
    from .lattice_scattering import (
        DEFAULT_TAB_RADIUS,
        LatticeSpec,
        asymptotic_deficit,
        ball_domain,
        build_profile,
        compute_gamma,
        flux_through,
        origin_balance,
    )

    spec = LatticeSpec(r0=args.r0)
    radius = args.radius or DEFAULT_TAB_RADIUS
    prof = build_profile(args.U, spec, radius=radius)
    flux = flux_through(ball_domain(min(10, radius - 2)), prof)
    lhs, rhs = origin_balance(prof)
    out = {
        "U": args.U,
        "r0": args.r0,
        "gamma": prof.gamma,
        "gamma_gauss": compute_gamma(spec, "gauss"),
        "a": prof.a,
        "phi_origin": float(prof.phi([0, 0, 0])),
        "flux_over_4pi_a": flux / (4 * math.pi * prof.a) if prof.a > 0 else math.nan,
        "origin_balance": [lhs, rhs],
    }
    d = min(50, radius - 1)
    if prof.a > 0:
        out["deficit_ratio"] = {"distance": d, "value": float(asymptotic_deficit(prof, [d])[0] / prof.a)}
    return out


def cmd_free(args):
    from .free_fermi import (
        BoxSpec,
        density_square_constant,
        fill,
        kinetic_bound_constant,
        orbital_basis,
    )

    box = BoxSpec(args.sites, args.boundary or "dirichlet", args.r0)
    out = {"box": list(box.shape), "boundary": box.boundary, "side": box.side}
    for label, n in (("up", args.n_up), ("down", args.n_down)):
        if n is None:
            continue
        E, labels = fill(box, n)
        entry = {"n": n, "energy": E, "labels": labels}
        if box.boundary == "dirichlet":
            entry["kinetic_constant"] = kinetic_bound_constant(box, n)
            entry["density_square_constant"] = density_square_constant(orbital_basis(box, n))
        out[label] = entry
    return out


def cmd_lemmas(args):
    import numpy as np

    from .determinantal import exhaustive_norm, lemma2_bound, lemma3_ratio, trace_identity, weighted_norm
    from .free_fermi import BoxSpec, orbital_basis
    from .lattice_scattering import LatticeSpec, build_profile
    from .trial_state import build_f, build_g

    rng = np.random.default_rng(args.seed)
    box = BoxSpec(args.sites, r0=args.r0)
    b = orbital_basis(box, args.n)
    c = [v // 2 for v in box.shape]
    if args.which == 1:
        h = rng.uniform(0.05, 1.0, box.n_sites)
        k = rng.normal(size=box.n_sites)
        det = weighted_norm(b, h)
        brute = exhaustive_norm(b, h)
        lhs, rhs = trace_identity(b, h, k)
        ok = abs(det - brute) <= 1e-9 * abs(brute) and abs(lhs - rhs) <= 1e-9 * abs(rhs)
        return {"lemma": 1, "det_norm": det, "exhaustive_norm": brute, "trace_lhs": lhs, "trace_rhs": rhs, "pass": ok}
    prof = build_profile(1.0, LatticeSpec(r0=args.r0))
    if args.which == 2:
        R = 5.0 * args.r0
        rep = lemma2_bound([c], b, build_f(prof, R), R, 5 * R)
        return {"lemma": 2, "report": rep, "pass": rep.holds}
    f = build_f(prof, 2.0 * args.r0)
    rep = lemma3_ratio(b, f, build_g(2.0 * args.r0, r0=args.r0), [c])
    return {"lemma": 3, "report": rep, "pass": rep.holds}


def cmd_trial(args):
    import numpy as np

    from .free_fermi import BoxSpec, orbital_basis
    from .lattice_scattering import LatticeSpec, build_profile
    from .trial_state import TrialState, build_f, build_g, max_bond_increment, xi_sum

    spec = LatticeSpec(r0=args.r0)
    radius = max(20, int(2 * args.R / args.r0) + 4)
    prof = build_profile(args.U, spec, radius=radius)
    f = build_f(prof, args.R)
    g = build_g(args.s, r0=args.r0)
    out = {
        "a": prof.a,
        "omega_sites": int(len(f.omega)),
        "boundary_avg": f.boundary_avg,
        "fallback": f.fallback,
        "f_origin": float(f([0, 0, 0])),
        "g_max_bond_increment": max_bond_increment(g),
        "g_bond_limit": 4 * args.r0 / args.s,
        "xi": xi_sum(f, prof),
    }
    if args.sites is not None and args.n_up is not None:
        box = BoxSpec(args.sites, r0=args.r0)
        st = TrialState(orbital_basis(box, args.n_up), orbital_basis(box, args.n_down or 0), f, g)
        rng = np.random.default_rng(args.seed)
        coords = box.coords()
        worst = 0.0
        for _ in range(50):
            X = coords[rng.choice(box.n_sites, st.n, replace=False)]
            Y = coords[rng.choice(box.n_sites, st.m, replace=False)]
            if st.n >= 2:
                X2 = X.copy()
                X2[[0, 1]] = X2[[1, 0]]
                worst = max(worst, abs(st.amplitude(X2, Y) + st.amplitude(X, Y)))
        out["antisymmetry_max_violation"] = worst
    return out


def cmd_ed(args):
    from .exact_diag import build_hamiltonian, ground_state_energy
    from .free_fermi import BoxSpec

    h = build_hamiltonian(BoxSpec(args.sites, r0=args.r0), args.n_up, args.n_down, args.U)
    g = ground_state_energy(h, tol=args.tol or 1e-8, seed=args.seed)
    return {"dimension": g.dimension, "energy": g.energy, "residual": g.residual, "iterations": g.iterations}


def _trial_state(sites, n, m, U, R, s, r0):
    from .free_fermi import BoxSpec, orbital_basis
    from .lattice_scattering import LatticeSpec, build_profile
    from .trial_state import JastrowF, TrialState, build_f, build_g

    box = BoxSpec(sites, r0=r0)
    spec = LatticeSpec(r0=r0)
    f = build_f(build_profile(U, spec, radius=max(20, int(2 * R / r0) + 4)), R) if U > 0 else JastrowF.identity(r0)
    return TrialState(orbital_basis(box, n), orbital_basis(box, m), f, build_g(s, r0=r0))


def cmd_var(args):
    from .variational import rayleigh_exhaustive, rayleigh_sampled

    st = _trial_state(args.sites, args.n_up, args.n_down, args.U, args.R, args.s, args.r0)
    if (args.method or "exhaustive") == "exhaustive":
        rep = rayleigh_exhaustive(st, args.U)
    else:
        rep = rayleigh_sampled(st, args.U, steps=args.steps or 20000, seed=args.seed)
    out = _plain(rep)
    out["slack"] = rep.slack
    return out


def cmd_bound(args):
    import numpy as np

    from .bound_assembly import DEFAULT_DELTA, assemble, assemble_strong, assemble_weak, calibrate, regime
    from .constants import load_registry
    from .lattice_scattering import LatticeSpec, scattering_length

    if args.recalibrate:
        calibrate(args.constants)
    delta = args.delta or DEFAULT_DELTA
    a = scattering_length(args.U, LatticeSpec(r0=args.r0))
    registry = load_registry(args.constants)
    constants = {k: v["value"] for k, v in registry["entries"].items()}
    if args.sweep:
        try:
            lo, hi, count = args.sweep.split(":")
            xs = np.logspace(math.log10(float(lo)), math.log10(float(hi)), int(count))
        except ValueError:
            raise UsageError(f"--sweep must be XMIN:XMAX:COUNT, got {args.sweep!r}") from None
        frac = 0.5
        if args.rho_up is not None and args.rho_down is not None:
            frac = args.rho_up / (args.rho_up + args.rho_down)
        points = [(frac * (x / a) ** 3, (1 - frac) * (x / a) ** 3) for x in xs]
    else:
        if args.rho_up is None or args.rho_down is None:
            raise UsageError("bound needs --rho-up and --rho-down, or --sweep")
        points = [(args.rho_up, args.rho_down)]
    rows = []
    for up, dn in points:
        if args.strict:
            rep = assemble(up, dn, args.U, args.r0, delta, constants)
        elif regime(a, up + dn, args.r0, delta) == "strong":
            rep = assemble_strong(up, dn, args.U, args.r0, delta, constants, strict=False)
        else:
            rep = assemble_weak(up, dn, args.U, args.r0, delta, strict=False)
        rows.append(rep.row())
    if args.output and args.output != "-":
        emit(registry, args.output + ".constants.json", "json")
    return rows


def cmd_verify_all(args):
    from .verify import run_suite

    results = run_suite(quick=args.quick)
    failed = [r["check"] for r in results if not r["pass"]]
    for r in results:
        print(f"{'PASS' if r['pass'] else 'FAIL'}  {r['check']}  ({r['seconds']:.2f} s)", file=sys.stderr)
    if failed:
        from .errors import InvariantError

        emit({"results": results}, args.output, "json")
        raise InvariantError(failed[0], f"{len(failed)} check(s) failed: {', '.join(failed)}")
    return {"results": results}


HANDLERS = {
    "scatter": cmd_scatter,
    "free": cmd_free,
    "lemmas": cmd_lemmas,
    "trial": cmd_trial,
    "ed": cmd_ed,
    "var": cmd_var,
    "bound": cmd_bound,
    "verify-all": cmd_verify_all,
}


def main(argv=None):
    """Entry point; returns the process exit status."""
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(argv)
        args = _merge(args, parser, argv)
        _check_required(args, parser)
        _defaults(args)
    except UsageError as err:
        print(err, file=sys.stderr)
        return 1
    except SystemExit as err:  # --help
        return int(err.code or 0)
    threads = args.threads or os.environ.get("HUBBARDLAB_THREADS")
    if threads:
        for var in THREAD_VARS:
            os.environ[var] = str(int(threads))
    from .errors import HubbardLabError, InvariantError

    try:
        result = HANDLERS[args.command](args)
        fmt = args.format
        if fmt == "csv" and not isinstance(result, list):
            result = [result]
        emit(result, args.output, fmt)
    except UsageError as err:
        print(err, file=sys.stderr)
        return 1
    except InvariantError as err:
        print(f"check failed: {err}", file=sys.stderr)
        return 2
    except HubbardLabError as err:
        print(f"check failed: {type(err).__name__}: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
