"""Command-line front end.

Subcommands: ``vg-info``, ``chaos-cumulants``, ``bound-report``,
``stein-solve`` and ``rosenblatt-rate``.

Exit codes: 0 success, 2 usage error, 3 numerical failure (quadrature,
eigen-solver, inconsistent variance), 4 violated precondition (bad
parameters, mismatched ``kappa_2``, point outside the exponent triangle).

Every JSON report carries ``schema_version``, the package ``version`` and
``config_sha256``, the SHA-256 of the resolved configuration.  A flat
``key = value`` file passed with ``--config`` overrides command-line flags;
keys are flag names with dashes or underscores.
"""
import argparse
import configparser
import hashlib
import io
import json
import os
import sys

import numpy as np

from . import __version__

SCHEMA_VERSION = 1

# keys excluded from the config hash: they do not change results
_UNHASHED = {"out", "workers", "config", "command", "func", "format"}


def _parse_grid(text):
    try:
        a, b, n = text.split(":")
        a, b, n = float(a), float(b), int(n)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like START:STOP:COUNT, got {text!r}")
    if n < 1:
        raise argparse.ArgumentTypeError("grid COUNT must be >= 1")
    return a, b, n


def _parse_floats(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated reals, got {text!r}")


def _load_config(path):
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            cp.read_string("[run]\n" + fh.read())
    except (OSError, configparser.Error) as exc:
        raise UsageError(f"cannot read config {path}: {exc}")
    return {k.replace("-", "_"): v for k, v in cp["run"].items()}


class UsageError(Exception):
    pass


def _apply_config(args, parser):
    if not getattr(args, "config", None):
        return args
    overrides = _load_config(args.config)
    actions = {a.dest: a for a in parser._actions}
    for key, raw in overrides.items():
        if key not in actions or key in ("config", "command"):
            raise UsageError(f"unknown config key {key!r}")
        act = actions[key]
        if isinstance(act, argparse._StoreTrueAction):
            val = raw.strip().lower() in ("1", "true", "yes", "on")
        elif act.type is not None:
            try:
                val = act.type(raw)
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"bad value for {key}: {exc}")
        else:
            val = raw
        if act.choices is not None and val not in act.choices:
            raise UsageError(f"{key} must be one of {sorted(act.choices)}")
        setattr(args, key, val)
    return args


def _require(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _config_dict(args):
    cfg = {}
    for k, v in sorted(vars(args).items()):
        if k in _UNHASHED:
            continue
        cfg[k] = list(v) if isinstance(v, tuple) else v
    return cfg


def _envelope(command, args, payload):
    cfg = _config_dict(args)
    sha = hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()
    out = {"schema_version": SCHEMA_VERSION, "version": __version__, "command": command,
           "config": cfg, "config_sha256": sha}
    out.update(payload)
    return out


def _dumps(obj):
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def _emit(args, name, text, stdout=True):
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, name), "w", newline="\n") as fh:
            fh.write(text)
    if stdout:
        sys.stdout.write(text)


def _vg_params(args):
    from .vg import VgParams

    _require(args, "r", "theta", "sigma")
    return VgParams(args.r, args.theta, args.sigma)


# ---------------------------------------------------------------------------
# commands


def cmd_vg_info(args):
    from .vg import cumulant_identity_residual, cumulants_2_to_6, density

    p = _vg_params(args)
    kap = cumulants_2_to_6(p)
    payload = {"params": p.to_dict(),
               "cumulants": {str(k): float(v) for k, v in zip(range(2, 7), kap)},
               "identity_residual": cumulant_identity_residual(p)}
    report = _dumps(_envelope("vg-info", args, payload))
    if args.density_grid is None:
        _emit(args, "vg_info.json", report)
        return 0
    a, b, n = args.density_grid
    xs = np.linspace(a, b, n)
    with np.errstate(all="ignore"):
        import warnings
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            ds = np.atleast_1d(density(p, xs))
    buf = io.StringIO()
    buf.write("x,density\n")
    for x, d in zip(xs, ds):
        buf.write(f"{x:.17g},{d:.17g}\n")
    _emit(args, "vg_info.json", report, stdout=False)
    _emit(args, "density.csv", buf.getvalue())
    return 0


def _read_spectrum(args):
    from .chaos import SecondChaosElement

    if args.eigenvalues is not None:
        return SecondChaosElement(np.asarray(args.eigenvalues, dtype=float))
    if args.spectrum is None:
        raise UsageError("give --spectrum FILE or --eigenvalues LIST")
    try:
        with open(args.spectrum) as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read spectrum file: {exc}")
    text = text.strip()
    if text.startswith("["):
        return SecondChaosElement.from_json(text)
    return SecondChaosElement(np.asarray(_parse_floats(text.replace("\n", ",")), dtype=float))


def cmd_chaos_cumulants(args):
    from .chaos import cumulants

    F = _read_spectrum(args)
    orders = list(range(2, args.max_order + 1))
    kap = cumulants(F, orders)
    payload = {"n_eigenvalues": len(F),
               "cumulants": {str(k): float(v) for k, v in zip(orders, kap)}}
    _emit(args, "chaos_cumulants.json", _dumps(_envelope("chaos-cumulants", args, payload)))
    return 0


def cmd_bound_report(args):
    from .bounds import build_bound_report

    _require(args, "seed")
    F = _read_spectrum(args)
    p = _vg_params(args)
    rep = build_bound_report(F, p, args.n_mc, args.seed, rescale=args.rescale, workers=args.workers)
    _emit(args, "bound_report.json", _dumps(_envelope("bound-report", args, {"report": rep.to_dict()})))
    return 0


def _builtin_h(name):
    from .bounds import default_dictionary

    table = {
        "x": lambda x: x,
        "x2": lambda x: x * x,
        "x^2": lambda x: x * x,
        "tanh": np.tanh,
        "sin": np.sin,
        "bump": lambda x: np.exp(-0.5 * x * x),
        "const": lambda x: np.ones_like(np.asarray(x, dtype=float)),
    }
    for d in default_dictionary():
        table.setdefault(d.name, d)
    if name not in table:
        raise UsageError(f"unknown h {name!r}; choose from {', '.join(sorted(table))}")
    return table[name]


def cmd_stein_solve(args):
    from .stein import SteinGrid, solve

    _require(args, "h")
    p = _vg_params(args)
    h = _builtin_h(args.h)
    grid = SteinGrid(args.x_min, args.x_max, args.n_points, args.spacing)
    sol = solve(p, h, grid)
    summary = {"residual_max": sol.residual_max, "expectation": sol.expectation,
               "branch_gap": sol.branch_gap, "n_points": int(sol.x.size)}
    if args.out:
        _emit(args, "stein.csv", sol.to_csv(), stdout=False)
        _emit(args, "stein.json", _dumps(_envelope("stein-solve", args, summary)))
    else:
        sys.stdout.write(sol.to_csv())
        sys.stdout.write(f"# residual_max={sol.residual_max:.6e}\n")
    return 0


def cmd_rosenblatt_rate(args):
    from .rosenblatt import RATE_COLUMNS, rate_experiment

    _require(args, "case", "seed")
    if args.case == "b" and args.rho is None:
        raise UsageError("case b needs --rho")
    res = rate_experiment(args.case, tuple(args.gamma1), rho=args.rho, gamma2=args.gamma2,
                          n_nodes=args.n_nodes, mesh=args.mesh, n_mc=args.n_mc, seed=args.seed,
                          workers=args.workers)
    buf = io.StringIO()
    buf.write(",".join(RATE_COLUMNS) + "\n")
    for row in res["rows"]:
        buf.write(",".join(f"{row[k]:.17g}" for k in RATE_COLUMNS) + "\n")
    payload = {"target": res["target"], "slopes": res["slopes"], "rows": res["rows"]}
    _emit(args, "rate.csv", buf.getvalue(), stdout=False)
    _emit(args, "rate_summary.json", _dumps(_envelope("rosenblatt-rate", args, payload)))
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser():
    ap = argparse.ArgumentParser(prog="vgchaos", description="Variance-Gamma / second-chaos toolkit")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, seed=False):
        sp.add_argument("--config", help="flat key = value file; overrides flags")
        sp.add_argument("--out", help="output directory")
        if seed:
            sp.add_argument("--seed", type=int, help="root seed (required)")
            sp.add_argument("--workers", type=int, default=1, help="threads; results do not depend on it")

    def vg_flags(sp):
        sp.add_argument("--r", type=float)
        sp.add_argument("--theta", type=float)
        sp.add_argument("--sigma", type=float)

    def spectrum_flags(sp):
        sp.add_argument("--spectrum", help="file with a JSON array or comma/newline separated reals")
        sp.add_argument("--eigenvalues", type=_parse_floats, help="comma-separated eigenvalues")

    sp = sub.add_parser("vg-info", help="cumulants, identity check and density table")
    vg_flags(sp)
    sp.add_argument("--density-grid", type=_parse_grid, help="START:STOP:COUNT")
    common(sp)
    sp.set_defaults(func=cmd_vg_info)

    sp = sub.add_parser("chaos-cumulants", help="cumulants of a finite spectrum")
    spectrum_flags(sp)
    sp.add_argument("--max-order", type=int, default=6, choices=range(2, 13), metavar="{2..12}")
    common(sp)
    sp.set_defaults(func=cmd_chaos_cumulants)

    sp = sub.add_parser("bound-report", help="bounds and distance estimates for (F, Y)")
    spectrum_flags(sp)
    vg_flags(sp)
    sp.add_argument("--n-mc", type=int, default=1_000_000)
    sp.add_argument("--rescale", action="store_true", help="rescale F to kappa_2(Y)")
    common(sp, seed=True)
    sp.set_defaults(func=cmd_bound_report)

    sp = sub.add_parser("stein-solve", help="solve the Stein equation for a built-in h")
    vg_flags(sp)
    sp.add_argument("--h", help="x, x2, tanh, sin, bump, const or a dictionary name")
    sp.add_argument("--x-min", type=float, default=-8.0)
    sp.add_argument("--x-max", type=float, default=8.0)
    sp.add_argument("--n-points", type=int, default=2048)
    sp.add_argument("--spacing", choices=("uniform", "tanh"), default="uniform")
    common(sp)
    sp.set_defaults(func=cmd_stein_solve)

    sp = sub.add_parser("rosenblatt-rate", help="corner-rate sweep for the generalized Rosenblatt variable")
    sp.add_argument("--case", choices=("a", "b"))
    sp.add_argument("--rho", type=float)
    sp.add_argument("--gamma1", type=_parse_floats, default=[-0.52, -0.53, -0.55, -0.58, -0.62])
    sp.add_argument("--gamma2", type=float, default=-0.75, help="fixed gamma2 for case a")
    sp.add_argument("--n-nodes", type=int, default=800)
    sp.add_argument("--mesh", type=float, default=3.0)
    sp.add_argument("--n-mc", type=int, default=0, help="Monte Carlo size per point (0 = skip)")
    common(sp, seed=True)
    sp.set_defaults(func=cmd_rosenblatt_rate)
    return ap


_VALUE_FLAGS = {"--density-grid", "--gamma1", "--eigenvalues", "--theta", "--gamma2", "--x-min",
                "--x-max", "--rho", "--r", "--sigma"}


def _glue_negative_values(argv):
    # argparse mistakes "-5:5:101" or "-0.52,-0.53" for options; glue them as --flag=value
    out = []
    it = iter(argv)
    for tok in it:
        if tok in _VALUE_FLAGS:
            nxt = next(it, None)
            if nxt is None:
                out.append(tok)
            else:
                out.append(f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    from .bounds import KappaMismatchError

    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(_glue_negative_values(argv))  # exits with 2 on usage errors
    sub = parser._subparsers._group_actions[0].choices[args.command]
    try:
        args = _apply_config(args, sub)
        return args.func(args)
    except UsageError as exc:
        sub.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (KappaMismatchError, ValueError) as exc:
        print(f"precondition violated: {exc}", file=sys.stderr)
        return 4
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
