"""Command-line entry point: ``lssmg {integrate,solve,sweep,spectrum,flops}``.

Exit codes: 0 success, 2 configuration error, 3 solver divergence or
numerical failure, 4 guard violation (problem too large for a dense path).
"""
import argparse
import os
import sys

from . import experiment as ex
from .cyclic_reduction import FlopModel, flop_estimate
from .errors import ConfigError, GuardError, LssError

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_GUARD = 0, 2, 3, 4


def _u64(text):
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value <= ex.U64_MAX:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _common(p, config=True):
    if config:
        p.add_argument("--config", metavar="PATH", help="JSON experiment config")
        p.add_argument("--seed", type=_u64, metavar="U64",
                       help="initial-condition seed (overrides trajectory.seed)")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted-path override, e.g. solver.alpha2=100 (repeatable)")
    p.add_argument("--out", metavar="DIR", help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lssmg",
        description="LSS sensitivities of the Lorenz system by multigrid in time.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("integrate", help="integrate a trajectory and write it as CSV")
    _common(p)
    p = sub.add_parser("solve", help="solve one LSS system and write history and report")
    _common(p)
    p = sub.add_parser("sweep", help="repeat a solve over values of one config field")
    _common(p)
    p.add_argument("--axis", required=True, metavar="KEY",
                   help="dotted config field, e.g. solver.alpha2")
    p.add_argument("--values", required=True, nargs="+", metavar="V",
                   help="values (JSON literals); commas also separate")
    p = sub.add_parser("spectrum", help="extreme eigenvalues of the coarsened systems")
    _common(p)
    p.add_argument("--levels", type=int, default=5, help="number of coarsenings (default 5)")
    p = sub.add_parser("flops", help="cyclic reduction versus Jacobi operation counts")
    _common(p, config=False)
    p.add_argument("--m", type=int, nargs="+", default=[3, 5, 9, 17],
                   help="block row counts of the form 2^l + 1")
    p.add_argument("--p", type=int, help="flops per Jacobian-block product")
    p.add_argument("--q", type=int, help="inner iterations per inverse-block product")
    p.add_argument("--n", type=int, help="state dimension")
    return parser


def _config(args):
    overrides = [ex.parse_override(item) for item in args.override]
    return ex.load_config(args.config, overrides, args.seed)


def _out(args, cfg=None):
    if args.out:
        return args.out
    return cfg.output.dir if cfg is not None else "lssmg-out"


def _split_values(items):
    values = []
    for item in items:
        for part in item.split(","):
            if part.strip():
                values.append(ex._parse_value(part.strip()))
    return values


def cmd_integrate(args):
    cfg = _config(args)
    traj, summary = ex.run_integrate(cfg, _out(args, cfg))
    print(f"integrated {traj.steps} steps of dt {traj.dt:g}; "
          f"time average {summary['time_average']:.10g}")


def cmd_solve(args):
    cfg = _config(args)
    report = ex.run_experiment(cfg, _out(args, cfg))
    rel = report.relative_residuals()[-1]
    print(f"{report.method}: gradient {report.final_gradient:.12g} after "
          f"{report.iterations} iterations, relative residual {rel:.3e}")
    if report.gamma is not None:
        print(f"fitted rate gamma {report.gamma:.4f}, C {report.C:.4g}")


def cmd_sweep(args):
    cfg = _config(args)
    rows = ex.sweep(cfg, args.axis, _split_values(args.values), _out(args, cfg))
    for row in rows:
        if row["error"]:
            print(f"{args.axis}={row['value']}: {row['error']}")
        else:
            gamma = "n/a" if row["gamma"] is None else f"{row['gamma']:.4f}"
            print(f"{args.axis}={row['value']}: gamma {gamma}, cycles to tol "
                  f"{row['cycles_to_tol']}, gradient {row['final_gradient']:.10g}")


def cmd_spectrum(args):
    cfg = _config(args)
    rows = ex.spectrum_probe(cfg, args.levels, _out(args, cfg))
    for row in rows:
        print(f"dt {row['dt']:<10.6g} lambda_max {row['lambda_max']:.6e} "
              f"kappa {row['kappa']:.6e}")


FLOPS_HEADER = ("m", "levels", "cyclic_reduction", "jacobi", "cyclic_reduction_value",
                "jacobi_value")


def cmd_flops(args):
    given = [args.p, args.q, args.n]
    if any(v is not None for v in given) and None in given:
        raise ConfigError("--p, --q and --n go together")
    numeric = args.p is not None
    model = FlopModel(args.p, args.q, 1, args.n) if numeric else FlopModel(1, 1, 1, 1)
    rows = []
    for m in args.m:
        try:
            est = flop_estimate(model, m)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        levels = (m - 1).bit_length() - 1
        rows.append((m, levels, str(est.cr), str(est.jacobi),
                     est.cr_value if numeric else "", est.jacobi_value if numeric else ""))
    out = _out(args)
    os.makedirs(out, exist_ok=True)
    ex.write_csv(os.path.join(out, "flops.csv"), FLOPS_HEADER, rows)
    for row in rows:
        tail = f"  = {row[4]} vs {row[5]}" if numeric else ""
        print(f"m={row[0]:<4d} CR {row[2]:<14s} Jacobi {row[3]}{tail}")


COMMANDS = {"integrate": cmd_integrate, "solve": cmd_solve, "sweep": cmd_sweep,
            "spectrum": cmd_spectrum, "flops": cmd_flops}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"lssmg: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GuardError as exc:
        print(f"lssmg: guard: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except LssError as exc:
        print(f"lssmg: solver failure: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
