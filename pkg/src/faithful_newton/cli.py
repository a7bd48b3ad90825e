"""``faithful-newton`` command line.

Exit codes: 0 converged / all checks passed, 1 suite failure, 2 budget or
iteration cap reached, 3 solver error, 4 configuration error.
"""

import argparse
import sys

from .exceptions import ConfigError, FNCRError
from .harness import EXIT_CONFIG, compute_f_star, parse_config, run_experiment


def _spec_from_args(args):
    return parse_config(path=args.config, overrides=args.override, solver=args.solver,
                        problem=args.problem, out=getattr(args, "out", None),
                        seed=getattr(args, "seed", None))


def cmd_run(args):
    spec = _spec_from_args(args)
    outcome = run_experiment(spec)
    if spec.output_path is None:
        sys.stdout.write(outcome.csv_text)
    print(outcome.summary)
    return outcome.exit_code


def cmd_suite(args):
    from .suites import run_suite

    try:
        reports = run_suite(args.name)
    except KeyError as exc:
        raise ConfigError(str(exc)) from None
    ok = True
    for rep in reports:
        for line in rep.lines():
            print(line)
        ok &= rep.passed
    return 0 if ok else 1


def cmd_fstar(args):
    spec = _spec_from_args(args)
    fs = compute_f_star(spec, grad_tol=args.grad_tol, budget=args.budget)
    print(f"f_star={fs.value:.17g} converged={fs.converged} gnorm={fs.gnorm:.3e} units={fs.units} "
          f"({fs.reason})")
    return 0 if fs.converged else 2


def build_parser():
    p = argparse.ArgumentParser(prog="faithful-newton",
                                description="Faithful-Newton optimizers and benchmark harness")
    sub = p.add_subparsers(dest="command", required=True)

    def add_spec_args(sp, with_out=True):
        sp.add_argument("--config", help="key=value config file")
        sp.add_argument("--solver", help="fncr_ls | fncr_reg_ls | newton_cg | gd")
        sp.add_argument("--problem", help="quadratic | cross_entropy")
        sp.add_argument("--seed", type=int, help="starting-point seed")
        sp.add_argument("--override", action="append", default=[], metavar="KEY=VAL",
                        help="override one config key (repeatable)")
        if with_out:
            sp.add_argument("--out", help="CSV output path (stdout when omitted)")

    run = sub.add_parser("run", help="run one experiment and write its trace CSV")
    add_spec_args(run)
    run.set_defaults(func=cmd_run)

    suite = sub.add_parser("suite", help="run a registered property suite")
    suite.add_argument("name", help="cr_properties | lemma_bounds | rate_checks | all")
    suite.set_defaults(func=cmd_suite)

    fstar = sub.add_parser("fstar", help="compute a reference optimum for a spec")
    add_spec_args(fstar, with_out=False)
    fstar.add_argument("--grad-tol", type=float, default=1e-12)
    fstar.add_argument("--budget", type=float, default=1e7)
    fstar.set_defaults(func=cmd_fstar)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors count as config errors
        return EXIT_CONFIG if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FNCRError as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
