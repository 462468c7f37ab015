"""Command line front end: ``regretopt {synth,simulate,bench,sweep}``.

Exit codes: 0 success, 2 invalid config or input, 3 synthesis failure,
4 a regret bound cross-check failed. Errors are reported on stderr as one
JSON object.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .exceptions import ConfigurationError, FactorizationError, Infeasible, UnboundedGamma, ValidationError
from .harness import BUILTIN_EXPERIMENTS, load_config, run_experiment, run_sweep, synthesize_schedule, system_of

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SYNTHESIS = 3
EXIT_BOUND = 4


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors already; keep the JSON error shape
    def error(self, message):
        _report("usage", message)
        self.print_usage(sys.stderr)
        sys.exit(EXIT_CONFIG)


def _report(kind, message):
    print(json.dumps({"error": kind, "message": str(message)}), file=sys.stderr)


def _non_negative(text):
    val = int(text)
    if val < 0:
        raise argparse.ArgumentTypeError("must be a non-negative integer")
    return val


def _positive(text):
    val = int(text)
    if val < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return val


def _positive_float(text):
    val = float(text)
    if not val > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return val


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config JSON file or builtin experiment name")
    common.add_argument("--out", default=".", help="output directory (created if missing)")
    common.add_argument("--seed", type=_non_negative, help="seed for Gaussian disturbances")
    common.add_argument("--gamma-tol", type=_positive_float, default=1e-4, help="bisection tolerance")
    common.add_argument("--lookahead", type=_non_negative, default=None, help="disturbance preview steps")
    common.add_argument("--delay", type=_non_negative, default=None, help="input delay in steps")
    common.add_argument("--jobs", type=_positive, default=1, help="parallel workers")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="regretopt", description="Regret-optimal estimation and control experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("synth", parents=[common], help="export a regret-optimal gain schedule")
    sub.add_parser("simulate", parents=[common], help="compare policies on one linear system")
    bench = sub.add_parser("bench", parents=[common], help="run builtin nonlinear benchmarks")
    bench.add_argument("names", nargs="*", help=f"builtin experiments (default all): {sorted(BUILTIN_EXPERIMENTS)}")
    sweep = sub.add_parser("sweep", parents=[common], help="random-instance suite")
    sweep.add_argument("--count", type=_positive, default=20)
    sweep.add_argument("--family", choices=("control", "estimation"), default="control")
    sweep.add_argument("--max-T", type=_positive, default=10)
    sweep.add_argument("--max-dim", type=_positive, default=3)
    return parser


def _overrides(args):
    return {"seed": args.seed, "gamma_tol": args.gamma_tol, "lookahead": args.lookahead, "delay": args.delay}


def _cmd_synth(args):
    if not args.config:
        raise ConfigurationError("synth needs --config")
    cfg = load_config(args.config, **_overrides(args))
    if cfg.builtin:
        raise ConfigurationError("synth needs a linear system, not a builtin nonlinear model")
    doc = synthesize_schedule(system_of(cfg), cfg.gamma_tol, cfg.lookahead, cfg.delay)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{cfg.id}.gains.json"
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    print(f"{path}  gamma_opt={doc['gamma_opt']:.6g}")
    return EXIT_OK


def _cmd_simulate(args):
    if not args.config:
        raise ConfigurationError("simulate needs --config")
    cfg = load_config(args.config, **_overrides(args))
    res = run_experiment(cfg, args.out, jobs=args.jobs)
    _print_totals(res.summary)
    return res.status


def _print_totals(summary):
    print(f"{summary['id']}: {summary['csv']}")
    for name, total in summary["totals"].items():
        regret = summary["regret"].get(name)
        g = summary["gamma"].get(name, {})
        gtxt = f"  gamma={g['gamma_opt']:.6g}" if "gamma_opt" in g else ""
        rtxt = "" if regret is None else f"  regret={regret:.6g}"
        print(f"  {name:<10} total={total:.6g}{rtxt}{gtxt}")


def _cmd_bench(args):
    names = list(args.names)
    if args.config:
        names.append(args.config)
    if not names:
        names = sorted(BUILTIN_EXPERIMENTS)
    if args.lookahead or args.delay:
        raise ConfigurationError("lookahead and delay apply to linear control systems only")
    cfgs = [load_config(n, seed=args.seed, gamma_tol=args.gamma_tol) for n in names]
    status = EXIT_OK
    for cfg in cfgs:
        if not cfg.builtin:
            raise ConfigurationError(f"{cfg.id}: bench runs builtin nonlinear models; use simulate")
    for cfg in cfgs:
        res = run_experiment(cfg, args.out, jobs=args.jobs)
        _print_totals(res.summary)
        status = max(status, res.status)
    return status


def _cmd_sweep(args):
    if args.config:
        raise ConfigurationError("sweep takes no --config; use --count/--family/--max-T/--max-dim")
    summaries, status = run_sweep(
        args.count, args.out, seed=args.seed or 0, family=args.family, gamma_tol=args.gamma_tol,
        lookahead=args.lookahead or 0, delay=args.delay or 0, jobs=args.jobs,
        max_T=args.max_T, max_dim=args.max_dim,
    )
    bad = sum(1 for s in summaries if s["status"])
    print(f"{len(summaries)} instances, {bad} bound violations; table in {Path(args.out) / 'sweep.csv'}")
    return status


COMMANDS = {"synth": _cmd_synth, "simulate": _cmd_simulate, "bench": _cmd_bench, "sweep": _cmd_sweep}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigurationError, ValidationError) as exc:
        _report("config", exc)
        return EXIT_CONFIG
    except (Infeasible, FactorizationError, UnboundedGamma) as exc:
        _report("synthesis", exc)
        return EXIT_SYNTHESIS


if __name__ == "__main__":
    sys.exit(main())
