"""Command line entry point: ``mmcert <subcommand> [options]``.

Exit codes: 0 success, 1 oracle check failed, 2 config error, 3 data error,
4 numeric error.
"""

from __future__ import annotations

import argparse
import sys

from . import pipeline
from .datafiles import RunConfig, _parse_direction, load_config
from .errors import ConfigError, MMCertError

VOTE_COMMANDS = ("certify", "radius", "segment", "baseline")


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmcert", description="Certified robustness for multi-modal ensembles.")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--jobs", type=int, default=None, help=f"worker processes (default ${pipeline.JOBS_ENV} or 1)")

    run = argparse.ArgumentParser(add_help=False, parents=[common])
    run.add_argument("--config", required=True, help="JSON run configuration")
    run.add_argument("--mode", choices=("exact", "fast"))
    run.add_argument("--seed", type=int)
    run.add_argument("--engine", choices=("mmcert", "baseline"))
    run.add_argument("--direction", help="budget ray, e.g. '1/2' or '1,2'")
    run.add_argument("--r-max", type=int, dest="r_max")
    run.add_argument("--attack", choices=("modification", "addition", "deletion"), help="override every modality's attack type")
    run.add_argument("--r", type=_int_list, help="fixed budget r_1,...,r_T")
    run.add_argument("--sweep-alpha", type=_float_list, dest="sweep_alpha", help="comma-separated alpha values")

    for name, help_text in (
        ("certify", "certify classification votes at one budget"),
        ("radius", "certified accuracy along a budget ray"),
        ("segment", "per-element certification with Holm selection"),
        ("baseline", "randomized-ablation baseline on the same votes"),
    ):
        p = sub.add_parser(name, parents=[run], help=help_text)
        p.add_argument("--votes", required=True, help="JSON-lines vote file")

    p = sub.add_parser("simulate", parents=[run], help="synthetic votes, then certification")
    p.add_argument("--sweep-n", type=_int_list, dest="sweep_n", help="comma-separated N values")

    p = sub.add_parser("oracle", parents=[common], help="exact checks on small instances")
    p.add_argument("--quick", action="store_true", help="smaller grid")
    p.add_argument("--instances", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config)
    d = cfg.to_dict()
    d["alpha"] = float(d["alpha"])
    for key in ("mode", "seed", "engine", "r_max"):
        val = getattr(args, key, None)
        if val is not None:
            d[key] = val
    if args.direction is not None:
        try:
            d["direction"] = _parse_direction(args.direction)
        except (ValueError, ZeroDivisionError):
            raise ConfigError(f"cannot parse direction {args.direction!r}") from None
    if args.attack is not None:
        for m in d["modalities"]:
            m["attack"] = args.attack
    if args.r is not None:
        d["budget"] = args.r
    return RunConfig.from_dict(d)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        jobs = args.jobs if args.jobs is not None else pipeline.default_jobs()
        if jobs < 1:
            raise ConfigError("--jobs must be positive")
        if args.command == "oracle":
            result = pipeline.run_oracle(args.out, quick=args.quick, instances=args.instances, seed=args.seed)
            for check in result["checks"]:
                status = "ok" if check["passed"] else "FAIL"
                print(f"{check['name']}: {status} ({check['checked']} checked, {check['failures']} failures)")
            return 0 if result["passed"] else 1
        cfg = resolve_config(args)
        if args.command == "simulate":
            pipeline.run_simulate(cfg, args.out, jobs, args.sweep_alpha, args.sweep_n)
        else:
            runner = getattr(pipeline, f"run_{args.command}")
            runner(cfg, args.votes, args.out, jobs, args.sweep_alpha)
    except MMCertError as exc:
        print(f"mmcert: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
