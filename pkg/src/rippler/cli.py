"""Command line: ``rippler simulate | infer | diagnose``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from rippler.errors import RipplerError
from rippler.runner import ALGORITHMS, RunConfig, run_diagnose, run_infer, run_simulate

FLAGS = {
    "--algorithm": dict(dest="algorithm", choices=ALGORITHMS),
    "--iterations": dict(dest="iterations", type=int, help="outer iterations K"),
    "--latent-updates": dict(dest="latent_updates", type=int,
                             help="latent updates per iteration"),
    "--elements": dict(dest="elements", type=int, help="draws perturbed per Rippler update"),
    "--block-size": dict(dest="block_size", type=int, help="reversible-jump block size"),
    "--burn-in": dict(dest="burn_in", type=int),
    "--thin": dict(dest="thin", type=int),
    "--seed": dict(dest="seed", type=int),
    "--data-dir": dict(dest="data_dir"),
    "--out-dir": dict(dest="out_dir"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rippler", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("simulate", "simulate a cohort and its test results"),
                       ("infer", "run the MCMC on a dataset"),
                       ("diagnose", "summarise a finished run")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="JSON file of run settings")
        for flag, kw in FLAGS.items():
            p.add_argument(flag, default=None, **kw)
        if name == "infer":
            p.add_argument("--no-resume", action="store_true",
                           help="ignore an existing checkpoint")
        if name == "diagnose":
            p.add_argument("--level", type=float, default=0.95)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    overrides = {kw["dest"]: getattr(args, kw["dest"]) for kw in FLAGS.values()}
    try:
        cfg = RunConfig.from_file(args.config, **overrides)
        if args.command == "simulate":
            x, y, _ = run_simulate(cfg)
            print(f"wrote {cfg.data_dir}: N={x.shape[1]} T={x.shape[0] - 1} "
                  f"tests={(y >= 0).sum()}")
        elif args.command == "infer":
            out = run_infer(cfg, resume=not args.no_resume)
            print(f"wrote {out}")
        else:
            report = run_diagnose(cfg.out_dir, args.data_dir, level=args.level)
            print(json.dumps(report, indent=2, sort_keys=True))
    except (RipplerError, ValueError, OSError) as exc:
        print(f"rippler: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
