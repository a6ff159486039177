"""``fslab <subcommand> [--config FILE] [--seed S] [--out DIR] [--workers W]``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from fslab.errors import ConfigError, FslabError
from fslab.harness import experiments
from fslab.harness.config import SUBCOMMANDS, load_config
from fslab.harness.io import json_text, write_artifacts

EXIT_CONFIG = 2
EXIT_DOMAIN = 3

_HELP = {
    "spectrum": "eigenpairs of the Sturm-Liouville operator on (0, R)",
    "fs-sim": "simulate the ground-state diffusion (n = 1) or its non-colliding version",
    "walks": "exact or MCMC marginals of ordered tilted walks",
    "verify-fs": "convergence of rescaled walk marginals to the diffusion limit",
    "wulff": "Wulff polygon, its area w and axis curvature",
    "dcvp": "dual constrained variational problem: optimal droplet area per tilt",
    "mcvp": "layered variational problem: scan over the excess area",
    "stack": "layer count and tilts of a wall-repelled stack",
    "saw": "exact enumeration of tilted self-avoiding bridges",
    "constants": "Abraham wetting threshold and metastability constant",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fslab", description="Tilted walks and interface models.")
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=_HELP[name])
        p.add_argument("--config", type=Path, help="JSON config file (defaults used if omitted)")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", type=Path, default=Path("fslab-out"), help="output directory")
        p.add_argument("--workers", type=int, help="process count (else FSLAB_WORKERS, else 1)")
        if name == "constants":
            p.add_argument("--beta", type=float, action="append", help="inverse temperature (repeatable)")
            p.add_argument("--m-star", type=float, dest="m_star", help="spontaneous magnetisation")
        if name == "dcvp":
            p.add_argument("--isotropic", action="store_true", help="use the isotropic unit energy")
            p.add_argument("--nu", type=float, action="append", help="area tilt (repeatable)")
    return parser


def _overrides(args) -> dict:
    out = {}
    if args.subcommand == "constants":
        if args.beta:
            out["beta"] = args.beta
        if args.m_star is not None:
            out["m_star"] = args.m_star
    if args.subcommand == "dcvp":
        if args.isotropic:
            out["energy"] = {"form": "isotropic"}
        if args.nu:
            out["nu"] = args.nu
    return out


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.subcommand, _overrides(args))
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be non-negative")
            cfg.seed = args.seed
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        try:
            workers = experiments.resolve_workers(args.workers or cfg.workers)
        except ValueError as exc:
            raise ConfigError(f"FSLAB_WORKERS: {exc}") from None
    except ConfigError as exc:
        print(f"fslab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        arts = experiments.RUNNERS[args.subcommand](cfg, workers)
    except FslabError as exc:
        print(f"fslab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    out = write_artifacts(args.out, arts, args.subcommand, cfg.canonical(), cfg.seed, workers)
    sys.stdout.write(json_text(arts.summary))
    print(f"artifacts written to {out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
