"""Command-line entry point: ``oamsim {validate-screens,simulate,analyze,ingest}``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from oamsim import sweep
from oamsim.config import apply_overrides, load_config
from oamsim.errors import InputFormatError, InvariantViolation, OamSimError, ValidationError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INPUT = 3
EXIT_INVARIANT = 4

log = logging.getLogger("oamsim")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("config overrides")
    g.add_argument("--config", help="YAML run configuration")
    g.add_argument("--n", type=int)
    g.add_argument("--side-length", type=float)
    g.add_argument("--w0", type=float)
    g.add_argument("--l-max", type=int)
    g.add_argument("--strengths", help="start:stop:step (inclusive) or comma list")
    g.add_argument("--n-masks", type=int)
    g.add_argument("--sidedness", help="comma list of single,double")
    g.add_argument("--separation-z", type=float)
    g.add_argument("--directions", help="comma list of forward,backward")
    g.add_argument("--betas", help="start:stop:step (inclusive) or comma list")
    g.add_argument("--poisson", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--pump-sigma", type=float)
    g.add_argument("--noise-seed", type=int)
    g.add_argument("--bands", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--trials", type=int)
    g.add_argument("--level", type=float)
    g.add_argument("--total-counts", type=int)
    g.add_argument("--master-seed", type=int)
    g.add_argument("--screens", type=int)
    g.add_argument("--output", "-o")
    g.add_argument("--workers", type=int)


OVERRIDE_KEYS = (
    "n", "side_length", "w0", "l_max", "strengths", "n_masks", "sidedness", "separation_z",
    "directions", "betas", "poisson", "pump_sigma", "noise_seed", "bands", "trials", "level",
    "total_counts", "master_seed", "screens", "output", "workers",
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oamsim", description="OAM turbulence channel simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate-screens", help="structure-function check of the screen generator")
    _add_config_flags(p)
    p.add_argument("--no-subharmonics", action="store_true", help="debug: plain FFT synthesis")

    p = sub.add_parser("simulate", help="transition matrices for every sweep point")
    _add_config_flags(p)

    p = sub.add_parser("analyze", help="thermodynamic reports from matrices or counts")
    _add_config_flags(p)
    p.add_argument("inputs", nargs="+", help="transition JSON or counts CSV files")
    p.add_argument("--manifest", help="refuse inputs whose hash disagrees with this manifest")

    p = sub.add_parser("ingest", help="counts CSV to transition-matrix JSON")
    p.add_argument("counts")
    p.add_argument("--direction", choices=("forward", "backward"), default="forward")
    p.add_argument("--output", "-o", required=True)
    return parser


def _config(args):
    cfg = load_config(args.config)
    overrides = {k: getattr(args, k) for k in OVERRIDE_KEYS}
    return apply_overrides(cfg, overrides, os.environ)


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "ingest":
        path = sweep.run_ingest(args.counts, args.direction, args.output)
        print(path)
        return EXIT_OK
    cfg = _config(args)
    if args.command == "validate-screens":
        passed, path = sweep.run_validate_screens(cfg, subharmonics=not args.no_subharmonics)
        print(f"{'PASS' if passed else 'FAIL'} {path}")
        return EXIT_OK if passed else EXIT_VALIDATION
    if args.command == "simulate":
        manifest = sweep.run_simulate(cfg)
        print(f"{len(manifest['files'])} matrices written to {cfg.output}")
        return EXIT_OK
    manifest = sweep.run_analyze(cfg, args.inputs, args.manifest)
    print(f"{len(manifest['files'])} reports written to {cfg.output}")
    return EXIT_OK


def main(argv=None) -> int:
    try:
        code = run(argv)
    except InputFormatError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        code = EXIT_INPUT
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        code = EXIT_INVARIANT
    except ValidationError as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        code = EXIT_VALIDATION
    except OamSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_VALIDATION
    return code


if __name__ == "__main__":
    sys.exit(main())
