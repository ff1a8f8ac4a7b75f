"""Command line entry point: ``gmfusion run --scenario FILE --out DIR``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from gmfusion.episode import emit_outputs, run_episode
from gmfusion.errors import DegenerateWeightsError, FusionError, ScenarioError
from gmfusion.scenario import GOLDEN, golden_path, parse_scenario_text, scenario_from_dict

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID = 2
EXIT_DEGENERATE = 3

log = logging.getLogger("gmfusion")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gmfusion", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one fusion episode")
    run.add_argument("--scenario", required=True,
                     help=f"scenario file, or a bundled name: {', '.join(GOLDEN)}")
    run.add_argument("--out", required=True, type=Path, help="output directory")
    run.add_argument("--seed", type=int, help="override the scenario seed")
    run.add_argument("--tol", type=float, help="override the consensus tolerance")
    run.add_argument("--max-iters", type=int, help="override the consensus iteration cap")
    run.add_argument("--emit-particles", type=int, help="particles drawn per reported mixture")
    run.add_argument("--mode-override", choices=("homogeneous", "heterogeneous"),
                     help="override the scenario mode")
    run.add_argument("-v", "--verbose", action="store_true")
    return parser


def _apply_overrides(data: dict, args) -> dict:
    data = dict(data)
    if args.seed is not None:
        data["seed"] = args.seed
    if args.emit_particles is not None:
        data["emit_particles"] = args.emit_particles
    if args.mode_override is not None:
        data["mode"] = args.mode_override
    if args.tol is not None or args.max_iters is not None:
        cons = dict(data.get("consensus") or {})
        if args.tol is not None:
            cons["tol"] = args.tol
        if args.max_iters is not None:
            cons["max_iters"] = args.max_iters
        data["consensus"] = cons
    return data


def _run(args) -> int:
    path = golden_path(args.scenario) if args.scenario in GOLDEN else Path(args.scenario)
    try:
        text = path.read_text()
    except OSError as exc:
        print(f"error: cannot read {path}: {exc.strerror}", file=sys.stderr)
        return EXIT_INVALID
    try:
        scenario = scenario_from_dict(_apply_overrides(parse_scenario_text(text, str(path)), args))
        report = run_episode(scenario)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except DegenerateWeightsError as exc:
        print(f"error: degenerate fusion: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except FusionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE

    for w in report.warnings:
        log.warning(w)
    try:
        written = emit_outputs(report, args.out)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    for p in written:
        print(p)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return _run(args)


if __name__ == "__main__":
    sys.exit(main())
