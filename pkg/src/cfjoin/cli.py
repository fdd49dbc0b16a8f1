"""Command-line entry point: run verification experiments and emit reports."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .verifier import EXPERIMENTS, ExperimentConfig, emit_report, run_all

_SUBCOMMAND_SETS = {
    "sequences": ["sequences"],
    "validate-cf": ["validate-cf"],
    "equidist": ["equidist", "sample-sets"],
    "weakmix": ["weakmix"],
    "joinings": ["joinings"],
    "cocycles": ["counterexample-51", "nonuniqueness-42"],
    "groups": ["groups"],
    "lemma62": ["lemma62"],
    "fubini": ["fubini"],
    "all": list(EXPERIMENTS),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cfjoin",
        description="Verification experiments for the cutting construction "
        "over R x| SU(2) and its joining structure.",
    )
    parser.add_argument("command", choices=sorted(_SUBCOMMAND_SETS), help="experiment bundle")
    parser.add_argument("--config", type=Path, default=None, help="JSON config path")
    parser.add_argument("--seed", type=int, default=None, help="override root seed")
    parser.add_argument("--out", type=Path, default=None, help="output directory")
    parser.add_argument("--level", type=int, default=None, help="override max level")
    parser.add_argument("--samples", type=int, default=None, help="override mc_samples")
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    if args.config is not None:
        cfg = ExperimentConfig.from_json(json.loads(Path(args.config).read_text()))
    else:
        cfg = ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.output_dir = str(args.out)
    if args.samples is not None:
        cfg.mc_samples = args.samples
    if args.level is not None:
        construction = cfg.construction.to_json()
        construction["max_level"] = args.level
        from .cf_engine import CFParams

        cfg.construction = CFParams.from_json(construction)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = load_config(args)
    names = cfg.experiments or _SUBCOMMAND_SETS[args.command]
    reports = []
    for name in names:
        t0 = time.time()
        rep = EXPERIMENTS[name](cfg)
        dt = time.time() - t0
        print(f"[{rep.status:4s}] {name} ({dt:.1f}s)")
        for m in rep.metrics:
            flag = "" if m.passed is None else (" ok" if m.passed else " FAIL")
            tol = "" if m.tolerance is None else f" (tol {m.tolerance:.3g})"
            print(f"    {m.name}: {m.value:.6g}{tol}{flag}")
        reports.append(rep)
    code = emit_report(reports, cfg.output_dir, cfg)
    print(f"report written to {cfg.output_dir}/report.json -> {'PASS' if code == 0 else 'FAIL'}")
    return code


if __name__ == "__main__":
    sys.exit(main())
