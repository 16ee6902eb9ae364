"""Command-line entry point.

Subcommands map one-to-one onto pipeline stages:

    svbench simulate  --config bench.yaml          degraded audio + provenance
    svbench trials    --config bench.yaml          trial lists per protocol
    svbench extract   --config bench.yaml          embeddings via model adapters
    svbench score     --config bench.yaml          cosine scores per trial list
    svbench evaluate  --config bench.yaml          EER/minDCF/AUC tables
    svbench stats     --config bench.yaml          pairwise significance matrices
    svbench attack    --config bench.yaml          adversarial audio + sidecars
    svbench report    --config bench.yaml          text tables + figures

Exit status is 0 only when every requested cell completed.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import load_config
from .errors import BenchError
from .pipeline import (
    RunManifest,
    stage_attack,
    stage_evaluate,
    stage_extract,
    stage_score,
    stage_simulate,
    stage_stats,
    stage_trials,
)
from .reports import render_reports

STAGES = ("simulate", "trials", "extract", "score", "evaluate", "attack", "stats", "report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="svbench",
                                     description="Speaker-verification robustness benchmark")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="benchmark config file (YAML/JSON)")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--models", nargs="*", default=None, help="restrict to these model ids")
        p.add_argument("--conditions", nargs="*", default=None)
        p.add_argument("--protocols", nargs="*", default=None)
        if name == "stats":
            p.add_argument("--override-eers", default=None,
                           help="JSON file of published per-group EER vectors")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, seed_override=args.seed,
                             workers_override=args.workers)
        config.output_dir.mkdir(parents=True, exist_ok=True)
        manifest = RunManifest(config)
        if args.command == "simulate":
            summary = stage_simulate(config, manifest, args.conditions)
        elif args.command == "trials":
            summary = stage_trials(config, manifest, args.protocols)
        elif args.command == "extract":
            summary = stage_extract(config, manifest, args.models)
        elif args.command == "score":
            summary = stage_score(config, manifest, args.models, args.protocols)
        elif args.command == "evaluate":
            summary = stage_evaluate(config, manifest, args.models, args.protocols)
        elif args.command == "stats":
            summary = stage_stats(config, manifest, getattr(args, "override_eers", None))
        elif args.command == "attack":
            summary = stage_attack(config, manifest)
        elif args.command == "report":
            summary = render_reports(config.output_dir)
            manifest.record_stage("report", summary)
        else:  # pragma: no cover
            raise BenchError(f"unknown command {args.command!r}")
    except BenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    print(json.dumps({k: v for k, v in summary.items() if k != "completed"},
                     indent=2, sort_keys=True, default=str))
    failed = summary.get("failed") or summary.get("gaps")
    return 1 if failed else 0


if __name__ == "__main__":
    raise SystemExit(main())
