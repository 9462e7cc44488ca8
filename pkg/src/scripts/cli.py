"""Command-line entry point: run, sweep and cost."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..core.config import load_config, load_cost_scenarios, settings
from ..core.cost import cost_table
from ..core.log import configure_logging
from ..core.persistence import emit_report
from ..core.simulation import run_experiment, run_seed_sweep
from ..core.types import ExperimentReport


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(prog="fl-spectrum", description="Federated learning poisoning testbed")
    parser.add_argument("--log-level", default=None, help="Override FL_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run one seed with its paired clean baseline")
    run.add_argument("--config", required=True, help="Experiment config (JSON)")
    run.add_argument("--seed", type=int, required=True, help="Master seed")
    run.add_argument("--out", default=None, help="Output directory (default FL_OUT_DIR)")

    sweep = sub.add_parser("sweep", help="Run every configured seed")
    sweep.add_argument("--config", required=True, help="Experiment config (JSON)")
    sweep.add_argument("--out", default=None, help="Output directory (default FL_OUT_DIR)")

    cost = sub.add_parser("cost", help="Print the attack cost table")
    cost.add_argument("--config", required=True, help="Cost scenario document (JSON)")

    return parser.parse_args(argv)


def _print_summary(report: ExperimentReport) -> None:
    print("=" * 50)
    print("EXPERIMENT SUMMARY")
    print("=" * 50)
    for s in report.per_seed:
        print(
            f"seed {s.seed}: max acc {s.max_test_accuracy:.4f} "
            f"(clean {s.clean_max_test_accuracy:.4f}), impact {s.attack_impact:.4f}"
        )
    print(f"Median max accuracy: {report.median_max_accuracy:.4f} ± {report.std_max_accuracy:.4f}")
    print(f"Median attack impact: {report.median_attack_impact:.4f} ± {report.std_attack_impact:.4f}")
    print(f"Malicious ratio: {report.malicious_ratio:.4f}")
    print(f"Attack cost: ${report.attack_cost:,.2f}")
    print("=" * 50)


def main(argv: list[str] | None = None) -> int:
    """Main CLI function."""
    args = parse_args(argv)
    configure_logging(args.log_level or settings.log_level, settings.log_format)

    try:
        if args.command == "cost":
            table = cost_table(load_cost_scenarios(args.config))
            print(table.to_string(index=False))
            return 0

        cfg = load_config(args.config)
        out = Path(args.out or settings.out_dir)
        report = run_experiment(cfg, args.seed) if args.command == "run" else run_seed_sweep(cfg)
        summary = emit_report(report, out)
        _print_summary(report)
        print(f"Report written to {summary}")
        return 0
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
