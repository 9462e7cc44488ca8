"""Report emission and loading (per-round CSV, summary JSON)."""

from __future__ import annotations

import json
from dataclasses import asdict, fields
from pathlib import Path
from typing import Any

import pandas as pd

from .log import get_logger
from .types import ExperimentReport, RoundRecord, SeedResult

logger = get_logger(__name__)

ROUND_COLUMNS = [f.name for f in fields(RoundRecord)]
SUMMARY_FILE = "summary.json"

_SUMMARY_FIELDS = (
    "max_test_accuracy",
    "attack_impact",
    "attack_cost",
    "malicious_ratio",
    "median_max_accuracy",
    "std_max_accuracy",
    "median_attack_impact",
    "std_attack_impact",
)


def _round_file(prefix: str, seed: int, single: bool) -> str:
    return f"{prefix}.csv" if single else f"{prefix}_seed{seed}.csv"


def records_to_frame(records: list[RoundRecord]) -> pd.DataFrame:
    return pd.DataFrame([asdict(r) for r in records], columns=ROUND_COLUMNS)


def frame_to_records(frame: pd.DataFrame) -> list[RoundRecord]:
    return [
        RoundRecord(
            round=int(row["round"]),
            test_accuracy=float(row["test_accuracy"]),
            test_loss=float(row["test_loss"]),
            n_malicious_selected=int(row["n_malicious_selected"]),
            aggregate_norm=float(row["aggregate_norm"]),
            mean_benign_norm=float(row["mean_benign_norm"]),
            mean_malicious_norm=float(row["mean_malicious_norm"]),
        )
        for row in frame.to_dict(orient="records")
    ]


def emit_report(report: ExperimentReport, out_dir: str | Path) -> Path:
    """Write per-round CSVs and summary.json into out_dir.

    A single-seed report writes rounds.csv; a sweep writes rounds_seed<k>.csv
    per seed. The paired clean runs go to clean_rounds*.csv alongside.

    Returns:
        Path of the summary file
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    single = len(report.per_round) == 1

    round_files: dict[str, str] = {}
    for seed, records in sorted(report.per_round.items()):
        name = _round_file("rounds", seed, single)
        records_to_frame(records).to_csv(out / name, index=False)
        round_files[str(seed)] = name
    clean_files: dict[str, str] = {}
    for seed, records in sorted(report.clean_per_round.items()):
        name = _round_file("clean_rounds", seed, single)
        records_to_frame(records).to_csv(out / name, index=False)
        clean_files[str(seed)] = name

    summary: dict[str, Any] = {key: getattr(report, key) for key in _SUMMARY_FIELDS}
    summary["per_seed"] = [asdict(s) for s in report.per_seed]
    summary["round_files"] = round_files
    summary["clean_round_files"] = clean_files

    path = out / SUMMARY_FILE
    path.write_text(json.dumps(summary, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")
    logger.info("report_written", path=str(path), seeds=sorted(report.per_round))
    return path


def load_report(out_dir: str | Path) -> ExperimentReport:
    """Read back a report written by emit_report."""
    out = Path(out_dir)
    summary = json.loads((out / SUMMARY_FILE).read_text(encoding="utf-8"))

    def read(files: dict[str, str]) -> dict[int, list[RoundRecord]]:
        return {
            int(seed): frame_to_records(pd.read_csv(out / name, float_precision="round_trip"))
            for seed, name in files.items()
        }

    return ExperimentReport(
        per_round=read(summary["round_files"]),
        per_seed=[SeedResult(**s) for s in summary["per_seed"]],
        clean_per_round=read(summary.get("clean_round_files", {})),
        **{key: summary[key] for key in _SUMMARY_FIELDS},
    )
