"""
Campaign output files: per-task JSON-lines records, aggregate, reputation and
solution-quality CSVs. Every file opens with the run's metadata so that a
result can always be traced back to its configuration and seeds.
"""

import csv
import json
import logging
import os
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional

from .mission import CampaignResult, MissionReport, ScatterPoint
from .reputation import ReputationLedger

logger = logging.getLogger(__name__)

AGGREGATE_COLUMNS = ["solver", "n_uavs", "n_tasks", "completed_pct", "mean_violations", "mean_shortfall", "seed"]
REPUTATION_COLUMNS = ["mission", "uav_id", "rho"]
SCATTER_COLUMNS = ["mission", "task_id", "solver", "cost", "neg_log_reliability"]


def aggregate_row(result: CampaignResult, n_uavs: int, n_tasks: int) -> Dict[str, Any]:
    return {
        "solver": result.config.solver,
        "n_uavs": n_uavs,
        "n_tasks": n_tasks,
        "completed_pct": round(result.completed_pct, 6),
        "mean_violations": round(result.mean_violations, 6),
        "mean_shortfall": round(result.mean_shortfall, 6),
        "seed": result.config.seed,
    }


def task_records(report: MissionReport) -> List[Dict[str, Any]]:
    """One JSON-ready record per task of the mission"""
    records = []
    for outcome in report.outcomes:
        record = {"type": "task", "mission": report.mission, "solver": report.solver}
        record.update(outcome.model_dump(mode="json"))
        record["members"] = list(outcome.member_ids)
        records.append(record)
    return records


class ReportWriter:
    """Writes campaign outputs under one directory"""

    def __init__(self, output_dir: str = "results", metadata: Optional[Mapping[str, Any]] = None):
        self.output_dir = output_dir
        self.metadata = dict(metadata or {})
        self.ensure_output_directory()

    def ensure_output_directory(self):
        """Create the output directory if it doesn't exist"""
        if not os.path.exists(self.output_dir):
            os.makedirs(self.output_dir)

    def path(self, name: str) -> Path:
        return Path(self.output_dir) / name

    def _header_lines(self) -> List[str]:
        return [f"# {key}: {json.dumps(value, sort_keys=True)}" for key, value in sorted(self.metadata.items())]

    def _write_csv(self, name: str, columns: List[str], rows: Iterable[Mapping[str, Any]]) -> Path:
        path = self.path(name)
        with open(path, "w", encoding="utf-8", newline="") as f:
            for line in self._header_lines():
                f.write(line + "\n")
            writer = csv.DictWriter(f, fieldnames=columns, lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({column: row[column] for column in columns})
        return path

    def write_reports(self, reports: Iterable[MissionReport], name: str = "reports.jsonl") -> Path:
        """Metadata record first, then one record per (mission, task)"""
        path = self.path(name)
        with open(path, "w", encoding="utf-8") as f:
            f.write(json.dumps({"type": "metadata", **self.metadata}, sort_keys=True) + "\n")
            for report in reports:
                for record in task_records(report):
                    f.write(json.dumps(record, sort_keys=True) + "\n")
        return path

    def append_report(self, report: MissionReport, name: str = "reports.jsonl") -> Path:
        """Add one mission's records to an existing reports file"""
        path = self.path(name)
        with open(path, "a", encoding="utf-8") as f:
            for record in task_records(report):
                f.write(json.dumps(record, sort_keys=True) + "\n")
        return path

    def write_aggregates(self, rows: Iterable[Mapping[str, Any]], name: str = "aggregates.csv") -> Path:
        return self._write_csv(name, AGGREGATE_COLUMNS, rows)

    def write_reputation(self, ledger: ReputationLedger, name: str = "reputation.csv") -> Path:
        rows = ({"mission": e.mission, "uav_id": e.uav_id, "rho": repr(e.rho)} for e in ledger.history)
        return self._write_csv(name, REPUTATION_COLUMNS, rows)

    def write_scatter(self, points: Iterable[ScatterPoint], name: str = "scatter.csv") -> Path:
        rows = (
            {**asdict(p), "cost": repr(p.cost), "neg_log_reliability": repr(p.neg_log_reliability)} for p in points
        )
        return self._write_csv(name, SCATTER_COLUMNS, rows)

    def write_campaign(self, result: CampaignResult, n_uavs: int, n_tasks: int, prefix: str = "") -> Dict[str, Path]:
        """All four files of one campaign; `prefix` separates solvers sharing a directory"""
        paths = {
            "reports": self.write_reports(result.reports, f"{prefix}reports.jsonl"),
            "aggregates": self.write_aggregates([aggregate_row(result, n_uavs, n_tasks)], f"{prefix}aggregates.csv"),
            "reputation": self.write_reputation(result.ledger, f"{prefix}reputation.csv"),
            "scatter": self.write_scatter(result.scatter, f"{prefix}scatter.csv"),
        }
        logger.info("Wrote %s outputs to %s", result.config.solver, self.output_dir)
        return paths


def read_csv_rows(path) -> List[Dict[str, str]]:
    """Rows of a CSV written by ReportWriter, skipping its metadata header"""
    with open(path, encoding="utf-8", newline="") as f:
        lines = [line for line in f if not line.startswith("# ")]
    return list(csv.DictReader(lines))


def read_records(path) -> List[Dict[str, Any]]:
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]
