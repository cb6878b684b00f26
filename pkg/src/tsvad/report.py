"""Metric tables: one row per (model, loss, window, modality) configuration.

Reports carry the resolved config and a dataset content hash so every run is
attributable, and round-trip losslessly through JSON.
"""

from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any


@dataclass(frozen=True)
class MetricRow:
    run_id: str
    family: str
    modality: str
    loss_mode: str
    input_len: int
    shift: int
    fusion: str | None = None
    auc_roc: float | None = None
    auc_pr: float | None = None
    no_skill_roc: float = 0.5
    no_skill_pr: float | None = None
    n_scored: int = 0
    n_anomalous: int = 0
    skipped_clips: tuple[str, ...] = ()
    error: str | None = None

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> "MetricRow":
        data = dict(payload)
        data["skipped_clips"] = tuple(data.get("skipped_clips") or ())
        return cls(**data)


@dataclass
class Report:
    """Rows plus run-attribution metadata (resolved config, dataset hash)."""

    meta: dict[str, Any] = field(default_factory=dict)
    rows: list[MetricRow] = field(default_factory=list)

    def add(self, row: MetricRow) -> None:
        self.rows.append(row)

    def to_json(self) -> str:
        return json.dumps(
            {"meta": self.meta, "rows": [asdict(r) for r in self.rows]},
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "Report":
        payload = json.loads(text)
        return cls(
            meta=payload.get("meta", {}),
            rows=[MetricRow.from_dict(r) for r in payload.get("rows", [])],
        )

    def to_csv(self) -> str:
        import csv

        names = [f.name for f in fields(MetricRow)]
        buffer = io.StringIO()
        writer = csv.writer(buffer)
        writer.writerow(names)
        for row in self.rows:
            record = asdict(row)
            record["skipped_clips"] = ";".join(record["skipped_clips"])
            writer.writerow([record[n] for n in names])
        return buffer.getvalue()

    def to_text(self) -> str:
        """Aligned human-readable table."""
        columns = (
            "run_id", "family", "modality", "loss_mode", "input_len",
            "shift", "fusion", "auc_roc", "auc_pr", "no_skill_pr", "error",
        )

        def show(row: MetricRow, name: str) -> str:
            value = getattr(row, name)
            if value is None:
                return "-"
            if isinstance(value, float):
                return f"{value:.4f}"
            return str(value)

        table = [columns] + [tuple(show(r, c) for c in columns) for r in self.rows]
        widths = [max(len(line[i]) for line in table) for i in range(len(columns))]
        out = []
        for i, line in enumerate(table):
            out.append("  ".join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip())
            if i == 0:
                out.append("  ".join("-" * w for w in widths))
        return "\n".join(out) + "\n"

    def save(self, directory: str | Path, formats: tuple[str, ...] = ("json", "csv", "txt")) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        if "json" in formats:
            (directory / "metrics.json").write_text(self.to_json())
        if "csv" in formats:
            (directory / "report.csv").write_text(self.to_csv())
        if "txt" in formats:
            (directory / "report.txt").write_text(self.to_text())


def build_report(meta: dict[str, Any], rows: list[MetricRow]) -> Report:
    """Assemble a report from finished runs."""
    return Report(meta=meta, rows=list(rows))
