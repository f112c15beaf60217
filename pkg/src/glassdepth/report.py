"""Benchmark report rendering: delimited records, a text table, and figures.

The eval pipeline produces one record per sample plus All/Easy/Hard
aggregate rows. This module writes them as CSV (the machine-readable
artifact), formats the plain-text summary table, and renders matplotlib
figures next to the delimited output for quick visual review.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from io import BytesIO, StringIO
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .io import BadFormat, _atomic_write_bytes
from .metrics import EASY_ABS_REL_MAX, BenchmarkReport, SplitSummary

REPORT_CSV = "report.csv"
REPORT_TXT = "report.txt"

_CSV_COLUMNS = [
    "sample_id",
    "status",
    "split",
    "raw_abs_rel",
    "abs_rel",
    "delta1",
    "valid_pixel_count",
    "invalid_pred_count",
    "error",
]


@dataclass(frozen=True)
class EvalRecord:
    """Evaluation outcome for one sample; failed samples keep their reason."""

    sample_id: str
    status: str = "ok"
    split: Optional[str] = None
    raw_abs_rel: Optional[float] = None
    abs_rel: Optional[float] = None
    delta1: Optional[float] = None
    valid_pixel_count: Optional[int] = None
    invalid_pred_count: Optional[int] = None
    error: Optional[str] = None


def write_report_csv(
    records: Sequence[EvalRecord], report: BenchmarkReport, path: Path
) -> None:
    buf = StringIO()
    writer = csv.DictWriter(buf, fieldnames=_CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for rec in records:
        row = {f.name: getattr(rec, f.name) for f in fields(EvalRecord)}
        writer.writerow({k: ("" if v is None else v) for k, v in row.items()})
    for name, summary in (("ALL", report.overall), ("EASY", report.easy), ("HARD", report.hard)):
        if summary is None:
            continue
        writer.writerow(
            {
                "sample_id": name,
                "status": "aggregate",
                "split": name.lower() if name != "ALL" else "",
                "abs_rel": summary.abs_rel,
                "delta1": summary.delta1,
                "valid_pixel_count": summary.count,
            }
        )
    _atomic_write_bytes(Path(path), buf.getvalue().encode("utf-8"))


def read_report_csv(path: Path) -> tuple[list[EvalRecord], BenchmarkReport]:
    """Parse a report written by write_report_csv back into records + aggregates."""

    def _f(value):
        return None if value == "" else float(value)

    def _i(value):
        return None if value == "" else int(value)

    records: list[EvalRecord] = []
    summaries: dict[str, SplitSummary] = {}
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                if row["status"] == "aggregate":
                    summaries[row["sample_id"]] = SplitSummary(
                        count=int(row["valid_pixel_count"]),
                        abs_rel=float(row["abs_rel"]),
                        delta1=float(row["delta1"]),
                    )
                    continue
                records.append(
                    EvalRecord(
                        sample_id=row["sample_id"],
                        status=row["status"],
                        split=row["split"] or None,
                        raw_abs_rel=_f(row["raw_abs_rel"]),
                        abs_rel=_f(row["abs_rel"]),
                        delta1=_f(row["delta1"]),
                        valid_pixel_count=_i(row["valid_pixel_count"]),
                        invalid_pred_count=_i(row["invalid_pred_count"]),
                        error=row["error"] or None,
                    )
                )
    except (OSError, KeyError, ValueError) as exc:
        raise BadFormat(f"{path}: not a readable report ({exc})") from exc
    report = BenchmarkReport(
        overall=summaries.get("ALL"), easy=summaries.get("EASY"), hard=summaries.get("HARD")
    )
    return records, report


def format_table(report: BenchmarkReport) -> str:
    """Plain-text summary with All / Easy / Hard column groups."""

    def cells(summary: Optional[SplitSummary]) -> tuple[str, str, str]:
        if summary is None:
            return "-", "-", "-"
        return f"{summary.abs_rel:.4f}", f"{summary.delta1:.4f}", str(summary.count)

    groups = [
        ("All", cells(report.overall)),
        ("Easy", cells(report.easy)),
        ("Hard", cells(report.hard)),
    ]
    lines = [
        "         " + "".join(f"{name:^20}" for name, _ in groups),
        "         " + "".join(f"{'AbsRel':>9}{'d1':>8}   " for _ in groups),
        "value    " + "".join(f"{c[0]:>9}{c[1]:>8}   " for _, c in groups),
        "samples  " + "".join(f"{c[2]:>9}{'':>8}   " for _, c in groups),
    ]
    return "\n".join(line.rstrip() for line in lines) + "\n"


def write_report_txt(report: BenchmarkReport, path: Path) -> None:
    _atomic_write_bytes(Path(path), format_table(report).encode("utf-8"))


def _fig_bytes(fig) -> bytes:
    buf = BytesIO()
    fig.savefig(buf, format="png", dpi=150)
    plt.close(fig)
    return buf.getvalue()


def render_figures(
    records: Sequence[EvalRecord], report: BenchmarkReport, out_dir: Path
) -> list[Path]:
    """Render summary figures next to the delimited report; returns the paths."""
    out_dir = Path(out_dir)
    written: list[Path] = []

    names, abs_rels, delta1s, counts = [], [], [], []
    for name, summary in (("All", report.overall), ("Easy", report.easy), ("Hard", report.hard)):
        if summary is None:
            continue
        names.append(name)
        abs_rels.append(summary.abs_rel)
        delta1s.append(summary.delta1)
        counts.append(summary.count)

    if names:
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3.2))
        ax1.bar(names, abs_rels, color="#c44e52")
        ax1.set_ylabel("AbsRel (lower is better)")
        ax2.bar(names, delta1s, color="#4c72b0")
        ax2.set_ylabel("delta < 1.25 (higher is better)")
        ax2.set_ylim(0, 1)
        for ax, values in ((ax1, abs_rels), (ax2, delta1s)):
            for i, v in enumerate(values):
                ax.text(i, v, f"{v:.3f}", ha="center", va="bottom", fontsize=8)
        fig.suptitle(f"Depth accuracy by split ({counts[0]} samples)")
        fig.tight_layout()
        path = out_dir / "summary.png"
        _atomic_write_bytes(path, _fig_bytes(fig))
        written.append(path)

    sample_abs = [r.abs_rel for r in records if r.status == "ok" and r.abs_rel is not None]
    if sample_abs:
        fig, ax = plt.subplots(figsize=(6, 3.2))
        ax.hist(sample_abs, bins=40, color="#55a868", edgecolor="white")
        ax.axvline(EASY_ABS_REL_MAX, color="#c44e52", linestyle="--", label="easy/hard threshold")
        ax.set_xlabel("per-sample AbsRel")
        ax.set_ylabel("samples")
        ax.legend()
        fig.tight_layout()
        path = out_dir / "abs_rel_hist.png"
        _atomic_write_bytes(path, _fig_bytes(fig))
        written.append(path)

    return written
