"""Comma-separated report files with documented headers.

Floats are written with repr-level precision so a rerun can be compared
bitwise column by column. Wall time is the one column excluded from
reproducibility comparisons.
"""

from __future__ import annotations

import csv
from pathlib import Path

from .harness import EpochReport, TestReport


def _fmt(v: float) -> str:
    return repr(float(v))


def epoch_header(n_subtasks: int) -> list[str]:
    return (["epoch", "train_loss"]
            + [f"alloc_used_{i}" for i in range(1, n_subtasks + 1)]
            + [f"psnr_{i}" for i in range(1, n_subtasks + 1)]
            + [f"alloc_next_{i}" for i in range(1, n_subtasks + 1)]
            + ["wall_time_s"])


def write_epoch_reports(path, reports: list[EpochReport]) -> None:
    n = len(reports[0].psnr)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(epoch_header(n))
        for r in reports:
            w.writerow([r.epoch, _fmt(r.train_loss)]
                       + [str(c) for c in r.allocation]
                       + [_fmt(p) for p in r.psnr]
                       + [str(c) for c in r.next_allocation]
                       + [f"{r.wall_time_s:.3f}"])


def read_epoch_reports(path) -> list[EpochReport]:
    out = []
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    n = sum(1 for h in header if h.startswith("psnr_"))
    for row in rows[1:]:
        vals = dict(zip(header, row))
        out.append(EpochReport(
            epoch=int(vals["epoch"]),
            train_loss=float(vals["train_loss"]),
            psnr=tuple(float(vals[f"psnr_{i}"]) for i in range(1, n + 1)),
            allocation=tuple(int(vals[f"alloc_used_{i}"]) for i in range(1, n + 1)),
            next_allocation=tuple(int(vals[f"alloc_next_{i}"])
                                  for i in range(1, n + 1)),
            wall_time_s=float(vals["wall_time_s"]),
        ))
    return out


def write_test_report(path, report: TestReport) -> None:
    """Per-trial, per-level metric rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "level", "l2_permille", "psnr_db"])
        for t in range(report.trials):
            for li, level in enumerate(report.levels):
                w.writerow([t, level, _fmt(report.l2pm[t, li]),
                            _fmt(report.psnr[t, li])])


def write_sweep(path, report: TestReport) -> None:
    """Per-level aggregates for difficulty-spectrum plots."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["level", "psnr_mean_db", "psnr_se", "l2_permille_mean",
                    "l2_permille_se"])
        pm, ps = report.psnr_mean, report.psnr_se
        lm, ls = report.l2pm_mean, report.l2pm_se
        for li, level in enumerate(report.levels):
            w.writerow([level, _fmt(pm[li]), _fmt(ps[li]), _fmt(lm[li]),
                        _fmt(ls[li])])


def write_comparison(path, rows: list[dict]) -> None:
    """Scheduler-by-metric comparison table (one row per scheduler kind)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scheduler", "l2_permille_mean", "psnr_mean_db",
                    "level6_psnr_db", "training_instances"])
        for r in rows:
            w.writerow([r["scheduler"], _fmt(r["l2pm"]), _fmt(r["psnr"]),
                        _fmt(r["level6_psnr"]), str(r["instances"])])


def write_allocation_history(path, reports: list[EpochReport]) -> None:
    """The (epoch, counts..., PSNRs...) records the scheduler produced."""
    n = len(reports[0].psnr)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch"] + [f"count_{i}" for i in range(1, n + 1)]
                   + [f"psnr_{i}" for i in range(1, n + 1)])
        for r in reports:
            w.writerow([r.epoch] + [str(c) for c in r.allocation]
                       + [_fmt(p) for p in r.psnr])


def read_csv_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
