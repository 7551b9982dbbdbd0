"""Aggregate clip results into the six collision/deviation ratios.

Per-clip binarization: a clip counts once per event kind no matter how many
events of that kind it logged. CR and DR are computed as sums of their
component ratios, so the additivity identities hold exactly.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

from .simulator import ClipResult, DeviationThresholds


class EmptyInput(Exception):
    """No countable clips to aggregate."""


@dataclass(frozen=True)
class MetricReport:
    n_total: int
    n_dc: int
    n_sc: int
    n_pd: int
    n_hd: int
    dcr: float
    scr: float
    cr: float
    pdr: float | None
    hdr: float | None
    dr: float | None
    n_deviation_eligible: int
    n_excluded: int
    thresholds: DeviationThresholds


METRIC_COLUMNS = ("cr", "dcr", "scr", "dr", "pdr", "hdr")


def _is_config_failure(clip: ClipResult) -> bool:
    return clip.failure is not None and clip.failure.startswith("config_error")


def aggregate(clips: Sequence[ClipResult], thresholds: DeviationThresholds = DeviationThresholds()) -> MetricReport:
    """Count clips per event kind and form the ratios.

    Config-failure clips are excluded from n_total and reported separately.
    Deviation ratios cover only non-edited clips (edited scenes report
    collision metrics only); they are None when no clip is eligible.
    """
    if not clips:
        raise EmptyInput("no clips to aggregate")
    counted = [c for c in clips if not _is_config_failure(c)]
    n_excluded = len(clips) - len(counted)
    n_total = len(counted)
    if n_total == 0:
        raise EmptyInput("every clip failed before driving")

    n_dc = sum(1 for c in counted if c.has_event("DYNAMIC_COLLISION"))
    n_sc = sum(1 for c in counted if c.has_event("STATIC_COLLISION"))
    eligible = [c for c in counted if not c.edited]
    n_pd = sum(1 for c in eligible if c.has_event("POSITION_DEVIATION"))
    n_hd = sum(1 for c in eligible if c.has_event("HEADING_DEVIATION"))

    dcr = n_dc / n_total
    scr = n_sc / n_total
    if eligible:
        pdr: float | None = n_pd / len(eligible)
        hdr: float | None = n_hd / len(eligible)
        dr: float | None = pdr + hdr
    else:
        pdr = hdr = dr = None
    return MetricReport(
        n_total=n_total,
        n_dc=n_dc,
        n_sc=n_sc,
        n_pd=n_pd,
        n_hd=n_hd,
        dcr=dcr,
        scr=scr,
        cr=dcr + scr,
        pdr=pdr,
        hdr=hdr,
        dr=dr,
        n_deviation_eligible=len(eligible),
        n_excluded=n_excluded,
        thresholds=thresholds,
    )


def report_to_dict(report: MetricReport) -> dict:
    return {
        "n_total": report.n_total,
        "n_dc": report.n_dc,
        "n_sc": report.n_sc,
        "n_pd": report.n_pd,
        "n_hd": report.n_hd,
        "dcr": report.dcr,
        "scr": report.scr,
        "cr": report.cr,
        "pdr": report.pdr,
        "hdr": report.hdr,
        "dr": report.dr,
        "n_deviation_eligible": report.n_deviation_eligible,
        "n_excluded": report.n_excluded,
        "thresholds": {"position": report.thresholds.position, "heading": report.thresholds.heading},
    }


def _cell(value: float | None, flag: bool) -> str:
    if value is None:
        return "-"
    text = f"{value:.3f}"
    return f"*{text}" if flag else f" {text}"


def compare(reports: Sequence[tuple[str, MetricReport]]) -> str:
    """Aligned table over the six metrics; the lowest value per column is
    flagged with '*'. Rows keep the input order."""
    if not reports:
        raise EmptyInput("no reports to compare")
    best: dict[str, float | None] = {}
    for col in METRIC_COLUMNS:
        values = [getattr(r, col) for _, r in reports if getattr(r, col) is not None]
        best[col] = min(values) if values else None
    name_w = max(len("method"), max(len(name) for name, _ in reports))
    header = f"{'method':<{name_w}}  " + "  ".join(f"{c.upper():>7}" for c in METRIC_COLUMNS)
    lines = [header, "-" * len(header)]
    for name, r in reports:
        cells = []
        for col in METRIC_COLUMNS:
            value = getattr(r, col)
            cells.append(f"{_cell(value, value is not None and value == best[col]):>7}")
        lines.append(f"{name:<{name_w}}  " + "  ".join(cells))
    return "\n".join(lines)


def reports_to_csv(reports: Sequence[tuple[str, MetricReport]]) -> str:
    """One CSV row per report."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["method", *METRIC_COLUMNS, "n_total", "n_deviation_eligible", "n_excluded"])
    for name, r in reports:
        writer.writerow(
            [name]
            + ["" if getattr(r, c) is None else f"{getattr(r, c):.6f}" for c in METRIC_COLUMNS]
            + [r.n_total, r.n_deviation_eligible, r.n_excluded]
        )
    return buf.getvalue()
