"""Shape-error metrics between simulated and reconstructed needle curves.

Curves are paired by equal arc-length fractions measured from their
entry points; tip error is the distance between the last corresponded
pair, and the error-to-deflection percentage normalizes tip error by
the reference curve's lateral tip excursion.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


class MetricsError(ValueError):
    pass


def resample_by_arclength(points, k: int) -> np.ndarray:
    """k points at equal arc-length spacing along a polyline (endpoints kept)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise MetricsError("polyline needs at least two (x, y) points")
    if k < 2:
        raise MetricsError(f"need at least two samples, got k={k}")
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    total = float(seg.sum())
    if total <= 0.0:
        raise MetricsError("degenerate zero-length curve")
    s = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.linspace(0.0, total, k)
    x = np.interp(targets, s, pts[:, 0])
    y = np.interp(targets, s, pts[:, 1])
    out = np.stack([x, y], axis=1)
    out[0] = pts[0]
    out[-1] = pts[-1]
    return out


def correspond(sim_points, gt_points, k: int | None = None):
    """Resample both curves at k equal-arc-length stations from their entries."""
    gt = np.asarray(gt_points, dtype=float)
    if k is None:
        k = gt.shape[0]
    return resample_by_arclength(sim_points, k), resample_by_arclength(gt, k)


def in_plane_errors(sim_c, gt_c) -> np.ndarray:
    """Pointwise Euclidean distance between corresponded curves."""
    a = np.asarray(sim_c, dtype=float)
    b = np.asarray(gt_c, dtype=float)
    if a.shape != b.shape:
        raise MetricsError(f"corresponded curves differ in shape: {a.shape} vs {b.shape}")
    return np.linalg.norm(a - b, axis=1)


def tip_error(sim_c, gt_c) -> float:
    """Distance between the last corresponded points."""
    a = np.asarray(sim_c, dtype=float)
    b = np.asarray(gt_c, dtype=float)
    return float(np.linalg.norm(a[-1] - b[-1]))


def edp(te: float, gt_points) -> Optional[float]:
    """Tip error as a percentage of the reference tip deflection.

    Deflection is the |y_last - y_first| of the reference polyline; a
    zero-deflection reference makes the ratio undefined (None), never
    infinite.
    """
    gt = np.asarray(gt_points, dtype=float)
    deflection = abs(float(gt[-1, 1] - gt[0, 1]))
    if deflection == 0.0:
        return None
    return 100.0 * te / deflection


@dataclass
class ErrorReport:
    """Per-insertion shape errors (metres; edp in percent or None)."""

    te: float
    ipe: np.ndarray
    max_ipe: float
    median_ipe: float
    mean_ipe: float
    std_ipe: float
    edp: Optional[float]
    label: str = ""

    @property
    def edp_defined(self) -> bool:
        return self.edp is not None


def build_report(sim_points, gt_points, k: int | None = None, label: str = "") -> ErrorReport:
    sim_c, gt_c = correspond(sim_points, gt_points, k)
    ipe = in_plane_errors(sim_c, gt_c)
    te = tip_error(sim_c, gt_c)
    return ErrorReport(
        te=te,
        ipe=ipe,
        max_ipe=float(ipe.max()),
        median_ipe=float(np.median(ipe)),
        mean_ipe=float(ipe.mean()),
        std_ipe=float(ipe.std()),
        edp=edp(te, gt_points),
        label=label,
    )


@dataclass
class Summary:
    """Aggregate over insertions.

    Per-insertion statistics are averaged (max/median/mean IPE, TE);
    the pooled variants treat all sample points as one population.
    """

    n_insertions: int
    median_ipe_avg: float
    median_ipe_pooled: float
    ipe_mean: float
    ipe_std: float
    max_ipe_avg: float
    te_avg: float
    edp_avg: Optional[float]
    n_edp_undefined: int

    COLUMNS = ("n_insertions", "median_ipe_avg", "median_ipe_pooled", "ipe_mean",
               "ipe_std", "max_ipe_avg", "te_avg", "edp_avg", "n_edp_undefined")

    def row(self) -> list:
        return [getattr(self, c) for c in self.COLUMNS]


def summarize(reports: Sequence[ErrorReport]) -> Summary:
    if not reports:
        raise MetricsError("no reports to summarize")
    pooled = np.concatenate([r.ipe for r in reports])
    edps = [r.edp for r in reports if r.edp is not None]
    return Summary(
        n_insertions=len(reports),
        median_ipe_avg=float(np.mean([r.median_ipe for r in reports])),
        median_ipe_pooled=float(np.median(pooled)),
        ipe_mean=float(np.mean([r.mean_ipe for r in reports])),
        ipe_std=float(np.std([r.mean_ipe for r in reports])),
        max_ipe_avg=float(np.mean([r.max_ipe for r in reports])),
        te_avg=float(np.mean([r.te for r in reports])),
        edp_avg=float(np.mean(edps)) if edps else None,
        n_edp_undefined=len(reports) - len(edps),
    )


def write_report_csv(reports: Sequence[ErrorReport], summary: Summary, path):
    """Per-insertion rows (mm) followed by one summary row."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "te_mm", "median_ipe_mm", "mean_ipe_mm",
                    "std_ipe_mm", "max_ipe_mm", "edp_pct"])
        for r in reports:
            w.writerow([r.label, r.te * 1e3, r.median_ipe * 1e3, r.mean_ipe * 1e3,
                        r.std_ipe * 1e3, r.max_ipe * 1e3,
                        "" if r.edp is None else r.edp])
        w.writerow([])
        w.writerow(list(Summary.COLUMNS))
        row = summary.row()
        scaled = []
        for name, value in zip(Summary.COLUMNS, row):
            if name.startswith(("median", "ipe", "max", "te")) and value is not None:
                scaled.append(value * 1e3)
            else:
                scaled.append("" if value is None else value)
        w.writerow(scaled)
