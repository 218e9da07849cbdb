"""Human-readable evaluation output: text tables, CSV, figures, overlays.

Everything renders headless (Agg backend); figures land next to the
delimited output so a report directory is self-contained.
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .ellipse import EllipseAxes
from .evaluate import (
    FrameResult,
    MetricsReport,
    aggregate,
    normal_error,
    position_error,
    rotation_error,
)

_ROWS = (
    ("pos_med_m", "position error med [m]"),
    ("pos_rmse_m", "position error RMSE [m]"),
    ("normal_med_deg", "normal error med [deg]"),
    ("normal_rmse_deg", "normal error RMSE [deg]"),
    ("rot_med_deg", "rotation error med [deg]"),
    ("rot_rmse_deg", "rotation error RMSE [deg]"),
    ("rot_unfolded_med_deg", "rotation error (raw) med [deg]"),
    ("rot_unfolded_rmse_deg", "rotation error (raw) RMSE [deg]"),
    ("det_all_pct", "detection rate all [%]"),
    ("det_in_fov_pct", "detection rate in FoV [%]"),
    ("n_frames", "frames"),
    ("n_detected", "frames with estimate"),
)


def _fmt(value) -> str:
    if isinstance(value, float):
        if np.isnan(value):
            return "n/a"
        return f"{value:.4f}"
    return str(value)


def format_report_table(reports: Dict[str, MetricsReport]) -> str:
    labels = list(reports)
    name_w = max(len(label) for _, label in _ROWS) + 2
    col_w = max(12, max(len(lb) for lb in labels) + 2)
    lines = ["".ljust(name_w) + "".join(lb.rjust(col_w) for lb in labels)]
    for attr, label in _ROWS:
        cells = "".join(_fmt(getattr(reports[lb], attr)).rjust(col_w) for lb in labels)
        lines.append(label.ljust(name_w) + cells)
    return "\n".join(lines)


def write_report_csv(path, reports: Dict[str, MetricsReport]) -> None:
    labels = list(reports)
    lines = ["metric," + ",".join(labels)]
    for attr, label in _ROWS:
        vals = ",".join(_fmt(getattr(reports[lb], attr)) for lb in labels)
        lines.append(f"{label.replace(',', ';')},{vals}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def _series(results: Sequence[FrameResult], symmetry_order: int):
    ts, pos, nrm, rot = [], [], [], []
    for r in results:
        if r.est is None:
            continue
        ts.append(r.timestamp_us / 1e6)
        pos.append(position_error(r.est, r.gt))
        nrm.append(normal_error(r.est, r.gt))
        rot.append(rotation_error(r.est, r.gt, symmetry_order))
    return np.array(ts), np.array(pos), np.array(nrm), np.array(rot)


def plot_error_series(
    path, results_by_label: Dict[str, List[FrameResult]], symmetry_order: int = 3
) -> None:
    fig, axes = plt.subplots(3, 1, figsize=(8, 8), sharex=True)
    titles = ("position error [m]", "normal error [deg]", "rotation error [deg]")
    for label, results in results_by_label.items():
        ts, pos, nrm, rot = _series(results, symmetry_order)
        for ax, series in zip(axes, (pos, nrm, rot)):
            ax.plot(ts, series, marker=".", linestyle="-", markersize=3, label=label)
    for ax, title in zip(axes, titles):
        ax.set_ylabel(title)
        ax.grid(True, alpha=0.3)
        ax.legend(loc="upper right", fontsize=8)
    axes[-1].set_xlabel("time [s]")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_error_histograms(
    path, results_by_label: Dict[str, List[FrameResult]], symmetry_order: int = 3
) -> None:
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.2))
    titles = ("position error [m]", "normal error [deg]", "rotation error [deg]")
    for label, results in results_by_label.items():
        _, pos, nrm, rot = _series(results, symmetry_order)
        for ax, series in zip(axes, (pos, nrm, rot)):
            if series.size:
                ax.hist(series, bins=30, alpha=0.55, label=label)
    for ax, title in zip(axes, titles):
        ax.set_xlabel(title)
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_report(
    out_dir,
    results_by_label: Dict[str, List[FrameResult]],
    symmetry_order: int = 3,
) -> Dict[str, MetricsReport]:
    """Write report.txt, report.csv, and figures; returns the aggregates."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports = {
        label: aggregate(results, symmetry_order)
        for label, results in results_by_label.items()
    }
    table = format_report_table(reports)
    (out / "report.txt").write_text(table + "\n", encoding="ascii")
    write_report_csv(out / "report.csv", reports)
    plot_error_series(out / "errors_over_time.png", results_by_label, symmetry_order)
    plot_error_histograms(out / "error_histograms.png", results_by_label, symmetry_order)
    return reports


# ---------------------------------------------------------------------------
# frame overlays

def draw_overlay(
    frame: np.ndarray,
    path,
    ellipse: Optional[EllipseAxes] = None,
    reflector_mask: Optional[np.ndarray] = None,
    title: str = "",
) -> None:
    """Frame with the fitted ellipse and projected reflectors drawn on top."""
    fig, ax = plt.subplots(figsize=(6, 4.6))
    ax.imshow(np.asarray(frame, dtype=float), cmap="gray", vmin=0.0, vmax=1.0)
    if reflector_mask is not None:
        overlay = np.zeros((*reflector_mask.shape, 4))
        overlay[reflector_mask.astype(bool)] = (0.1, 0.7, 1.0, 0.45)
        ax.imshow(overlay)
    if ellipse is not None:
        t = np.linspace(0.0, 2.0 * np.pi, 256)
        pts = np.stack([ellipse.point_at(v) for v in t])
        ax.plot(pts[:, 0], pts[:, 1], color="orange", linewidth=1.2)
        ax.plot([ellipse.center[0]], [ellipse.center[1]], "+", color="orange")
    if title:
        ax.set_title(title, fontsize=9)
    ax.set_xlim(-0.5, frame.shape[1] - 0.5)
    ax.set_ylim(frame.shape[0] - 0.5, -0.5)
    ax.set_axis_off()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
