"""Report rendering: tables, CSV, figures, overlays.  All headless."""

import numpy as np
import pytest

from portvision.ellipse import EllipseAxes
from portvision.evaluate import FrameResult, aggregate
from portvision.geometry import PortPose, rotation_z
from portvision.report import (
    draw_overlay,
    format_report_table,
    render_report,
    write_report_csv,
)

from conftest import make_pose

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def sample_results():
    gt = make_pose(20.0, 30.0, 10.0, (0.0, 0.0, 0.6))
    est = PortPose(rotation=gt.rotation @ rotation_z(3.0), position=gt.position + 0.02)
    return [
        FrameResult(0, gt, est=est, in_fov=True),
        FrameResult(100_000, gt, est=gt, in_fov=True),
        FrameResult(200_000, gt, est=None, in_fov=True, abort_reason="gate"),
    ]


def test_format_report_table():
    results = sample_results()
    reports = {"unfiltered": aggregate(results), "filtered": aggregate(results[:1])}
    table = format_report_table(reports)
    lines = table.split("\n")
    assert "unfiltered" in lines[0] and "filtered" in lines[0]
    assert any("position error med [m]" in ln for ln in lines)
    assert any("detection rate all [%]" in ln for ln in lines)
    # every body line carries one cell per report column
    assert all(len(ln) == len(lines[0]) for ln in lines[1:])


def test_format_report_table_nan_prints_na():
    gt = make_pose(0.0, 0.0, 0.0, (0.0, 0.0, 0.6))
    empty = aggregate([FrameResult(0, gt, est=None, in_fov=True, abort_reason="gate")])
    table = format_report_table({"run": empty})
    assert "n/a" in table
    assert "nan" not in table


def test_write_report_csv(tmp_path):
    reports = {"a": aggregate(sample_results()), "b": aggregate(sample_results())}
    path = tmp_path / "report.csv"
    write_report_csv(path, reports)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "metric,a,b"
    assert len(lines) == 13  # header + 12 metric rows
    row = next(ln for ln in lines if ln.startswith("position error RMSE"))
    cells = row.split(",")
    assert float(cells[1]) == pytest.approx(aggregate(sample_results()).pos_rmse_m, abs=1e-4)


def test_render_report_writes_all_outputs(tmp_path):
    results = sample_results()
    out = tmp_path / "report"
    reports = render_report(out, {"unfiltered": results, "filtered": results[:2]})
    assert set(reports) == {"unfiltered", "filtered"}
    assert (out / "report.txt").read_text().startswith(" ")
    assert (out / "report.csv").exists()
    for name in ("errors_over_time.png", "error_histograms.png"):
        blob = (out / name).read_bytes()
        assert blob[:8] == PNG_MAGIC
        assert len(blob) > 1000


def test_draw_overlay(tmp_path, davis, port):
    from portvision.pose import render_reflector_mask
    from portvision.synth import SceneConfig, render_frame

    pose = make_pose(25.0, 60.0, 30.0, (0.0, 0.0, 0.6))
    frame = render_frame(pose, port, davis, SceneConfig())
    ellipse = EllipseAxes(center=(173.0, 130.0), a=60.0, b=40.0, theta=0.4)
    mask = render_reflector_mask(port, pose.rotation, pose.position, davis)
    path = tmp_path / "overlay.png"
    draw_overlay(frame, path, ellipse=ellipse, reflector_mask=mask, title="t=0")
    assert path.read_bytes()[:8] == PNG_MAGIC

    bare = tmp_path / "bare.png"
    draw_overlay(frame, bare)
    assert bare.read_bytes()[:8] == PNG_MAGIC
