"""Error metrics, ground-truth matching, aggregation, sensitivity bound."""

import numpy as np
import pytest

from portvision.evaluate import (
    FrameResult,
    aggregate,
    detection_rates,
    in_fov,
    match_results,
    normal_error,
    position_error,
    rotation_error,
    rotation_error_unfolded,
    sensitivity_bound,
    yaw_error,
    _lower_median,
    _rmse,
)
from portvision.geometry import PortPose, rotation_about_axis, rotation_z
from portvision.pose import ResultRow

from conftest import make_pose


def pose_at(yaw_deg=0.0, incl_deg=0.0, position=(0.0, 0.0, 0.6)):
    return make_pose(incl_deg, 0.0, yaw_deg, position)


# ---------------------------------------------------------------------------
# per-frame errors


def test_position_error_is_euclidean():
    a = pose_at(position=(0.0, 0.0, 0.6))
    b = pose_at(position=(0.3, -0.4, 0.6))
    assert position_error(b, a) == pytest.approx(0.5, abs=1e-12)
    assert position_error(a, a) == 0.0


def test_normal_error_measures_tilt_only():
    gt = pose_at(incl_deg=0.0)
    est = pose_at(incl_deg=25.0)
    assert normal_error(est, gt) == pytest.approx(25.0, abs=1e-9)
    # yaw does not move the normal
    spun = pose_at(incl_deg=25.0, yaw_deg=77.0)
    assert normal_error(spun, gt) == pytest.approx(25.0, abs=1e-9)


def test_rotation_error_folds_over_symmetry():
    gt = pose_at()
    for k in range(3):
        est = PortPose(rotation=gt.rotation @ rotation_z(120.0 * k), position=gt.position)
        assert rotation_error(est, gt) == pytest.approx(0.0, abs=1e-6)
        # unfolded keeps the full spin
        want_raw = 0.0 if k == 0 else min(120.0 * k, 360.0 - 120.0 * k)
        assert rotation_error_unfolded(est, gt) == pytest.approx(want_raw, abs=1e-6)
    est = PortPose(rotation=gt.rotation @ rotation_z(125.0), position=gt.position)
    assert rotation_error(est, gt) == pytest.approx(5.0, abs=1e-6)
    with pytest.raises(ValueError):
        rotation_error(gt, gt, symmetry_order=0)


@pytest.mark.parametrize(
    "offset,want",
    [(0.4, 0.4), (119.5, 0.5), (120.0, 0.0), (240.7, 0.7), (-59.0, 59.0), (61.0, 59.0)],
)
def test_yaw_error_folds_mod_120(offset, want):
    gt = pose_at(incl_deg=20.0)
    est = PortPose(rotation=gt.rotation @ rotation_z(offset), position=gt.position)
    assert yaw_error(est, gt) == pytest.approx(want, abs=1e-9)


def test_yaw_error_ignores_small_swing():
    # swing-twist split: perturbing the normal by a few degrees must not
    # masquerade as a yaw error
    gt = pose_at(incl_deg=30.0, yaw_deg=50.0)
    swing = rotation_about_axis(np.array([1.0, 0.0, 0.0]), 4.0)
    est = PortPose(rotation=gt.rotation @ swing, position=gt.position)
    assert yaw_error(est, gt) < 0.2
    with pytest.raises(ValueError):
        yaw_error(gt, gt, symmetry_order=0)


def test_in_fov(davis):
    assert in_fov(pose_at(position=(0.0, 0.0, 0.6)), davis)
    # projects far outside the 346x260 image
    assert not in_fov(pose_at(position=(0.5, 0.0, 0.6)), davis)
    assert not in_fov(
        PortPose(rotation=np.eye(3), position=np.array([0.0, 0.0, -0.6])), davis
    )


# ---------------------------------------------------------------------------
# matching


def make_rows(samples, status="accepted"):
    return [
        ResultRow(timestamp_us=ts, status=status, pose=pose, score=10.0)
        for ts, pose in samples
    ]


def test_match_results_pairs_by_timestamp(davis):
    gt = [(i * 100_000, pose_at(yaw_deg=float(i))) for i in range(5)]
    rows = make_rows(gt)
    results = match_results(gt, rows, davis)
    assert len(results) == 5
    assert all(r.est is not None for r in results)
    # small timestamp jitter still pairs with the right frame
    jittered = [
        ResultRow(timestamp_us=ts + 7, status="accepted", pose=pose)
        for ts, pose in gt
    ]
    results = match_results(gt, jittered, davis)
    assert all(r.est is not None for r in results)


def test_match_results_statuses_gate_detection(davis):
    gt = [(i * 100_000, pose_at()) for i in range(3)]
    rows = make_rows(gt, status="rejected")
    # default scoring counts rejected rows as detections
    assert all(r.est is not None for r in match_results(gt, rows, davis))
    # accepted-only scoring turns them into misses with the status as reason
    strict = match_results(gt, rows, davis, statuses=("accepted",))
    assert all(r.est is None and r.abort_reason == "rejected" for r in strict)


def test_match_results_abort_rows_and_gaps(davis):
    gt = [(0, pose_at()), (100_000, pose_at()), (200_000, pose_at())]
    rows = [
        ResultRow(timestamp_us=0, status="accepted", pose=pose_at()),
        ResultRow(timestamp_us=100_000, status="abort", pose=None, abort_reason="gate"),
        # no row at all for the third frame
    ]
    res = match_results(gt, rows, davis)
    assert res[0].est is not None
    assert res[1].est is None and res[1].abort_reason == "gate"
    assert res[2].est is None and res[2].abort_reason == "unmatched"


def test_match_results_rejects_foreign_rows(davis):
    gt = [(0, pose_at()), (100_000, pose_at())]
    stray = [ResultRow(timestamp_us=370_000, status="accepted", pose=pose_at())]
    with pytest.raises(ValueError):
        match_results(gt, stray, davis)
    with pytest.raises(ValueError):
        match_results([], stray, davis)


# ---------------------------------------------------------------------------
# aggregation


def test_lower_median_and_rmse():
    # [TRIVIAL] lower median of an even count takes the smaller middle value
    assert _lower_median(np.array([4.0, 1.0, 3.0, 2.0])) == 2.0
    assert _lower_median(np.array([3.0, 1.0, 2.0])) == 2.0
    assert np.isnan(_lower_median(np.array([])))
    assert _rmse(np.array([3.0, 4.0])) == pytest.approx(np.sqrt(12.5), abs=1e-12)
    assert np.isnan(_rmse(np.array([])))


def test_detection_rates_and_aggregate(davis):
    gt_pose = pose_at(incl_deg=20.0, yaw_deg=10.0)
    off_pose = pose_at(position=(0.5, 0.0, 0.6))  # outside the image
    est_good = PortPose(
        rotation=gt_pose.rotation @ rotation_z(2.0), position=gt_pose.position + 0.01
    )
    results = [
        FrameResult(0, gt_pose, est=est_good, in_fov=True),
        FrameResult(1, gt_pose, est=None, in_fov=True, abort_reason="gate"),
        FrameResult(2, off_pose, est=None, in_fov=False, abort_reason="gate"),
        FrameResult(3, gt_pose, est=gt_pose, in_fov=True),
    ]
    rate_all, rate_fov = detection_rates(results)
    assert rate_all == pytest.approx(50.0)
    assert rate_fov == pytest.approx(100.0 * 2 / 3)

    rep = aggregate(results)
    assert rep.n_frames == 4
    assert rep.n_in_fov == 3
    assert rep.n_detected == 2
    assert rep.n_detected_in_fov == 2
    assert rep.det_all_pct == pytest.approx(50.0)
    # detected errors: perfect frame and the (2 deg, 1.7 cm) frame;
    # lower median picks the perfect one
    assert rep.pos_med_m == pytest.approx(0.0, abs=1e-12)
    assert rep.rot_med_deg == pytest.approx(0.0, abs=1e-6)
    assert rep.rot_rmse_deg == pytest.approx(2.0 / np.sqrt(2.0), abs=1e-6)
    assert rep.pos_rmse_m == pytest.approx(0.01 * np.sqrt(3) / np.sqrt(2), abs=1e-9)
    # kv export keeps floats as parseable reprs
    kv = rep.to_kv()
    assert kv["n_frames"] == 4
    assert float(kv["pos_rmse_m"]) == pytest.approx(rep.pos_rmse_m)


def test_aggregate_empty_detections():
    gt = pose_at()
    rep = aggregate([FrameResult(0, gt, est=None, in_fov=True, abort_reason="gate")])
    assert rep.n_detected == 0
    assert np.isnan(rep.pos_med_m)
    assert np.isnan(rep.rot_rmse_deg)


def test_frame_result_validation():
    gt = pose_at()
    with pytest.raises(ValueError):
        FrameResult(0, gt, est=None, in_fov=True)  # neither estimate nor reason
    with pytest.raises(ValueError):
        FrameResult(0, gt, est=gt, in_fov=True, abort_reason="gate")  # both


# ---------------------------------------------------------------------------
# sensitivity bound


def test_sensitivity_bound_frozen_values(davis):
    # [DERIVED] bisection on the center-aligned ring-shape displacement,
    # davis defaults, nu=0.1, d=0.6, 1 px noise:
    #   incl  0 -> 11.2516     incl 45 -> 1.4744
    assert sensitivity_bound(davis, 0.1, 0.6, 0.0) == pytest.approx(11.2516, abs=0.01)
    assert sensitivity_bound(davis, 0.1, 0.6, 45.0) == pytest.approx(1.4744, abs=0.01)


def test_sensitivity_bound_monotone_in_inclination(davis):
    vals = [sensitivity_bound(davis, 0.1, 0.6, float(i)) for i in range(0, 61, 5)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_sensitivity_bound_scales_with_distance_and_noise(davis):
    # farther port or more pixel noise: the shape must tilt more to matter
    near = sensitivity_bound(davis, 0.1, 0.3, 0.0)
    far = sensitivity_bound(davis, 0.1, 1.2, 0.0)
    assert near < far
    lo = sensitivity_bound(davis, 0.1, 0.6, 0.0, pixel_noise=1.0)
    hi = sensitivity_bound(davis, 0.1, 0.6, 0.0, pixel_noise=2.0)
    assert lo < hi


def test_sensitivity_bound_validation(davis):
    with pytest.raises(ValueError):
        sensitivity_bound(davis, 0.1, 0.0, 0.0)
    with pytest.raises(ValueError):
        sensitivity_bound(davis, 0.1, 0.6, 85.0)
    with pytest.raises(ValueError):
        sensitivity_bound(davis, 0.1, 0.6, 0.0, pixel_noise=0.0)
