"""Accuracy metrics, detection-rate accounting, and the sensitivity bound.

Rotation error is reported twice: folded over the port's three-fold symmetry
(minimum geodesic distance to gt composed with each 120 degree spin) and raw.
The yaw search only identifies orientation modulo 120 degrees, so the folded
number is the meaningful one; the raw value is kept for transparency.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .ellipse import axes_from_conic_matrix
from .geometry import (
    CameraIntrinsics,
    PortPose,
    circle_image_conic,
    geodesic_angle_deg,
    project,
    quaternion_from_rotation,
    rotation_z,
)
from .pose import ResultRow


@dataclass
class FrameResult:
    """Per-ground-truth-frame outcome: an estimate or a reason there is none."""

    timestamp_us: int
    gt: PortPose
    est: Optional[PortPose]
    in_fov: bool
    abort_reason: Optional[str] = None

    def __post_init__(self):
        if (self.est is None) == (self.abort_reason is None):
            raise ValueError("exactly one of estimate and abort reason must be set")


@dataclass
class MetricsReport:
    n_frames: int
    n_in_fov: int
    n_detected: int
    n_detected_in_fov: int
    det_all_pct: float
    det_in_fov_pct: float
    pos_med_m: float
    pos_rmse_m: float
    normal_med_deg: float
    normal_rmse_deg: float
    rot_med_deg: float
    rot_rmse_deg: float
    rot_unfolded_med_deg: float
    rot_unfolded_rmse_deg: float

    def to_kv(self) -> dict:
        return {k: repr(v) if isinstance(v, float) else v for k, v in vars(self).items()}


# ---------------------------------------------------------------------------
# per-frame errors

def position_error(est: PortPose, gt: PortPose) -> float:
    return float(np.linalg.norm(est.position - gt.position))


def normal_error(est: PortPose, gt: PortPose) -> float:
    dot = float(np.clip(est.normal @ gt.normal, -1.0, 1.0))
    return float(np.degrees(np.arccos(dot)))


def rotation_error(est: PortPose, gt: PortPose, symmetry_order: int = 3) -> float:
    """Geodesic angle folded over the port's rotational symmetry."""
    if symmetry_order < 1:
        raise ValueError("symmetry order must be >= 1")
    step = 360.0 / symmetry_order
    best = np.inf
    for k in range(symmetry_order):
        candidate = gt.rotation @ rotation_z(step * k)
        best = min(best, geodesic_angle_deg(est.rotation, candidate))
    return float(best)


def rotation_error_unfolded(est: PortPose, gt: PortPose) -> float:
    return geodesic_angle_deg(est.rotation, gt.rotation)


def yaw_error(est: PortPose, gt: PortPose, symmetry_order: int = 3) -> float:
    """In-plane twist error in degrees, folded over the port symmetry.

    Extracts the z-twist of the relative rotation (swing-twist split), so a
    small normal disagreement does not leak into the yaw number.
    """
    if symmetry_order < 1:
        raise ValueError("symmetry order must be >= 1")
    rel = gt.rotation.T @ est.rotation
    qw, _, _, qz = quaternion_from_rotation(rel)
    twist = np.degrees(2.0 * np.arctan2(qz, qw))
    period = 360.0 / symmetry_order
    folded = (twist + period / 2.0) % period - period / 2.0
    return float(abs(folded))


def in_fov(gt: PortPose, K: CameraIntrinsics) -> bool:
    """True when the ground-truth ring center projects inside the image."""
    if gt.position[2] <= 0:
        return False
    return K.contains(project(K, gt.position))


# ---------------------------------------------------------------------------
# matching estimates to ground truth

def match_results(
    gt: Sequence[Tuple[int, PortPose]],
    rows: Sequence[ResultRow],
    K: CameraIntrinsics,
    statuses: Sequence[str] = ("accepted", "pending", "rejected"),
) -> List[FrameResult]:
    """Pair each ground-truth frame with its nearest-in-time estimate row.

    Rows whose status is not in `statuses` count as undetected (their status
    becomes the abort reason), which is how the temporal filter's verdict is
    applied: pass ("accepted",) to score accepted poses only.  A row whose
    timestamp is farther than half the median ground-truth spacing from every
    ground-truth frame means the files do not belong together.
    """
    if not gt:
        raise ValueError("ground truth is empty")
    gt_ts = np.array([ts for ts, _ in gt], dtype=float)
    order = np.argsort(gt_ts)
    if len(gt_ts) > 1:
        spacing = float(np.median(np.diff(gt_ts[order])))
        tol = spacing / 2.0
    else:
        tol = np.inf
    # nearest estimate row per gt frame; nearest gt frame per row for the check
    best_row: List[Optional[ResultRow]] = [None] * len(gt)
    best_dt = np.full(len(gt), np.inf)
    for row in rows:
        idx = int(np.argmin(np.abs(gt_ts - row.timestamp_us)))
        dt = abs(gt_ts[idx] - row.timestamp_us)
        if dt > tol:
            raise ValueError(
                f"estimate at {row.timestamp_us} us matches no ground-truth frame "
                f"(nearest is {dt:.0f} us away, tolerance {tol:.0f})"
            )
        if dt < best_dt[idx]:
            best_dt[idx] = dt
            best_row[idx] = row
    results = []
    for i, (ts, pose) in enumerate(gt):
        row = best_row[i]
        fov = in_fov(pose, K)
        if row is None:
            results.append(
                FrameResult(ts, pose, est=None, in_fov=fov, abort_reason="unmatched")
            )
        elif row.pose is not None and row.status in statuses:
            results.append(FrameResult(ts, pose, est=row.pose, in_fov=fov))
        else:
            reason = row.abort_reason or row.status
            results.append(
                FrameResult(ts, pose, est=None, in_fov=fov, abort_reason=reason)
            )
    return results


# ---------------------------------------------------------------------------
# aggregation

def _lower_median(values: np.ndarray) -> float:
    if values.size == 0:
        return float("nan")
    return float(np.sort(values)[(values.size - 1) // 2])


def _rmse(values: np.ndarray) -> float:
    if values.size == 0:
        return float("nan")
    return float(np.sqrt(np.mean(np.square(values))))


def detection_rates(results: Sequence[FrameResult]) -> Tuple[float, float]:
    n = len(results)
    n_fov = sum(1 for r in results if r.in_fov)
    det = sum(1 for r in results if r.est is not None)
    det_fov = sum(1 for r in results if r.est is not None and r.in_fov)
    rate_all = 100.0 * det / n if n else 0.0
    rate_fov = 100.0 * det_fov / n_fov if n_fov else 0.0
    return rate_all, rate_fov


def aggregate(results: Sequence[FrameResult], symmetry_order: int = 3) -> MetricsReport:
    detected = [r for r in results if r.est is not None]
    pos = np.array([position_error(r.est, r.gt) for r in detected])
    nrm = np.array([normal_error(r.est, r.gt) for r in detected])
    rot = np.array([rotation_error(r.est, r.gt, symmetry_order) for r in detected])
    rot_raw = np.array([rotation_error_unfolded(r.est, r.gt) for r in detected])
    rate_all, rate_fov = detection_rates(results)
    return MetricsReport(
        n_frames=len(results),
        n_in_fov=sum(1 for r in results if r.in_fov),
        n_detected=len(detected),
        n_detected_in_fov=sum(1 for r in detected if r.in_fov),
        det_all_pct=rate_all,
        det_in_fov_pct=rate_fov,
        pos_med_m=_lower_median(pos),
        pos_rmse_m=_rmse(pos),
        normal_med_deg=_lower_median(nrm),
        normal_rmse_deg=_rmse(nrm),
        rot_med_deg=_lower_median(rot),
        rot_rmse_deg=_rmse(rot),
        rot_unfolded_med_deg=_lower_median(rot_raw),
        rot_unfolded_rmse_deg=_rmse(rot_raw),
    )


# ---------------------------------------------------------------------------
# orientation sensitivity of the projected ring

def _canonical_shape(
    K: CameraIntrinsics, nu: float, distance: float, inclination_deg: float, samples: int
):
    """Centered, axis-decomposed sample points of the projected ring."""
    ar = np.deg2rad(inclination_deg)
    u = np.array([1.0, 0.0, 0.0])
    w = np.array([0.0, np.cos(ar), np.sin(ar)])
    normal = np.cross(u, w)
    center = np.array([0.0, 0.0, distance])
    axes = axes_from_conic_matrix(circle_image_conic(normal, center, nu, K))
    ea = np.array([np.cos(axes.theta), np.sin(axes.theta)])
    eb = np.array([-np.sin(axes.theta), np.cos(axes.theta)])
    return axes.a, axes.b, ea, eb


def _shape_displacement(
    K: CameraIntrinsics,
    nu: float,
    distance: float,
    incl_a: float,
    incl_b: float,
    samples: int = 360,
) -> float:
    """Max distance between parameter-matched points of the two ring shapes.

    Shapes are compared center-aligned because a rigid image shift carries no
    orientation information; axis directions of the second shape are sign-
    aligned to the first so the parameterization stays continuous in Delta.
    """
    a1, b1, ea1, eb1 = _canonical_shape(K, nu, distance, incl_a, samples)
    a2, b2, ea2, eb2 = _canonical_shape(K, nu, distance, incl_b, samples)
    if float(ea2 @ ea1) < 0.0:
        ea2 = -ea2
    if float(eb2 @ eb1) < 0.0:
        eb2 = -eb2
    th = np.linspace(0.0, 2.0 * np.pi, samples, endpoint=False)
    ct, st = np.cos(th)[:, None], np.sin(th)[:, None]
    pts1 = a1 * ct * ea1[None, :] + b1 * st * eb1[None, :]
    pts2 = a2 * ct * ea2[None, :] + b2 * st * eb2[None, :]
    return float(np.max(np.linalg.norm(pts1 - pts2, axis=1)))


def sensitivity_bound(
    K: CameraIntrinsics,
    nu: float,
    distance: float,
    inclination_deg: float,
    pixel_noise: float = 1.0,
) -> float:
    """Smallest inclination change whose ring-shape displacement reaches
    pixel_noise pixels; the orientation ambiguity floor at that viewing angle.

    Bisection over Delta in (0, 90 - inclination - 0.1] with 60 halvings;
    if even the cap cannot move the shape by pixel_noise the orientation is
    unobservable at this noise level and the bound is reported as infinite.
    """
    if distance <= 0:
        raise ValueError("distance must be positive")
    if not 0.0 <= inclination_deg <= 80.0:
        raise ValueError("inclination must lie in [0, 80] degrees")
    if pixel_noise <= 0:
        raise ValueError("pixel noise must be positive")
    lo = 0.0
    hi = 90.0 - inclination_deg - 0.1
    if _shape_displacement(K, nu, distance, inclination_deg, inclination_deg + hi) < pixel_noise:
        return float("inf")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _shape_displacement(K, nu, distance, inclination_deg, inclination_deg + mid) < pixel_noise:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
