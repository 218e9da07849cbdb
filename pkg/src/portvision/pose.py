"""Five-DoF recovery from a fitted ellipse, yaw search, and pipeline orchestration.

Position comes from the major-axis endpoint rays alone:

    p = nu * (v1 + v2) / |v2 - v1|

which also fixes the major axis direction in 3D, since both endpoint rays hit
the ring at p +- nu*(v2 - v1)/|v2 - v1|.  Depths of the minor-axis endpoints
follow from intersecting their rays with the sphere |x - p| = nu, keeping the
near root (the far one is geometrically possible but corresponds to a ring
seen from behind its own plane).  Each depth choice yields one normal
candidate; the yaw grid search over the projected-reflector overlap picks the
winner and the in-plane angle at the same time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from . import config as config_mod
from . import raster
from .ellipse import EllipseAxes, RansacConfig, ransac_ellipse
from .geometry import (
    CameraIntrinsics,
    PortModel,
    PortPose,
    back_project,
    geodesic_angle_deg,
    project,
    quaternion_from_rotation,
    rotation_aligning_z,
    rotation_from_quaternion,
    rotation_z,
)

ABORT_GATE = "gate"
ABORT_RANSAC = "ransac"
ABORT_DISCRIMINANT = "discriminant"
ABORT_YAW = "yaw"

ABORT_REASONS = (ABORT_GATE, ABORT_RANSAC, ABORT_DISCRIMINANT, ABORT_YAW)


class PoseAbort(Exception):
    """Per-frame abort carrying one of the enumerated reasons.

    "discriminant" covers every geometric inconsistency in the five-DoF
    stage: a negative root discriminant, coincident endpoint rays, or a
    degenerate axis cross product.
    """

    def __init__(self, reason: str, message: str):
        if reason not in ABORT_REASONS:
            raise ValueError(f"unknown abort reason {reason!r}")
        super().__init__(message)
        self.reason = reason


@dataclass
class FiveDof:
    """Position plus the two normal hypotheses and their supporting geometry.

    ``center_a``/``center_b`` are the ring centers implied by each depth
    assignment of the minor axis (midpoint of the candidate's 3D minor
    diameter).  The reported position stays ``p``; the per-candidate centers
    anchor the reflector rendering during the yaw search, where a shared
    anchor would systematically favor the wrong hypothesis.
    """

    p: np.ndarray
    normal_a: np.ndarray
    normal_b: np.ndarray
    center_a: np.ndarray
    center_b: np.ndarray
    major_endpoints: np.ndarray  # (2,2) px
    minor_endpoints: np.ndarray  # (2,2) px
    minor_points_3d: np.ndarray  # (2,3) m

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.normal_a = np.asarray(self.normal_a, dtype=float)
        self.normal_b = np.asarray(self.normal_b, dtype=float)
        self.center_a = np.asarray(self.center_a, dtype=float)
        self.center_b = np.asarray(self.center_b, dtype=float)
        if self.p[2] <= 0:
            raise ValueError("ring center must be in front of the camera")
        for c in (self.center_a, self.center_b):
            if c[2] <= 0:
                raise ValueError("candidate ring centers must be in front of the camera")
        for n in (self.normal_a, self.normal_b):
            if abs(np.linalg.norm(n) - 1.0) > 1e-6:
                raise ValueError("normal candidates must be unit vectors")
            if float(n @ self.p) > 1e-9:
                raise ValueError("normal candidates must face the camera")


@dataclass
class PipelineConfig:
    gamma_s: int = 30
    binarize_threshold: float = 0.5
    ransac: RansacConfig = field(default_factory=RansacConfig)
    yaw_step_deg: float = 1.0
    yaw_floor_frac: float = 0.25
    histogram_events: int = 35000
    clamp_cmax: int = 5

    def __post_init__(self):
        if self.gamma_s < 1:
            raise ValueError("gamma_s must be >= 1")
        if not 0.0 < self.binarize_threshold < 1.0:
            raise ValueError("binarize threshold must lie in (0, 1)")
        if self.yaw_step_deg <= 0:
            raise ValueError("yaw step must be positive")
        steps = 120.0 / self.yaw_step_deg
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("yaw step must evenly divide 120 degrees")
        if not 0.0 <= self.yaw_floor_frac <= 1.0:
            raise ValueError("yaw score floor fraction must lie in [0, 1]")
        if self.histogram_events < 1 or self.clamp_cmax < 1:
            raise ValueError("histogram parameters must be positive")

    def to_kv(self) -> dict:
        return {
            "gamma_s": self.gamma_s,
            "binarize_threshold": repr(self.binarize_threshold),
            "yaw_step_deg": repr(self.yaw_step_deg),
            "yaw_floor_frac": repr(self.yaw_floor_frac),
            "histogram_events": self.histogram_events,
            "clamp_cmax": self.clamp_cmax,
            "ransac_max_iterations": self.ransac.max_iterations,
            "ransac_inlier_tolerance_px": repr(self.ransac.inlier_tolerance_px),
            "ransac_min_axis_ratio": repr(self.ransac.min_axis_ratio),
            "ransac_rng_seed": self.ransac.rng_seed,
        }

    @classmethod
    def from_kv(cls, kv: dict) -> "PipelineConfig":
        base = cls()
        return cls(
            gamma_s=config_mod.get_int(kv, "gamma_s", base.gamma_s),
            binarize_threshold=config_mod.get_float(
                kv, "binarize_threshold", base.binarize_threshold
            ),
            yaw_step_deg=config_mod.get_float(kv, "yaw_step_deg", base.yaw_step_deg),
            yaw_floor_frac=config_mod.get_float(kv, "yaw_floor_frac", base.yaw_floor_frac),
            histogram_events=config_mod.get_int(kv, "histogram_events", base.histogram_events),
            clamp_cmax=config_mod.get_int(kv, "clamp_cmax", base.clamp_cmax),
            ransac=RansacConfig(
                max_iterations=config_mod.get_int(kv, "ransac_max_iterations", 200),
                inlier_tolerance_px=config_mod.get_float(kv, "ransac_inlier_tolerance_px", 2.0),
                min_axis_ratio=config_mod.get_float(kv, "ransac_min_axis_ratio", 0.15),
                rng_seed=config_mod.get_int(kv, "ransac_rng_seed", 0),
            ),
        )


# ---------------------------------------------------------------------------
# five-DoF stages

def estimate_position(axes: EllipseAxes, K: CameraIntrinsics, nu: float) -> np.ndarray:
    """Ring center from the major-axis endpoint rays."""
    endpoints = axes.major_endpoints()
    v = back_project(K, endpoints)
    diff = v[1] - v[0]
    denom = float(np.linalg.norm(diff))
    if denom < 1e-9:
        raise PoseAbort(ABORT_DISCRIMINANT, "major-axis endpoint rays coincide")
    p = nu * (v[0] + v[1]) / denom
    if p[2] <= 0:
        raise PoseAbort(ABORT_DISCRIMINANT, "estimated ring center behind the camera")
    return p


def minor_axis_points(
    axes: EllipseAxes, K: CameraIntrinsics, p: np.ndarray, nu: float
) -> np.ndarray:
    """Depths of the minor-axis endpoints on the sphere |x - p| = nu.

    Solves d^2 - 2 d (v.p) + |p|^2 - nu^2 = 0 per endpoint ray v and keeps
    the near root, the intersection between the camera and the ring center.
    """
    endpoints = axes.minor_endpoints()
    rays = back_project(K, endpoints)
    pp = float(p @ p)
    out = np.zeros((2, 3))
    for i, v in enumerate(rays):
        b = float(v @ p)
        disc = b * b - (pp - nu * nu)
        if disc < 0.0:
            raise PoseAbort(
                ABORT_DISCRIMINANT,
                "minor-axis ray misses the ring sphere (negative discriminant)",
            )
        d = b - np.sqrt(disc)
        if d <= 0.0 or d > np.sqrt(pp) + 1e-9:
            raise PoseAbort(
                ABORT_DISCRIMINANT, "minor-axis intersection not in front of the camera"
            )
        out[i] = d * v
    return out


def _minor_chords(p: np.ndarray, minor_points_3d: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Both depth assignments of the 3D minor diameter.

    The ring's minor diameter joins a near point on one endpoint ray to a far
    point on the other; which side is near is exactly the two-fold ambiguity.
    Each minor point carries its ray (v = x/|x|) and near depth; the far depth
    follows from the root sum 2(v.p), so both assignments come out without
    re-solving the quadratic.  Returns (chords, centers), each (2, 3): the
    diameter vector and its midpoint per assignment.
    """
    pts = np.asarray(minor_points_3d, dtype=float)
    depths_near = np.linalg.norm(pts, axis=1)
    if np.any(depths_near < 1e-12):
        raise PoseAbort(ABORT_DISCRIMINANT, "minor-axis point at the camera origin")
    vs = pts / depths_near[:, None]
    depths_far = 2.0 * (vs @ p) - depths_near
    ends = np.array(
        [
            [depths_near[0] * vs[0], depths_far[1] * vs[1]],
            [depths_far[0] * vs[0], depths_near[1] * vs[1]],
        ]
    )
    chords = ends[:, 1] - ends[:, 0]
    centers = 0.5 * (ends[:, 0] + ends[:, 1])
    return chords, centers


def normal_candidates(
    p: np.ndarray,
    major_endpoints: np.ndarray,
    minor_points_3d: np.ndarray,
    K: CameraIntrinsics,
) -> Tuple[np.ndarray, np.ndarray]:
    """One normal hypothesis per consistent depth assignment of the minor axis.

    Normals are cross(major_dir, chord), sign-fixed toward the camera; the
    major direction is the unit-ray difference (v2 - v1)/|v2 - v1|, whose
    endpoints sit at equal depth.
    """
    rays = back_project(K, np.asarray(major_endpoints, dtype=float))
    major_dir = rays[1] - rays[0]
    nm = float(np.linalg.norm(major_dir))
    if nm < 1e-12:
        raise PoseAbort(ABORT_DISCRIMINANT, "major-axis endpoint rays coincide")
    major_dir = major_dir / nm
    chords, _centers = _minor_chords(p, minor_points_3d)
    candidates = []
    for chord in chords:
        n = np.cross(major_dir, chord)
        ln = float(np.linalg.norm(n))
        if ln < 1e-12:
            raise PoseAbort(ABORT_DISCRIMINANT, "degenerate axis cross product")
        n = n / ln
        if float(n @ p) > 0.0:
            n = -n
        candidates.append(n)
    return candidates[0], candidates[1]


def five_dof_from_ellipse(axes: EllipseAxes, K: CameraIntrinsics, nu: float) -> FiveDof:
    p = estimate_position(axes, K, nu)
    minor_pts = minor_axis_points(axes, K, p, nu)
    major_ep = axes.major_endpoints()
    na, nb = normal_candidates(p, major_ep, minor_pts, K)
    _chords, centers = _minor_chords(p, minor_pts)
    if centers[0][2] <= 0 or centers[1][2] <= 0:
        raise PoseAbort(ABORT_DISCRIMINANT, "candidate ring center behind the camera")
    return FiveDof(
        p=p,
        normal_a=na,
        normal_b=nb,
        center_a=centers[0],
        center_b=centers[1],
        major_endpoints=major_ep,
        minor_endpoints=axes.minor_endpoints(),
        minor_points_3d=minor_pts,
    )


# ---------------------------------------------------------------------------
# reflector projection and yaw search

def reflector_span_arrays(
    model: PortModel, rotation: np.ndarray, position: np.ndarray, K: CameraIntrinsics
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Scanline spans of the projected reflector quads as (rows, x0s, x1s).

    All spans are empty when the port plane faces away from the camera or a
    quad sits behind it.  Both the rendered ground-truth masks and the yaw
    scoring consume these spans, so the two can never disagree.
    """
    rotation = np.asarray(rotation, dtype=float)
    position = np.asarray(position, dtype=float)
    empty = (np.zeros(0, dtype=int),) * 3
    normal = rotation[:, 2]
    # plane visibility: outward normal must point back toward the camera
    if float(normal @ position) >= 0.0:
        return empty
    pieces = []
    for quad in model.reflector_corners_3d():
        cam = quad @ rotation.T + position
        if np.any(cam[:, 2] <= 1e-9):
            continue
        px = project(K, cam)
        pieces.append(raster.convex_polygon_span_arrays(px, K.width, K.height))
    if not pieces:
        return empty
    return tuple(np.concatenate([p[i] for p in pieces]) for i in range(3))


def reflector_spans(
    model: PortModel, rotation: np.ndarray, position: np.ndarray, K: CameraIntrinsics
) -> List[tuple]:
    """Scanline spans of the projected reflector quads, as (row, x0, x1) tuples."""
    rows, x0s, x1s = reflector_span_arrays(model, rotation, position, K)
    return [(int(r), int(a), int(b)) for r, a, b in zip(rows, x0s, x1s)]


def render_reflector_mask(
    model: PortModel, rotation: np.ndarray, position: np.ndarray, K: CameraIntrinsics
) -> np.ndarray:
    """Binary mask of the three projected reflector quads."""
    mask = np.zeros((K.height, K.width), dtype=bool)
    rows, x0s, x1s = reflector_span_arrays(model, rotation, position, K)
    for y, x0, x1 in zip(rows, x0s, x1s):
        mask[y, x0:x1] = True
    return mask


def yaw_search(
    i_r: np.ndarray,
    p: np.ndarray,
    normals: Sequence[np.ndarray],
    model: PortModel,
    K: CameraIntrinsics,
    step_deg: float = 1.0,
    floor_frac: float = 0.25,
    anchors: Optional[Sequence[np.ndarray]] = None,
) -> Optional[Tuple[np.ndarray, float]]:
    """Grid search over yaw and normal candidate maximizing mask overlap.

    Score is sum(I_M * I_R) where I_M is the projected reflector mask.  Ties
    go to the earlier candidate, then the smaller yaw.  Returns None when the
    best overlap stays below floor_frac times the winning mask's own area:
    a floor against confidently matching noise or an empty filter output.

    ``anchors`` optionally renders each candidate's mask about its own ring
    center (default: ``p`` for every candidate).  The shared estimate sits at
    the projected ellipse center, which is biased sideways from the true ring
    center; rendering both hypotheses there hands the wrong one a systematic
    alignment advantage, so the caller should pass the per-candidate centers.
    """
    i_r = np.asarray(i_r, dtype=float)
    if i_r.shape != (K.height, K.width):
        raise ValueError("reflector image does not match the camera dimensions")
    if anchors is None:
        anchors = [p] * len(normals)
    if len(anchors) != len(normals):
        raise ValueError("need one anchor position per normal candidate")
    steps = int(round(120.0 / step_deg))
    row_cum = np.zeros((K.height, K.width + 1))
    np.cumsum(i_r, axis=1, out=row_cum[:, 1:])

    best_score = -1.0
    best_area = 0.0
    best_rotation = None
    best_base = None
    best_yaw = 0.0
    for normal, anchor in zip(normals, anchors):
        base = rotation_aligning_z(np.asarray(normal, dtype=float))
        anchor = np.asarray(anchor, dtype=float)
        scores, areas = _yaw_sweep_scores(
            row_cum, base, anchor, model, K, steps, step_deg
        )
        k = int(np.argmax(scores))
        if scores[k] > best_score:
            best_score = float(scores[k])
            best_area = float(areas[k])
            best_base = base
            best_yaw = k * step_deg
    if best_base is None or best_area <= 0.0 or best_score <= 0.0:
        return None
    if best_score < floor_frac * best_area:
        return None
    best_rotation = best_base @ rotation_z(best_yaw)
    return best_rotation, float(best_score)


def _yaw_sweep_scores(
    row_cum: np.ndarray,
    base: np.ndarray,
    anchor: np.ndarray,
    model: PortModel,
    K: CameraIntrinsics,
    steps: int,
    step_deg: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """Overlap score and mask area for every yaw step of one candidate.

    Evaluates the whole sweep as one batch: every (yaw, quad) pair is
    scan-converted simultaneously, with the same pixel-center/boundary rules
    as convex_polygon_span_arrays.  The polygon rows are padded to the
    longest quad and masked, so all arithmetic stays in whole-array ops.
    """
    height, width = row_cum.shape[0], row_cum.shape[1] - 1
    normal = base[:, 2]
    if float(normal @ anchor) >= 0.0:
        # port plane faces away: empty mask at every yaw
        return np.zeros(steps), np.zeros(steps)
    yaw = np.radians(np.arange(steps) * step_deg)
    c, s = np.cos(yaw), np.sin(yaw)
    rz = np.zeros((steps, 3, 3))
    rz[:, 0, 0] = c
    rz[:, 0, 1] = -s
    rz[:, 1, 0] = s
    rz[:, 1, 1] = c
    rz[:, 2, 2] = 1.0
    rotations = base @ rz  # (steps, 3, 3)
    corners = model.reflector_corners_3d()  # (q, 4, 3)
    cams = np.einsum("sij,qkj->sqki", rotations, corners) + anchor  # (s, q, 4, 3)
    n_quads = corners.shape[0]
    flat = cams.reshape(steps * n_quads, 4, 3)
    quad_ok = np.all(flat[:, :, 2] > 1e-9, axis=1)
    z = np.where(flat[:, :, 2] > 1e-9, flat[:, :, 2], 1.0)
    px = np.empty((steps * n_quads, 4, 2))
    px[:, :, 0] = K.fx * flat[:, :, 0] / z + K.cx
    px[:, :, 1] = K.fy * flat[:, :, 1] / z + K.cy

    ys = px[:, :, 1]
    row_lo = np.maximum(np.ceil(ys.min(axis=1) - 1e-9), 0.0)
    row_hi = np.minimum(np.floor(ys.max(axis=1) + 1e-9), height - 1.0)
    counts = np.where(quad_ok, np.maximum(row_hi - row_lo + 1.0, 0.0), 0.0).astype(int)
    max_rows = int(counts.max()) if counts.size else 0
    if max_rows <= 0:
        return np.zeros(steps), np.zeros(steps)
    rows = row_lo[:, None] + np.arange(max_rows)[None, :]  # (B, R)
    row_valid = (rows <= row_hi[:, None]) & quad_ok[:, None]

    xmin = np.full(rows.shape, np.inf)
    xmax = np.full(rows.shape, -np.inf)
    for e in range(4):
        ax, ay = px[:, e, 0], px[:, e, 1]
        bx, by = px[:, (e + 1) % 4, 0], px[:, (e + 1) % 4, 1]
        dy = by - ay
        horiz = dy == 0.0
        dy_safe = np.where(horiz, 1.0, dy)
        slope = (bx - ax) / dy_safe
        lo = np.minimum(ay, by)
        hi = np.maximum(ay, by)
        hit = (
            (rows >= (lo - 1e-12)[:, None])
            & (rows <= (hi + 1e-12)[:, None])
            & ~horiz[:, None]
        )
        x = ax[:, None] + (rows - ay[:, None]) * slope[:, None]
        np.minimum(xmin, np.where(hit, x, np.inf), out=xmin)
        np.maximum(xmax, np.where(hit, x, -np.inf), out=xmax)
        hit_h = (np.abs(ay[:, None] - rows) < 1e-12) & horiz[:, None]
        if hit_h.any():
            xlo = np.minimum(ax, bx)
            xhi = np.maximum(ax, bx)
            np.minimum(xmin, np.where(hit_h, xlo[:, None], np.inf), out=xmin)
            np.maximum(xmax, np.where(hit_h, xhi[:, None], -np.inf), out=xmax)
    covered = np.isfinite(xmin) & row_valid
    x0 = np.maximum(np.ceil(np.where(covered, xmin, 0.0) - 1e-9), 0.0).astype(int)
    x1 = np.minimum(np.floor(np.where(covered, xmax, -1.0) + 1e-9), width - 1.0).astype(int)
    keep = covered & (x0 <= x1)
    x1 = x1 + 1

    row_idx = np.where(keep, rows.astype(int), 0)
    s0 = np.where(keep, x0, 0)
    s1 = np.where(keep, x1, 0)
    contrib = row_cum[row_idx, s1] - row_cum[row_idx, s0]
    lengths = np.where(keep, x1 - x0, 0)
    scores = contrib.reshape(steps, n_quads, max_rows).sum(axis=(1, 2))
    areas = lengths.reshape(steps, n_quads, max_rows).sum(axis=(1, 2)).astype(float)
    return scores, areas


# ---------------------------------------------------------------------------
# orchestration

@dataclass
class PoseResult:
    status: str  # "estimated" | "abort"
    pose: Optional[PortPose] = None
    reason: Optional[str] = None
    five: Optional[FiveDof] = None
    ellipse: Optional[EllipseAxes] = None
    score: float = 0.0
    skeleton_count: int = 0

    def __post_init__(self):
        if self.status == "estimated" and self.pose is None:
            raise ValueError("estimated result needs a pose")
        if self.status == "abort" and self.reason not in ABORT_REASONS:
            raise ValueError("abort result needs an enumerated reason")


FilterFn = Callable[[np.ndarray], np.ndarray]


def estimate_pose(
    frame: np.ndarray,
    cfg: PipelineConfig,
    model: PortModel,
    K: CameraIntrinsics,
    ring_filter: FilterFn,
    reflector_filter: FilterFn,
) -> PoseResult:
    """Full per-frame pipeline; every failure is a typed abort, never a crash."""
    frame = np.asarray(frame, dtype=float)
    if frame.shape[:2] != (K.height, K.width):
        raise ValueError(
            f"frame shape {frame.shape[:2]} does not match camera {(K.height, K.width)}"
        )
    ring_score = ring_filter(frame)
    binary = raster.binarize(ring_score, cfg.binarize_threshold)
    skeleton = raster.skeletonize(binary)
    points = raster.active_pixels(skeleton)
    if len(points) < cfg.gamma_s:
        return PoseResult(
            status="abort", reason=ABORT_GATE, skeleton_count=len(points)
        )
    fit = ransac_ellipse(points, cfg.ransac)
    if fit is None:
        return PoseResult(
            status="abort", reason=ABORT_RANSAC, skeleton_count=len(points)
        )
    axes, _inliers = fit
    try:
        five = five_dof_from_ellipse(axes, K, nu=model.ring_radius)
    except PoseAbort as abort:
        return PoseResult(
            status="abort",
            reason=abort.reason,
            ellipse=axes,
            skeleton_count=len(points),
        )
    refl_score = reflector_filter(frame)
    i_r = raster.binarize(refl_score, cfg.binarize_threshold).astype(float)
    found = yaw_search(
        i_r,
        five.p,
        (five.normal_a, five.normal_b),
        model,
        K,
        step_deg=cfg.yaw_step_deg,
        floor_frac=cfg.yaw_floor_frac,
        anchors=(five.center_a, five.center_b),
    )
    if found is None:
        return PoseResult(
            status="abort",
            reason=ABORT_YAW,
            five=five,
            ellipse=axes,
            skeleton_count=len(points),
        )
    rotation, score = found
    pose = PortPose(rotation=rotation, position=five.p)
    return PoseResult(
        status="estimated",
        pose=pose,
        five=five,
        ellipse=axes,
        score=score,
        skeleton_count=len(points),
    )


# ---------------------------------------------------------------------------
# temporal outlier filter

class TemporalFilter:
    """Accept a pose only after three consecutive mutually-consistent frames.

    A pose farther than threshold_deg (geodesic) from its predecessor is
    rejected and seeds a fresh window, so a single outlier costs itself plus
    the warm-up of the next window.
    """

    def __init__(self, threshold_deg: float = 15.0):
        if threshold_deg <= 0:
            raise ValueError("threshold must be positive")
        self.threshold_deg = float(threshold_deg)
        self._rotations: List[np.ndarray] = []
        self._last_timestamp: Optional[int] = None

    def update(self, pose: PortPose, timestamp_us: int) -> str:
        if self._last_timestamp is not None and timestamp_us < self._last_timestamp:
            raise ValueError("timestamps must be monotone non-decreasing")
        self._last_timestamp = timestamp_us
        rotation = pose.rotation
        if self._rotations and (
            geodesic_angle_deg(self._rotations[-1], rotation) > self.threshold_deg
        ):
            self._rotations = [rotation]
            return "rejected"
        self._rotations.append(rotation)
        if len(self._rotations) > 3:
            self._rotations.pop(0)
        return "accepted" if len(self._rotations) == 3 else "pending"

    def reset(self) -> None:
        self._rotations = []
        self._last_timestamp = None


# ---------------------------------------------------------------------------
# estimated-pose CSV

RESULT_FIELDS = (
    "timestamp_us,status,tx,ty,tz,qw,qx,qy,qz,score,abort_reason"
)


@dataclass
class ResultRow:
    timestamp_us: int
    status: str  # accepted | pending | rejected | abort
    pose: Optional[PortPose]
    score: float = 0.0
    abort_reason: str = ""


def write_results_csv(path, rows: Sequence[ResultRow]) -> None:
    lines = [RESULT_FIELDS]
    for row in rows:
        if row.pose is not None:
            t = row.pose.position
            q = quaternion_from_rotation(row.pose.rotation)
            mid = ",".join(repr(float(v)) for v in (*t, *q))
        else:
            mid = ",".join([""] * 7)
        lines.append(
            f"{row.timestamp_us},{row.status},{mid},{float(row.score)!r},{row.abort_reason}"
        )
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def read_results_csv(path) -> List[ResultRow]:
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != RESULT_FIELDS:
        raise ValueError(f"{path}: unexpected results header")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 11:
            raise ValueError(f"{path}: malformed results row {ln!r}")
        ts, status = int(parts[0]), parts[1]
        if parts[2]:
            position = np.array([float(v) for v in parts[2:5]])
            quat = np.array([float(v) for v in parts[5:9]])
            pose = PortPose(rotation=rotation_from_quaternion(quat), position=position)
        else:
            pose = None
        rows.append(
            ResultRow(
                timestamp_us=ts,
                status=status,
                pose=pose,
                score=float(parts[9]) if parts[9] else 0.0,
                abort_reason=parts[10],
            )
        )
    return rows
