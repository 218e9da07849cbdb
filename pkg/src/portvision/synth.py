"""Synthetic ground-truth generator: trajectories, frame rendering, datasets.

The ring is drawn as a band around the exact perspective projection of the
3D circle, never from an ellipse approximation, so the small shape error the
estimator accepts when it fits an ellipse is physically present in every
rendered frame.  Photometry is stylized: flat levels, sinusoidal panel
texture, optional bright distractor edges, Gaussian sensor noise, and a
saturation clamp.  Frames are anti-aliased by 2x2 supersampling and
quantized to 8-bit levels so a PGM round trip is exact.

Dataset generation is a pure function of the configs and the seed: rerunning
with the same manifest reproduces every file bit for bit.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import config as config_mod
from . import pose as pose_mod
from . import raster
from .ellipse import axes_from_conic_matrix
from .events import EventStream, EVENT_DTYPE, simulate_events, write_events
from .geometry import (
    CameraIntrinsics,
    GeometryError,
    PortModel,
    PortPose,
    circle_image_conic,
    circle_plane_basis,
    quaternion_from_rotation,
    rotation_about_axis,
    rotation_aligning_z,
    rotation_from_quaternion,
    rotation_z,
)

TRAJECTORY_KINDS = ("approach", "orbit", "tumble")


@dataclass
class Trajectory:
    """Parametric camera-relative port motion, sampled at a fixed rate."""

    kind: str = "approach"
    duration_s: float = 10.0
    rate_hz: float = 10.0
    seed: int = 0
    # approach: distance shrinks linearly, direction wobbles slightly
    start_distance: float = 1.5
    end_distance: float = 0.3
    inclination_deg: float = 30.0
    yaw_rate_deg_s: float = 8.0
    # orbit: fixed distance, normal azimuth sweeps
    azimuth_rate_deg_s: float = 20.0
    # tumble: fixed position, rotation about a port-frame axis
    tumble_axis: Tuple[float, float, float] = (0.0, 0.0, 1.0)
    tumble_rate_deg_s: float = 10.0

    def __post_init__(self):
        if self.kind not in TRAJECTORY_KINDS:
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        if self.duration_s <= 0 or self.rate_hz <= 0:
            raise ValueError("duration and rate must be positive")
        if self.start_distance <= 0 or self.end_distance <= 0:
            raise ValueError("distances must keep the port in front of the camera")
        if not 0.0 <= self.inclination_deg < 90.0:
            raise ValueError("inclination must lie in [0, 90) degrees")
        axis = np.asarray(self.tumble_axis, dtype=float)
        if axis.shape != (3,) or np.linalg.norm(axis) < 1e-12:
            raise ValueError("tumble axis must be a nonzero 3-vector")

    def frame_count(self) -> int:
        return int(round(self.duration_s * self.rate_hz))

    def sample(self) -> List[Tuple[int, PortPose]]:
        """Sequence of (timestamp_us, pose); deterministic under the seed."""
        rng = np.random.default_rng(self.seed)
        phase = rng.uniform(0.0, 2.0 * np.pi, size=4)
        n = self.frame_count()
        out: List[Tuple[int, PortPose]] = []
        alpha = np.deg2rad(self.inclination_deg)
        for i in range(n):
            t = i / self.rate_hz
            ts = int(round(t * 1e6))
            if self.kind == "approach":
                d = self.start_distance + (self.end_distance - self.start_distance) * (
                    t / self.duration_s
                )
                wob = 0.04
                off = np.array(
                    [
                        wob * np.sin(2.0 * np.pi * 0.15 * t + phase[0]),
                        wob * np.cos(2.0 * np.pi * 0.11 * t + phase[1]),
                        1.0,
                    ]
                )
                p = d * off / np.linalg.norm(off)
                azim = phase[2] + np.deg2rad(5.0) * t
                normal = _normal_at(alpha, azim)
                rot = rotation_aligning_z(normal) @ rotation_z(
                    np.rad2deg(phase[3]) + self.yaw_rate_deg_s * t
                )
            elif self.kind == "orbit":
                p = np.array([0.0, 0.0, self.start_distance])
                azim = phase[2] + np.deg2rad(self.azimuth_rate_deg_s) * t
                normal = _normal_at(alpha, azim)
                rot = rotation_aligning_z(normal) @ rotation_z(
                    np.rad2deg(phase[3]) + self.yaw_rate_deg_s * t
                )
            else:  # tumble
                p = np.array([0.0, 0.0, self.start_distance])
                base = rotation_aligning_z(_normal_at(alpha, phase[2]))
                spin = rotation_about_axis(
                    np.asarray(self.tumble_axis, dtype=float),
                    self.tumble_rate_deg_s * t,
                )
                rot = base @ spin
            if p[2] <= 0:
                raise GeometryError("trajectory left the z > 0 half-space")
            out.append((ts, PortPose(rotation=rot, position=p)))
        return out

    def to_kv(self) -> dict:
        ax = np.asarray(self.tumble_axis, dtype=float)
        return {
            "kind": self.kind,
            "duration_s": repr(self.duration_s),
            "rate_hz": repr(self.rate_hz),
            "seed": self.seed,
            "start_distance": repr(self.start_distance),
            "end_distance": repr(self.end_distance),
            "inclination_deg": repr(self.inclination_deg),
            "yaw_rate_deg_s": repr(self.yaw_rate_deg_s),
            "azimuth_rate_deg_s": repr(self.azimuth_rate_deg_s),
            "tumble_axis": " ".join(repr(float(v)) for v in ax),
            "tumble_rate_deg_s": repr(self.tumble_rate_deg_s),
        }

    @classmethod
    def from_kv(cls, kv: dict) -> "Trajectory":
        base = cls()
        axis_raw = config_mod.get_str(kv, "tumble_axis", "0.0 0.0 1.0").split()
        if len(axis_raw) != 3:
            raise config_mod.ConfigError("tumble_axis: expected 3 numbers")
        return cls(
            kind=config_mod.get_str(kv, "kind", base.kind),
            duration_s=config_mod.get_float(kv, "duration_s", base.duration_s),
            rate_hz=config_mod.get_float(kv, "rate_hz", base.rate_hz),
            seed=config_mod.get_int(kv, "seed", base.seed),
            start_distance=config_mod.get_float(kv, "start_distance", base.start_distance),
            end_distance=config_mod.get_float(kv, "end_distance", base.end_distance),
            inclination_deg=config_mod.get_float(kv, "inclination_deg", base.inclination_deg),
            yaw_rate_deg_s=config_mod.get_float(kv, "yaw_rate_deg_s", base.yaw_rate_deg_s),
            azimuth_rate_deg_s=config_mod.get_float(
                kv, "azimuth_rate_deg_s", base.azimuth_rate_deg_s
            ),
            tumble_axis=tuple(float(v) for v in axis_raw),
            tumble_rate_deg_s=config_mod.get_float(
                kv, "tumble_rate_deg_s", base.tumble_rate_deg_s
            ),
        )


def _normal_at(inclination_rad: float, azimuth_rad: float) -> np.ndarray:
    """Port normal tilted off the camera axis; fronto-parallel is (0,0,-1)."""
    sa, ca = np.sin(inclination_rad), np.cos(inclination_rad)
    return np.array([sa * np.cos(azimuth_rad), sa * np.sin(azimuth_rad), -ca])


@dataclass
class SceneConfig:
    background_level: float = 0.06
    ring_brightness: float = 0.95
    reflector_brightness: float = 1.0
    texture_amplitude: float = 0.10
    noise_sigma: float = 0.02
    saturation_level: float = 1.0
    distractor_edges: int = 0

    def __post_init__(self):
        levels = (
            self.background_level,
            self.ring_brightness,
            self.reflector_brightness,
            self.texture_amplitude,
            self.noise_sigma,
            self.saturation_level,
        )
        if any(not 0.0 <= v <= 1.0 for v in levels):
            raise ValueError("scene levels must lie in [0, 1]")
        if self.distractor_edges < 0:
            raise ValueError("distractor edge count must be >= 0")

    def to_kv(self) -> dict:
        return {
            "background_level": repr(self.background_level),
            "ring_brightness": repr(self.ring_brightness),
            "reflector_brightness": repr(self.reflector_brightness),
            "texture_amplitude": repr(self.texture_amplitude),
            "noise_sigma": repr(self.noise_sigma),
            "saturation_level": repr(self.saturation_level),
            "distractor_edges": self.distractor_edges,
        }

    @classmethod
    def from_kv(cls, kv: dict) -> "SceneConfig":
        base = cls()
        return cls(
            background_level=config_mod.get_float(kv, "background_level", base.background_level),
            ring_brightness=config_mod.get_float(kv, "ring_brightness", base.ring_brightness),
            reflector_brightness=config_mod.get_float(
                kv, "reflector_brightness", base.reflector_brightness
            ),
            texture_amplitude=config_mod.get_float(
                kv, "texture_amplitude", base.texture_amplitude
            ),
            noise_sigma=config_mod.get_float(kv, "noise_sigma", base.noise_sigma),
            saturation_level=config_mod.get_float(
                kv, "saturation_level", base.saturation_level
            ),
            distractor_edges=config_mod.get_int(kv, "distractor_edges", base.distractor_edges),
        )


@dataclass
class BackgroundPattern:
    """Static panel texture and distractor segments, fixed per dataset."""

    wave_kx: np.ndarray
    wave_ky: np.ndarray
    wave_phase: np.ndarray
    segments: np.ndarray  # (n, 5): x0, y0, x1, y1 in unit coords, brightness


def sample_background(scene: SceneConfig, rng: np.random.Generator) -> BackgroundPattern:
    segments = np.zeros((scene.distractor_edges, 5))
    if scene.distractor_edges:
        segments[:, :4] = rng.uniform(0.0, 1.0, size=(scene.distractor_edges, 4))
        segments[:, 4] = rng.uniform(0.4, 0.9, size=scene.distractor_edges)
    return BackgroundPattern(
        wave_kx=rng.uniform(0.5, 3.0, size=3),
        wave_ky=rng.uniform(0.5, 3.0, size=3),
        wave_phase=rng.uniform(0.0, 2.0 * np.pi, size=3),
        segments=segments,
    )


# ---------------------------------------------------------------------------
# rendering

_SUPERSAMPLE = 2


def _fine_intrinsics(K: CameraIntrinsics, s: int) -> CameraIntrinsics:
    # coarse pixel center x maps to fine coordinate s*x + (s-1)/2
    return CameraIntrinsics(
        fx=K.fx * s,
        fy=K.fy * s,
        cx=K.cx * s + (s - 1) / 2.0,
        cy=K.cy * s + (s - 1) / 2.0,
        width=K.width * s,
        height=K.height * s,
    )


def _sampson_window(m3: np.ndarray, x0: int, x1: int, y0: int, y1: int) -> np.ndarray:
    """Approximate pixel distance to the conic on an index window."""
    xs = np.arange(x0, x1, dtype=float)[None, :]
    ys = np.arange(y0, y1, dtype=float)[:, None]
    gx = 2.0 * (m3[0, 0] * xs + m3[0, 1] * ys + m3[0, 2])
    gy = 2.0 * (m3[0, 1] * xs + m3[1, 1] * ys + m3[1, 2])
    val = (
        m3[0, 0] * xs * xs
        + 2.0 * m3[0, 1] * xs * ys
        + m3[1, 1] * ys * ys
        + 2.0 * m3[0, 2] * xs
        + 2.0 * m3[1, 2] * ys
        + m3[2, 2]
    )
    grad = np.sqrt(gx * gx + gy * gy)
    return np.abs(val) / np.maximum(grad, 1e-12)


def _ring_fully_in_front(pose: PortPose, nu: float) -> bool:
    u, w = circle_plane_basis(pose.normal)
    reach = nu * np.hypot(u[2], w[2])
    return pose.position[2] - reach > 1e-6


def _paint_ring(
    canvas: np.ndarray, K: CameraIntrinsics, pose: PortPose, nu: float,
    half_band: float, level: float,
) -> None:
    """Max-composite a band of the given half width around the ring conic."""
    if not _ring_fully_in_front(pose, nu):
        return
    m3 = circle_image_conic(pose.normal, pose.position, nu, K)
    axes = axes_from_conic_matrix(m3)
    pad = half_band + 2.0
    x0 = max(0, int(np.floor(axes.center[0] - axes.a - pad)))
    x1 = min(K.width, int(np.ceil(axes.center[0] + axes.a + pad)) + 1)
    y0 = max(0, int(np.floor(axes.center[1] - axes.a - pad)))
    y1 = min(K.height, int(np.ceil(axes.center[1] + axes.a + pad)) + 1)
    if x0 >= x1 or y0 >= y1:
        return
    dist = _sampson_window(m3, x0, x1, y0, y1)
    coverage = np.clip(half_band + 0.5 - dist, 0.0, 1.0)
    region = canvas[y0:y1, x0:x1]
    np.maximum(region, level * coverage, out=region)


def _paint_reflectors(
    canvas: np.ndarray, K: CameraIntrinsics, pose: PortPose, model: PortModel,
    level: float,
) -> None:
    for y, a, b in pose_mod.reflector_spans(model, pose.rotation, pose.position, K):
        row = canvas[y, a:b]
        np.maximum(row, level, out=row)


def _paint_background(
    canvas: np.ndarray, scene: SceneConfig, pattern: Optional[BackgroundPattern]
) -> None:
    h, w = canvas.shape
    canvas += scene.background_level
    if pattern is None:
        return
    if scene.texture_amplitude > 0.0:
        xu = (np.arange(w) + 0.5) / w
        yu = (np.arange(h) + 0.5) / h
        tex = np.zeros((h, w))
        for kx, ky, ph in zip(pattern.wave_kx, pattern.wave_ky, pattern.wave_phase):
            tex += np.sin(
                2.0 * np.pi * (kx * xu[None, :] + ky * yu[:, None]) + ph
            )
        canvas += scene.texture_amplitude * tex / (2.0 * len(pattern.wave_kx))
        np.clip(canvas, 0.0, 1.0, out=canvas)
    for x0u, y0u, x1u, y1u, level in pattern.segments:
        x0, y0 = x0u * (w - 1), y0u * (h - 1)
        x1, y1 = x1u * (w - 1), y1u * (h - 1)
        steps = int(2 * np.hypot(x1 - x0, y1 - y0)) + 2
        t = np.linspace(0.0, 1.0, steps)
        xx = np.rint(x0 + t * (x1 - x0)).astype(int)
        yy = np.rint(y0 + t * (y1 - y0)).astype(int)
        for dy in (0, 1):
            for dx in (0, 1):
                xi = np.clip(xx + dx, 0, w - 1)
                yi = np.clip(yy + dy, 0, h - 1)
                np.maximum.at(canvas, (yi, xi), level)


def _finish_frame(
    fine: np.ndarray, K: CameraIntrinsics, scene: SceneConfig, rng
) -> np.ndarray:
    s = _SUPERSAMPLE
    np.minimum(fine, scene.saturation_level, out=fine)
    coarse = fine.reshape(K.height, s, K.width, s).mean(axis=(1, 3))
    if scene.noise_sigma > 0.0:
        coarse += rng.normal(0.0, scene.noise_sigma, size=coarse.shape)
    np.clip(coarse, 0.0, 1.0, out=coarse)
    return np.round(coarse * 255.0) / 255.0


def render_frame(
    pose: PortPose,
    model: PortModel,
    K: CameraIntrinsics,
    scene: SceneConfig,
    rng: Optional[np.random.Generator] = None,
    background: Optional[BackgroundPattern] = None,
) -> np.ndarray:
    """Grayscale frame of the port over the synthetic background."""
    if pose.position[2] <= 0:
        raise GeometryError("port center must be in front of the camera")
    if rng is None:
        rng = np.random.default_rng(0)
    if background is None:
        background = sample_background(scene, rng)
    s = _SUPERSAMPLE
    Kf = _fine_intrinsics(K, s)
    fine = np.zeros((Kf.height, Kf.width))
    _paint_background(fine, scene, background)
    _paint_ring(fine, Kf, pose, model.ring_radius, half_band=float(s), level=scene.ring_brightness)
    _paint_reflectors(fine, Kf, pose, model, level=scene.reflector_brightness)
    return _finish_frame(fine, K, scene, rng)


def render_background(
    K: CameraIntrinsics,
    scene: SceneConfig,
    rng: Optional[np.random.Generator] = None,
    background: Optional[BackgroundPattern] = None,
) -> np.ndarray:
    """Port-free frame: background, texture, distractors, and noise only."""
    if rng is None:
        rng = np.random.default_rng(0)
    if background is None:
        background = sample_background(scene, rng)
    Kf = _fine_intrinsics(K, _SUPERSAMPLE)
    fine = np.zeros((Kf.height, Kf.width))
    _paint_background(fine, scene, background)
    return _finish_frame(fine, K, scene, rng)


def render_gt_masks(
    pose: PortPose, model: PortModel, K: CameraIntrinsics
) -> Tuple[np.ndarray, np.ndarray]:
    """Noise-free binary masks: 2-px ring band and the projected reflectors."""
    if pose.position[2] <= 0:
        raise GeometryError("port center must be in front of the camera")
    ring = np.zeros((K.height, K.width), dtype=bool)
    if _ring_fully_in_front(pose, model.ring_radius):
        m3 = circle_image_conic(pose.normal, pose.position, model.ring_radius, K)
        axes = axes_from_conic_matrix(m3)
        pad = 3.0
        x0 = max(0, int(np.floor(axes.center[0] - axes.a - pad)))
        x1 = min(K.width, int(np.ceil(axes.center[0] + axes.a + pad)) + 1)
        y0 = max(0, int(np.floor(axes.center[1] - axes.a - pad)))
        y1 = min(K.height, int(np.ceil(axes.center[1] + axes.a + pad)) + 1)
        if x0 < x1 and y0 < y1:
            dist = _sampson_window(m3, x0, x1, y0, y1)
            ring[y0:y1, x0:x1] = dist <= 1.0
    reflector = pose_mod.render_reflector_mask(model, pose.rotation, pose.position, K)
    return ring, reflector


# ---------------------------------------------------------------------------
# ground-truth pose CSV

GT_FIELDS = "timestamp_us,tx,ty,tz,qw,qx,qy,qz"


def write_gt_csv(path, samples: Sequence[Tuple[int, PortPose]]) -> None:
    lines = [GT_FIELDS]
    for ts, pose in samples:
        q = quaternion_from_rotation(pose.rotation)
        vals = ",".join(repr(float(v)) for v in (*pose.position, *q))
        lines.append(f"{ts},{vals}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def read_gt_csv(path) -> List[Tuple[int, PortPose]]:
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != GT_FIELDS:
        raise ValueError(f"{path}: unexpected ground-truth header")
    out = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 8:
            raise ValueError(f"{path}: malformed ground-truth row {ln!r}")
        ts = int(parts[0])
        position = np.array([float(v) for v in parts[1:4]])
        quat = np.array([float(v) for v in parts[4:8]])
        out.append((ts, PortPose(rotation=rotation_from_quaternion(quat), position=position)))
    return out


# ---------------------------------------------------------------------------
# dataset generation

MANIFEST_NAME = "manifest.kv"
DATASET_FORMAT = "portvision-dataset-1"


@dataclass
class Dataset:
    root: Path
    K: CameraIntrinsics
    model: PortModel
    scene: SceneConfig
    trajectory: Trajectory
    with_events: bool
    event_contrast: float
    event_noise_rate: float
    gt: List[Tuple[int, PortPose]] = field(default_factory=list)

    def frame_path(self, i: int) -> Path:
        return self.root / "frames" / f"frame_{i:04d}.pgm"

    def ring_mask_path(self, i: int) -> Path:
        return self.root / "masks" / f"ring_{i:04d}.pgm"

    def reflector_mask_path(self, i: int) -> Path:
        return self.root / "masks" / f"reflector_{i:04d}.pgm"

    @property
    def events_path(self) -> Path:
        return self.root / "events.evt"

    @property
    def poses_path(self) -> Path:
        return self.root / "poses.csv"


def generate_dataset(
    trajectory: Trajectory,
    scene: SceneConfig,
    model: PortModel,
    K: CameraIntrinsics,
    out_dir,
    with_events: bool = False,
    event_contrast: float = 0.2,
    event_noise_rate: float = 0.0,
) -> Dataset:
    """Render a full dataset to disk: frames, GT masks, poses, manifest.

    The frame renderer consumes one RNG stream seeded by the trajectory seed;
    the event simulator uses an independent stream (seed + 1) over noise-free
    re-renders, so sensor read noise never turns into phantom events.
    """
    root = Path(out_dir)
    (root / "frames").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    samples = trajectory.sample()
    rng = np.random.default_rng(trajectory.seed)
    background = sample_background(scene, rng)
    dataset = Dataset(
        root=root,
        K=K,
        model=model,
        scene=scene,
        trajectory=trajectory,
        with_events=with_events,
        event_contrast=event_contrast,
        event_noise_rate=event_noise_rate,
        gt=samples,
    )
    for i, (_, pose) in enumerate(samples):
        frame = render_frame(pose, model, K, scene, rng, background=background)
        raster.write_pgm(dataset.frame_path(i), frame)
        ring_mask, refl_mask = render_gt_masks(pose, model, K)
        raster.write_pgm(dataset.ring_mask_path(i), ring_mask)
        raster.write_pgm(dataset.reflector_mask_path(i), refl_mask)
    write_gt_csv(dataset.poses_path, samples)
    if with_events:
        quiet = dataclasses.replace(scene, noise_sigma=0.0)
        ev_rng = np.random.default_rng(trajectory.seed + 1)
        chunks = []
        prev = render_frame(samples[0][1], model, K, quiet, background=background)
        for i in range(1, len(samples)):
            cur = render_frame(samples[i][1], model, K, quiet, background=background)
            stream = simulate_events(
                prev,
                cur,
                samples[i - 1][0],
                samples[i][0],
                contrast=event_contrast,
                rng=ev_rng,
                noise_rate=event_noise_rate,
            )
            chunks.append(stream.events)
            prev = cur
        events = (
            np.concatenate(chunks) if chunks else np.empty(0, dtype=EVENT_DTYPE)
        )
        write_events(
            dataset.events_path,
            EventStream(events=events, width=K.width, height=K.height),
        )
    manifest = {"format": DATASET_FORMAT, "frame_count": len(samples)}
    manifest.update({f"camera.{k}": v for k, v in K.to_kv().items()})
    manifest.update({f"port.{k}": v for k, v in model.to_kv().items()})
    manifest.update({f"scene.{k}": v for k, v in scene.to_kv().items()})
    manifest.update({f"trajectory.{k}": v for k, v in trajectory.to_kv().items()})
    manifest["with_events"] = int(with_events)
    manifest["event_contrast"] = repr(event_contrast)
    manifest["event_noise_rate"] = repr(event_noise_rate)
    config_mod.write_kv_file(root / MANIFEST_NAME, manifest)
    return dataset


def load_dataset(root) -> Dataset:
    root = Path(root)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.exists():
        raise config_mod.ConfigError(f"{manifest_path}: dataset manifest missing")
    kv = config_mod.read_kv_file(manifest_path)
    if config_mod.get_str(kv, "format", "") != DATASET_FORMAT:
        raise config_mod.ConfigError(f"{manifest_path}: not a {DATASET_FORMAT} manifest")

    def sub(prefix: str) -> dict:
        plen = len(prefix) + 1
        return {k[plen:]: v for k, v in kv.items() if k.startswith(prefix + ".")}

    dataset = Dataset(
        root=root,
        K=CameraIntrinsics.from_kv(sub("camera")),
        model=PortModel.from_kv(sub("port")),
        scene=SceneConfig.from_kv(sub("scene")),
        trajectory=Trajectory.from_kv(sub("trajectory")),
        with_events=bool(config_mod.get_int(kv, "with_events", 0)),
        event_contrast=config_mod.get_float(kv, "event_contrast", 0.2),
        event_noise_rate=config_mod.get_float(kv, "event_noise_rate", 0.0),
        gt=read_gt_csv(root / "poses.csv"),
    )
    expected = config_mod.get_int(kv, "frame_count")
    if expected != len(dataset.gt):
        raise config_mod.ConfigError(
            f"{manifest_path}: frame_count {expected} != poses.csv rows {len(dataset.gt)}"
        )
    return dataset
