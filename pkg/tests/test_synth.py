"""Synthetic generator: trajectories, rendering, GT masks, dataset I/O."""

import dataclasses

import numpy as np
import pytest

from portvision import raster
from portvision.config import ConfigError, read_kv_file
from portvision.events import read_events
from portvision.geometry import PortModel, PortPose, project_circle_points
from portvision.synth import (
    DATASET_FORMAT,
    MANIFEST_NAME,
    SceneConfig,
    Trajectory,
    generate_dataset,
    load_dataset,
    read_gt_csv,
    render_background,
    render_frame,
    render_gt_masks,
    write_gt_csv,
)

from conftest import make_pose


QUIET = dict(texture_amplitude=0.0, noise_sigma=0.0, distractor_edges=0)


# ---------------------------------------------------------------------------
# trajectories


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory(kind="spiral")
    with pytest.raises(ValueError):
        Trajectory(duration_s=0.0)
    with pytest.raises(ValueError):
        Trajectory(rate_hz=-1.0)
    with pytest.raises(ValueError):
        Trajectory(end_distance=0.0)
    with pytest.raises(ValueError):
        Trajectory(inclination_deg=90.0)
    with pytest.raises(ValueError):
        Trajectory(kind="tumble", tumble_axis=(0.0, 0.0, 0.0))


def test_trajectory_frame_count_and_timestamps():
    traj = Trajectory(duration_s=1.3, rate_hz=10.0)
    # [TRIVIAL] round(1.3 * 10) = 13 frames at 100 ms spacing
    assert traj.frame_count() == 13
    samples = traj.sample()
    assert len(samples) == 13
    ts = [t for t, _ in samples]
    assert ts[0] == 0
    assert ts[1] == 100_000
    assert all(b > a for a, b in zip(ts, ts[1:]))


@pytest.mark.parametrize("kind", ["approach", "orbit", "tumble"])
def test_trajectory_kinds_produce_valid_poses(kind):
    traj = Trajectory(kind=kind, duration_s=2.0, rate_hz=5.0, seed=3)
    samples = traj.sample()
    assert len(samples) == 10
    for _, pose in samples:
        # PortPose validates orthonormality on construction; z > 0 is the
        # renderer's precondition.
        assert pose.position[2] > 0


def test_trajectory_sample_deterministic():
    a = Trajectory(kind="approach", seed=7).sample()
    b = Trajectory(kind="approach", seed=7).sample()
    c = Trajectory(kind="approach", seed=8).sample()
    for (ta, pa), (tb, pb) in zip(a, b):
        assert ta == tb
        np.testing.assert_array_equal(pa.rotation, pb.rotation)
        np.testing.assert_array_equal(pa.position, pb.position)
    assert not np.allclose(a[0][1].rotation, c[0][1].rotation)


def test_trajectory_approach_distance_shrinks():
    traj = Trajectory(kind="approach", start_distance=1.5, end_distance=0.3)
    samples = traj.sample()
    dists = [np.linalg.norm(p.position) for _, p in samples]
    assert all(b < a for a, b in zip(dists, dists[1:]))
    assert dists[0] == pytest.approx(1.5, abs=1e-9)


def test_trajectory_kv_round_trip():
    traj = Trajectory(
        kind="tumble",
        duration_s=3.5,
        rate_hz=12.0,
        seed=42,
        start_distance=0.9,
        inclination_deg=22.5,
        tumble_axis=(0.1, -0.2, 0.97),
        tumble_rate_deg_s=17.0,
    )
    assert Trajectory.from_kv(traj.to_kv()) == traj


# ---------------------------------------------------------------------------
# scene config


def test_scene_config_validation():
    with pytest.raises(ValueError):
        SceneConfig(background_level=-0.1)
    with pytest.raises(ValueError):
        SceneConfig(ring_brightness=1.5)
    with pytest.raises(ValueError):
        SceneConfig(distractor_edges=-1)


def test_scene_config_kv_round_trip():
    scene = SceneConfig(
        background_level=0.04,
        ring_brightness=0.8,
        reflector_brightness=0.9,
        texture_amplitude=0.15,
        noise_sigma=0.03,
        saturation_level=0.98,
        distractor_edges=5,
    )
    assert SceneConfig.from_kv(scene.to_kv()) == scene


# ---------------------------------------------------------------------------
# frame rendering


def test_render_frame_range_and_quantization(davis, port):
    pose = make_pose(25.0, 40.0, 10.0, (0.02, -0.01, 0.6))
    frame = render_frame(pose, port, davis, SceneConfig(noise_sigma=0.05))
    assert frame.shape == (davis.height, davis.width)
    assert frame.min() >= 0.0 and frame.max() <= 1.0
    # 8-bit quantization: every value is an exact k/255 level
    np.testing.assert_allclose(frame * 255.0, np.round(frame * 255.0), atol=1e-9)


def test_render_frame_deterministic(davis, port):
    pose = make_pose(30.0, 0.0, 5.0, (0.0, 0.0, 0.7))
    scene = SceneConfig(noise_sigma=0.04, texture_amplitude=0.1, distractor_edges=3)
    a = render_frame(pose, port, davis, scene, rng=np.random.default_rng(11))
    b = render_frame(pose, port, davis, scene, rng=np.random.default_rng(11))
    c = render_frame(pose, port, davis, scene, rng=np.random.default_rng(12))
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_render_frame_ring_is_bright(davis, port):
    pose = make_pose(20.0, 70.0, 0.0, (0.0, 0.0, 0.6))
    scene = SceneConfig(**QUIET)
    frame = render_frame(pose, port, davis, scene)
    ring, refl = render_gt_masks(pose, port, davis)
    # Band interior reaches the full ring level; edge pixels are antialiased.
    assert frame[ring].max() > 0.9
    assert frame[ring].mean() > 0.55
    # reflector interior saturates; only antialiased border pixels dip
    assert frame[refl].max() == pytest.approx(1.0, abs=1e-12)
    assert frame[refl].mean() > 0.8
    # Everything else stays at the flat background level.
    off = ~(ring | refl)
    assert frame[off].mean() < 0.2


def test_render_frame_rejects_port_behind_camera(davis, port):
    pose = PortPose(rotation=np.eye(3), position=np.array([0.0, 0.0, -0.5]))
    from portvision.geometry import GeometryError

    with pytest.raises(GeometryError):
        render_frame(pose, port, davis, SceneConfig())


def test_render_background_distractors(davis):
    quiet = SceneConfig(**QUIET)
    plain = render_background(davis, quiet, rng=np.random.default_rng(0))
    # flat field: the one quantized background level everywhere
    assert np.unique(plain).size == 1
    assert plain[0, 0] == pytest.approx(round(0.06 * 255) / 255, abs=1e-12)

    edgy = dataclasses.replace(quiet, distractor_edges=4)
    streaked = render_background(davis, edgy, rng=np.random.default_rng(0))
    # distractor segments paint bright streaks over the dim background
    assert (streaked > 0.3).sum() > 20


# ---------------------------------------------------------------------------
# ground-truth masks


def test_gt_ring_mask_follows_exact_projection(davis, port):
    pose = make_pose(35.0, 120.0, 40.0, (0.05, 0.03, 0.5))
    ring, _ = render_gt_masks(pose, port, davis)
    pts = project_circle_points(pose.normal, pose.position, port.ring_radius, davis)
    inside = (
        (pts[:, 0] >= 1)
        & (pts[:, 0] <= davis.width - 2)
        & (pts[:, 1] >= 1)
        & (pts[:, 1] <= davis.height - 2)
    )
    px = np.rint(pts[inside]).astype(int)
    # every exactly-projected circle point lands inside the band
    assert ring[px[:, 1], px[:, 0]].all()
    # the band is thin: roughly 2 px wide along the perimeter, never a blob
    assert 0 < ring.sum() < 8.0 * pts.shape[0]


def test_gt_reflector_mask_requires_camera_facing(davis, port):
    facing = make_pose(15.0, 0.0, 0.0, (0.0, 0.0, 0.6))
    ring_f, refl_f = render_gt_masks(facing, port, davis)
    assert refl_f.sum() > 0
    assert ring_f.sum() > 0

    # identity rotation: normal +z points away from the camera, so the
    # reflector face is hidden while the ring outline is still visible
    away = PortPose(rotation=np.eye(3), position=np.array([0.0, 0.0, 0.6]))
    ring_a, refl_a = render_gt_masks(away, port, davis)
    assert refl_a.sum() == 0
    assert ring_a.sum() > 0


def test_gt_masks_round_trip_through_pgm(davis, port, tmp_path):
    pose = make_pose(10.0, 200.0, 80.0, (0.0, 0.0, 0.8))
    ring, refl = render_gt_masks(pose, port, davis)
    raster.write_pgm(tmp_path / "ring.pgm", ring.astype(float))
    back = raster.read_pgm(tmp_path / "ring.pgm")
    np.testing.assert_array_equal(back > 0.5, ring)


# ---------------------------------------------------------------------------
# ground-truth CSV


def test_gt_csv_round_trip(tmp_path):
    samples = Trajectory(kind="orbit", duration_s=1.0, rate_hz=5.0, seed=2).sample()
    path = tmp_path / "poses.csv"
    write_gt_csv(path, samples)
    back = read_gt_csv(path)
    assert len(back) == len(samples)
    for (ts_a, pa), (ts_b, pb) in zip(samples, back):
        assert ts_a == ts_b
        np.testing.assert_allclose(pa.position, pb.position, atol=1e-12)
        np.testing.assert_allclose(pa.rotation, pb.rotation, atol=1e-9)


def test_gt_csv_rejects_bad_header_and_rows(tmp_path):
    bad = tmp_path / "poses.csv"
    bad.write_text("time,x,y,z\n0,0,0,1\n")
    with pytest.raises(ValueError):
        read_gt_csv(bad)
    bad.write_text("timestamp_us,tx,ty,tz,qw,qx,qy,qz\n0,0.0,0.0\n")
    with pytest.raises(ValueError):
        read_gt_csv(bad)


# ---------------------------------------------------------------------------
# dataset round trip


def test_generate_and_load_dataset(davis, port, tmp_path):
    traj = Trajectory(kind="approach", duration_s=0.5, rate_hz=8.0, seed=5,
                      start_distance=0.9, end_distance=0.6)
    scene = SceneConfig(noise_sigma=0.02, texture_amplitude=0.08)
    ds = generate_dataset(traj, scene, port, davis, tmp_path / "ds",
                          with_events=True)
    n = traj.frame_count()
    assert len(ds.gt) == n == 4
    for i in range(n):
        assert ds.frame_path(i).exists()
        assert ds.ring_mask_path(i).exists()
        assert ds.reflector_mask_path(i).exists()
    assert ds.poses_path.exists()
    assert ds.events_path.exists()

    manifest = read_kv_file(tmp_path / "ds" / MANIFEST_NAME)
    assert manifest["format"] == DATASET_FORMAT
    assert manifest["frame_count"] == str(n)

    back = load_dataset(tmp_path / "ds")
    assert back.trajectory == traj
    assert back.scene == scene
    # PortModel holds a numpy array field, so compare via its kv encoding
    assert back.model.to_kv() == port.to_kv()
    assert back.K == davis
    assert back.with_events
    assert len(back.gt) == n

    stream = read_events(ds.events_path)
    assert stream.width == davis.width and stream.height == davis.height
    assert stream.events.size > 0


def test_generate_dataset_reproducible(davis, port, tmp_path):
    traj = Trajectory(kind="orbit", duration_s=0.4, rate_hz=10.0, seed=9,
                      start_distance=0.7)
    scene = SceneConfig(noise_sigma=0.03, distractor_edges=2)
    generate_dataset(traj, scene, port, davis, tmp_path / "a", with_events=True)
    generate_dataset(traj, scene, port, davis, tmp_path / "b", with_events=True)
    for rel in ["frames/frame_0000.pgm", "frames/frame_0003.pgm",
                "masks/ring_0001.pgm", "poses.csv", "events.evt", MANIFEST_NAME]:
        a = (tmp_path / "a" / rel).read_bytes()
        b = (tmp_path / "b" / rel).read_bytes()
        assert a == b, rel


def test_load_dataset_errors(davis, port, tmp_path):
    with pytest.raises(ConfigError):
        load_dataset(tmp_path / "nope")

    traj = Trajectory(duration_s=0.25, rate_hz=8.0)
    ds = generate_dataset(traj, SceneConfig(), port, davis, tmp_path / "ds")
    lines = ds.poses_path.read_text().rstrip("\n").split("\n")
    ds.poses_path.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(ConfigError):
        load_dataset(tmp_path / "ds")
