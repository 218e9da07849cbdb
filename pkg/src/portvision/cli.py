"""Operator commands: simulate, estimate, eval, sensitivity.

Exit codes: 0 success, 2 configuration or usage problem, 3 I/O failure,
4 internal invariant violation.  Every command writes a run manifest
recording the resolved parameters, seeds, and toolkit version; re-running
from the same inputs reproduces the outputs bit for bit (wall-clock fields
excepted).
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from . import __version__
from . import config as config_mod
from . import events as events_mod
from . import filters as filters_mod
from . import pose as pose_mod
from . import raster
from . import report as report_mod
from . import synth as synth_mod
from .evaluate import match_results, sensitivity_bound
from .geometry import CameraIntrinsics, PortModel

_CAMERA_KEYS = ("fx", "fy", "cx", "cy", "width", "height")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.code
    except config_mod.ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return 3
    except Exception as err:  # invariant violations: fail loudly, code 4
        print(f"internal error: {type(err).__name__}: {err}", file=sys.stderr)
        return 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="portvision",
        description="Docking-port detection and pose estimation toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(required=True, metavar="command")

    sim = sub.add_parser("simulate", help="render a synthetic dataset")
    sim.add_argument("--config", type=Path, help="key-value scene/trajectory config")
    sim.add_argument("--out", type=Path, required=True, help="dataset directory")
    sim.add_argument("--seed", type=int, help="override the trajectory seed")
    sim.add_argument("--with-events", action="store_true", help="also write an event stream")
    sim.set_defaults(func=cmd_simulate)

    est = sub.add_parser("estimate", help="run the pose pipeline over a dataset")
    est.add_argument("--dataset", type=Path, required=True)
    est.add_argument("--config", type=Path, help="pipeline parameter file")
    est.add_argument("--out", type=Path, required=True, help="output poses CSV")
    est.add_argument(
        "--filter", choices=("classical", "cnn", "gt"), default="classical",
        help="pixel filter: heuristic, CNN weights, or ground-truth-mask bypass",
    )
    est.add_argument("--weights", type=Path, help="ring filter weights (PORTCNN1)")
    est.add_argument(
        "--reflector-weights", type=Path, help="reflector filter weights (PORTCNN1)"
    )
    est.add_argument("--modality", choices=("rgb", "event"), default="rgb")
    est.add_argument(
        "--events", type=int, default=None,
        help="events per histogram window (default 35000)",
    )
    est.add_argument("--gamma-s", type=int, help="skeleton pixel gate")
    est.add_argument("--seed", type=int, help="override the RANSAC seed")
    est.add_argument("--jobs", type=int, default=1, help="parallel frame workers")
    est.add_argument(
        "--emit-overlays", type=Path, metavar="DIR",
        help="write per-frame overlay images to DIR",
    )
    est.set_defaults(func=cmd_estimate)

    ev = sub.add_parser("eval", help="score estimated poses against ground truth")
    ev.add_argument("--estimates", type=Path, required=True, help="estimated poses CSV")
    ev.add_argument("--dataset", type=Path, help="dataset directory with ground truth")
    ev.add_argument("--gt", type=Path, help="ground-truth poses CSV (with --camera)")
    ev.add_argument("--camera", type=Path, help="camera intrinsics file (with --gt)")
    ev.add_argument("--symmetry-order", type=int, default=3)
    ev.add_argument("--out-dir", type=Path, required=True, help="report directory")
    ev.set_defaults(func=cmd_eval)

    sen = sub.add_parser(
        "sensitivity", help="orientation ambiguity bound per distance and inclination"
    )
    sen.add_argument("--camera", type=Path, help="camera intrinsics file")
    sen.add_argument("--nu", type=float, default=0.1, help="ring radius [m]")
    sen.add_argument("--distances", default="0.3,0.6,1.2", help="comma list [m]")
    sen.add_argument("--inclinations", default="0,15,30,45,60", help="comma list [deg]")
    sen.add_argument("--pixel-noise", type=float, default=1.0)
    sen.add_argument("--out", type=Path, help="also write the table as CSV")
    sen.set_defaults(func=cmd_sensitivity)
    return parser


def _write_run_manifest(path, command: str, params: dict, started: float) -> None:
    kv = {
        "command": command,
        "toolkit_version": __version__,
        "wall_clock_s": f"{time.time() - started:.3f}",
    }
    for key, value in params.items():
        kv[key] = value
    config_mod.write_kv_file(path, kv)


# ---------------------------------------------------------------------------
# simulate

def _sub_kv(kv: dict, prefix: str) -> dict:
    plen = len(prefix) + 1
    return {k[plen:]: v for k, v in kv.items() if k.startswith(prefix + ".")}


def _simulate_configs(kv: dict):
    allowed = {"with_events", "event_contrast", "event_noise_rate"}
    allowed |= {f"camera.{k}" for k in _CAMERA_KEYS}
    allowed |= {f"scene.{k}" for k in synth_mod.SceneConfig().to_kv()}
    allowed |= {f"trajectory.{k}" for k in synth_mod.Trajectory().to_kv()}
    allowed |= {"port.ring_radius", "port.symmetry_order", "port.reflector_count"}
    count = config_mod.get_int(kv, "port.reflector_count", 3)
    allowed |= {f"port.reflector_{i}" for i in range(count)}
    config_mod.require_keys(kv, allowed, where="simulate config")

    cam_sub = _sub_kv(kv, "camera")
    K = CameraIntrinsics.from_kv(cam_sub) if cam_sub else CameraIntrinsics.davis_default()
    port_sub = _sub_kv(kv, "port")
    if "reflector_count" in port_sub:
        model = PortModel.from_kv(port_sub)
    elif port_sub:
        model = PortModel(
            ring_radius=config_mod.get_float(port_sub, "ring_radius", 0.1),
            symmetry_order=config_mod.get_int(port_sub, "symmetry_order", 3),
        )
    else:
        model = PortModel()
    scene = synth_mod.SceneConfig.from_kv(_sub_kv(kv, "scene"))
    trajectory = synth_mod.Trajectory.from_kv(_sub_kv(kv, "trajectory"))
    return K, model, scene, trajectory


def cmd_simulate(args) -> int:
    started = time.time()
    kv = config_mod.read_kv_file(args.config) if args.config else {}
    K, model, scene, trajectory = _simulate_configs(kv)
    if args.seed is not None:
        trajectory = dataclasses.replace(trajectory, seed=args.seed)
    with_events = args.with_events or bool(config_mod.get_int(kv, "with_events", 0))
    dataset = synth_mod.generate_dataset(
        trajectory,
        scene,
        model,
        K,
        args.out,
        with_events=with_events,
        event_contrast=config_mod.get_float(kv, "event_contrast", 0.2),
        event_noise_rate=config_mod.get_float(kv, "event_noise_rate", 0.0),
    )
    _write_run_manifest(
        Path(args.out) / "run_manifest.kv",
        "simulate",
        {
            "config_path": str(args.config) if args.config else "",
            "out_dir": str(args.out),
            "seed": trajectory.seed,
            "with_events": int(with_events),
        },
        started,
    )
    print(f"wrote {len(dataset.gt)} frames to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# estimate

_WORKER: dict = {}


def _init_worker(cfg, model, K, filter_kind, ring_weights, refl_weights) -> None:
    _WORKER.update(
        cfg=cfg, model=model, K=K, filter_kind=filter_kind,
        ring_weights=ring_weights, refl_weights=refl_weights,
    )


def _estimate_task(task) -> Tuple[int, pose_mod.PoseResult]:
    idx, frame, ring_mask, refl_mask = task
    kind = _WORKER["filter_kind"]
    if kind == "classical":
        def ring_filter(f):
            return filters_mod.classical_filter(f, filters_mod.TARGET_RING)

        def refl_filter(f):
            return filters_mod.classical_filter(f, filters_mod.TARGET_REFLECTOR)

    elif kind == "cnn":
        def ring_filter(f):
            return filters_mod.run_cnn(_WORKER["ring_weights"], f)

        def refl_filter(f):
            return filters_mod.run_cnn(_WORKER["refl_weights"], f)

    else:  # gt bypass
        def ring_filter(_f):
            return ring_mask

        def refl_filter(_f):
            return refl_mask

    result = pose_mod.estimate_pose(
        frame, _WORKER["cfg"], _WORKER["model"], _WORKER["K"], ring_filter, refl_filter
    )
    return idx, result


def _load_pipeline_config(args) -> pose_mod.PipelineConfig:
    kv = config_mod.read_kv_file(args.config) if args.config else {}
    config_mod.require_keys(
        kv, pose_mod.PipelineConfig().to_kv().keys(), where="pipeline config"
    )
    cfg = pose_mod.PipelineConfig.from_kv(kv)
    updates = {}
    if args.events is not None:
        updates["histogram_events"] = args.events
    if args.gamma_s is not None:
        updates["gamma_s"] = args.gamma_s
    if args.seed is not None:
        updates["ransac"] = dataclasses.replace(cfg.ransac, rng_seed=args.seed)
    return dataclasses.replace(cfg, **updates) if updates else cfg


def _estimate_inputs(args, dataset, cfg) -> List[Tuple[int, np.ndarray]]:
    """(timestamp_us, frame) pairs for the selected modality."""
    if args.modality == "rgb":
        out = []
        for i, (ts, _) in enumerate(dataset.gt):
            out.append((ts, raster.read_pgm(dataset.frame_path(i))))
        return out
    if not dataset.events_path.exists():
        raise CliError(2, f"dataset {dataset.root} has no event stream")
    stream = events_mod.read_events(dataset.events_path)
    hists = events_mod.build_histograms(stream, cfg.histogram_events)
    return [
        (h.t_end, events_mod.histogram_to_frame(h, cfg.clamp_cmax)) for h in hists
    ]


def cmd_estimate(args) -> int:
    started = time.time()
    dataset = synth_mod.load_dataset(args.dataset)
    cfg = _load_pipeline_config(args)
    ring_weights = refl_weights = None
    if args.filter == "cnn":
        if not args.weights or not args.reflector_weights:
            raise CliError(2, "cnn filter needs --weights and --reflector-weights")
        ring_weights = filters_mod.load_weights(args.weights)
        refl_weights = filters_mod.load_weights(args.reflector_weights)
        if ring_weights.target != filters_mod.TARGET_RING:
            raise CliError(2, f"{args.weights}: not a ring-target weight file")
        if refl_weights.target != filters_mod.TARGET_REFLECTOR:
            raise CliError(2, f"{args.reflector_weights}: not a reflector-target weight file")
        expected_modality = (
            filters_mod.MODALITY_EVENT if args.modality == "event" else filters_mod.MODALITY_RGB
        )
        for path, w in ((args.weights, ring_weights), (args.reflector_weights, refl_weights)):
            if w.modality != expected_modality:
                raise CliError(2, f"{path}: weights trained for a different modality")
    if args.filter == "gt" and args.modality != "rgb":
        raise CliError(2, "ground-truth-mask bypass requires rgb modality")

    inputs = _estimate_inputs(args, dataset, cfg)
    tasks = []
    for i, (_, frame) in enumerate(inputs):
        ring_mask = refl_mask = None
        if args.filter == "gt":
            ring_mask = raster.read_pgm(dataset.ring_mask_path(i))
            refl_mask = raster.read_pgm(dataset.reflector_mask_path(i))
        tasks.append((i, frame, ring_mask, refl_mask))

    t0 = time.perf_counter()
    results: List[Optional[pose_mod.PoseResult]] = [None] * len(tasks)
    _init_worker(cfg, dataset.model, dataset.K, args.filter, ring_weights, refl_weights)
    if args.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(
            max_workers=args.jobs,
            initializer=_init_worker,
            initargs=(cfg, dataset.model, dataset.K, args.filter, ring_weights, refl_weights),
        ) as pool:
            for idx, res in pool.map(_estimate_task, tasks, chunksize=4):
                results[idx] = res
    else:
        for task in tasks:
            idx, res = _estimate_task(task)
            results[idx] = res
    elapsed = time.perf_counter() - t0

    temporal = pose_mod.TemporalFilter()
    rows: List[pose_mod.ResultRow] = []
    for (ts, _), res in zip(inputs, results):
        if res.status == "estimated":
            verdict = temporal.update(res.pose, ts)
            rows.append(
                pose_mod.ResultRow(
                    timestamp_us=ts, status=verdict, pose=res.pose, score=res.score
                )
            )
        else:
            rows.append(
                pose_mod.ResultRow(
                    timestamp_us=ts, status="abort", pose=None, abort_reason=res.reason
                )
            )
    pose_mod.write_results_csv(args.out, rows)

    if args.emit_overlays:
        overlay_dir = Path(args.emit_overlays)
        overlay_dir.mkdir(parents=True, exist_ok=True)
        for (ts, frame), res in zip(inputs, results):
            mask = None
            if res.pose is not None:
                mask = pose_mod.render_reflector_mask(
                    dataset.model, res.pose.rotation, res.pose.position, dataset.K
                )
            title = res.status if res.status == "estimated" else f"abort: {res.reason}"
            report_mod.draw_overlay(
                frame,
                overlay_dir / f"overlay_{ts:012d}.png",
                ellipse=res.ellipse,
                reflector_mask=mask,
                title=f"t={ts} us  {title}",
            )

    fps = len(tasks) / elapsed if elapsed > 0 else float("inf")
    _write_run_manifest(
        Path(args.out).with_suffix(".manifest.kv"),
        "estimate",
        {
            "dataset": str(args.dataset),
            "out_csv": str(args.out),
            "filter": args.filter,
            "modality": args.modality,
            "jobs": args.jobs,
            "frames": len(tasks),
            "frames_per_s": f"{fps:.3f}",
            **{f"pipeline.{k}": v for k, v in cfg.to_kv().items()},
        },
        started,
    )
    estimated = sum(1 for r in results if r is not None and r.status == "estimated")
    print(f"{len(tasks)} frames, {estimated} estimated, {fps:.2f} frames/s")
    return 0


# ---------------------------------------------------------------------------
# eval

def cmd_eval(args) -> int:
    started = time.time()
    rows = pose_mod.read_results_csv(args.estimates)
    if args.dataset:
        dataset = synth_mod.load_dataset(args.dataset)
        gt, K = dataset.gt, dataset.K
        symmetry = dataset.model.symmetry_order
    elif args.gt and args.camera:
        gt = synth_mod.read_gt_csv(args.gt)
        K = CameraIntrinsics.from_file(args.camera)
        symmetry = args.symmetry_order
    else:
        raise CliError(2, "eval needs --dataset, or --gt together with --camera")
    try:
        unfiltered = match_results(gt, rows, K)
        filtered = match_results(gt, rows, K, statuses=("accepted",))
    except ValueError as err:
        raise CliError(2, str(err))
    reports = report_mod.render_report(
        args.out_dir, {"unfiltered": unfiltered, "filtered": filtered}, symmetry
    )
    _write_run_manifest(
        Path(args.out_dir) / "run_manifest.kv",
        "eval",
        {
            "estimates": str(args.estimates),
            "ground_truth": str(args.dataset or args.gt),
            "symmetry_order": symmetry,
        },
        started,
    )
    print(report_mod.format_report_table(reports))
    return 0


# ---------------------------------------------------------------------------
# sensitivity

def _parse_float_list(text: str, flag: str) -> List[float]:
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise CliError(2, f"{flag}: expected a comma-separated number list")
    if not values:
        raise CliError(2, f"{flag}: empty list")
    return values


def cmd_sensitivity(args) -> int:
    started = time.time()
    K = CameraIntrinsics.from_file(args.camera) if args.camera else CameraIntrinsics.davis_default()
    distances = _parse_float_list(args.distances, "--distances")
    inclinations = _parse_float_list(args.inclinations, "--inclinations")
    header = ["inclination_deg"] + [f"bound_deg_at_{d}m" for d in distances]
    lines = [",".join(header)]
    width = 18
    print("inclination [deg]".ljust(width) + "".join(f"d={d} m".rjust(width) for d in distances))
    for incl in inclinations:
        bounds = [
            sensitivity_bound(K, args.nu, d, incl, pixel_noise=args.pixel_noise)
            for d in distances
        ]
        print(f"{incl:.1f}".ljust(width) + "".join(f"{b:.3f}".rjust(width) for b in bounds))
        lines.append(",".join([repr(incl)] + [repr(b) for b in bounds]))
    if args.out:
        with open(args.out, "w", encoding="ascii") as fh:
            fh.write("\n".join(lines) + "\n")
        _write_run_manifest(
            Path(args.out).with_suffix(".manifest.kv"),
            "sensitivity",
            {
                "nu": repr(args.nu),
                "pixel_noise": repr(args.pixel_noise),
                "distances": args.distances,
                "inclinations": args.inclinations,
                "out_csv": str(args.out),
            },
            started,
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
