"""Command line entry points: `run` processes recorded frames into polygon
JSONL + metrics CSV; `sim` generates synthetic cloud/pose recordings."""

from __future__ import annotations

import argparse
import logging
import statistics
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config
from .frameio import (read_frame_stream, write_cloud_bin, write_cloud_txt,
                      write_outputs, write_poses)
from .gridmap import write_pgm
from .pipeline import FrameRejected, Pipeline, PipelineConfig
from .simulate import LidarModel, builtin_scene, make_trajectory, read_scene, simulate_scan

log = logging.getLogger("polygrid")


def _cmd_run(args) -> int:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    cfg.validate()
    pipeline = Pipeline(cfg)
    dump_dir = Path(args.grid_dump) if args.grid_dump else None
    if dump_dir:
        dump_dir.mkdir(parents=True, exist_ok=True)
    rejected = 0
    t_totals = []

    def results():
        nonlocal rejected
        for frame in read_frame_stream(args.frames, args.poses):
            try:
                out = pipeline.process_frame(frame)
            except FrameRejected as e:
                rejected += 1
                log.warning("rejected frame t=%s: %s", frame.timestamp, e)
                continue
            t_totals.append(out.metrics.t_total_ms)
            if dump_dir and pipeline.frame_index % args.grid_dump_every == 0:
                write_pgm(pipeline.grid, cfg.grid,
                          dump_dir / f"grid_{pipeline.frame_index:06d}.pgm")
            yield out

    n = write_outputs(results(), args.out, args.metrics)
    med = statistics.median(t_totals) if t_totals else float("nan")
    print(f"processed {n} frames ({rejected} rejected), "
          f"median frame time {med:.2f} ms")
    print(f"polygons: {args.out}\nmetrics:  {args.metrics}")
    return 0


def _cmd_sim(args) -> int:
    scene_path = Path(args.scene)
    scene = read_scene(scene_path) if scene_path.is_file() else builtin_scene(args.scene)
    model = LidarModel(
        vertical_angles=np.radians(np.linspace(args.beam_low, args.beam_high, args.beams)),
        delta_s=args.delta_s,
        max_range=args.max_range,
        sensor_height=args.sensor_height,
        range_noise_sigma=args.noise_sigma)
    frames_dir = Path(args.out_frames)
    frames_dir.mkdir(parents=True, exist_ok=True)
    poses = make_trajectory(args.trajectory, args.length, args.step, radius=args.radius)
    for i, (t, pose) in enumerate(poses):
        cloud = simulate_scan(scene, pose, model, seed=args.seed + i)
        name = f"{t:.6f}.{args.format}"
        if args.format == "bin":
            write_cloud_bin(frames_dir / name, cloud)
        else:
            write_cloud_txt(frames_dir / name, cloud, intensity=0.0)
    write_poses(args.out_poses, poses)
    print(f"wrote {len(poses)} frames to {frames_dir} and poses to {args.out_poses}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polygrid",
        description="LiDAR streams -> rolling occupancy grid -> convex polygons")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="process recorded cloud/pose frames")
    run.add_argument("--config", help="flat key=value config file (defaults if omitted)")
    run.add_argument("--frames", required=True, help="directory of <timestamp>.txt/.bin clouds")
    run.add_argument("--poses", required=True, help="pose file: 'timestamp x y theta' lines")
    run.add_argument("--out", required=True, help="output polygons JSONL")
    run.add_argument("--metrics", required=True, help="output metrics CSV")
    run.add_argument("--grid-dump", help="directory for periodic PGM grid snapshots")
    run.add_argument("--grid-dump-every", type=int, default=10,
                     help="dump every N frames (default 10)")
    run.set_defaults(func=_cmd_run)

    sim = sub.add_parser("sim", help="generate a synthetic recording")
    sim.add_argument("--scene", required=True,
                     help="builtin scene name (flat, single_box, cluttered, uphill, "
                          "downhill) or scene file path")
    sim.add_argument("--out-frames", required=True)
    sim.add_argument("--out-poses", required=True)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--trajectory", choices=("straight", "arc"), default="straight")
    sim.add_argument("--length", type=float, default=10.0, help="path length, meters")
    sim.add_argument("--step", type=float, default=0.5, help="pose spacing, meters")
    sim.add_argument("--radius", type=float, default=20.0, help="arc radius, meters")
    sim.add_argument("--format", choices=("bin", "txt"), default="bin")
    sim.add_argument("--noise-sigma", type=float, default=0.0)
    sim.add_argument("--delta-s", type=float, default=0.2)
    sim.add_argument("--beams", type=int, default=40)
    sim.add_argument("--beam-low", type=float, default=-25.0, help="degrees")
    sim.add_argument("--beam-high", type=float, default=15.0, help="degrees")
    sim.add_argument("--max-range", type=float, default=60.0)
    sim.add_argument("--sensor-height", type=float, default=1.8)
    sim.set_defaults(func=_cmd_sim)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
