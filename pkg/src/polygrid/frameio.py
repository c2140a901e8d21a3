"""Cloud, pose and result file formats, and the frame stream pairing clouds
with nearest-timestamp poses."""

from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .geometry import Pose2
from .pipeline import FrameInput, FrameOutput

log = logging.getLogger(__name__)

POSE_GATE_S = 0.05  # max cloud-to-pose timestamp gap before a frame drops

METRICS_HEADER = ("frame,timestamp,occupied_cells,boundary_vertices,"
                  "polygon_vertices,polygon_count,t_grid_ms,t_vec_ms,t_total_ms")


def read_cloud_txt(path) -> np.ndarray:
    """Whitespace-separated `x y z [intensity]` lines -> (N, 3) array."""
    pts = []
    with open(path, "r", encoding="ascii") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) not in (3, 4):
                raise ValueError(f"{path}:{lineno}: expected 3 or 4 columns")
            pts.append((float(parts[0]), float(parts[1]), float(parts[2])))
    return np.asarray(pts, dtype=float).reshape(-1, 3)


def write_cloud_txt(path, cloud: np.ndarray, intensity: float | None = None) -> None:
    cloud = np.asarray(cloud, dtype=float).reshape(-1, 3)
    with open(path, "w", encoding="ascii") as f:
        for x, y, z in cloud:
            if intensity is None:
                f.write(f"{x!r} {y!r} {z!r}\n")
            else:
                f.write(f"{x!r} {y!r} {z!r} {intensity!r}\n")


def read_cloud_bin(path) -> np.ndarray:
    """Little-endian float32 `x y z intensity` quadruples -> (N, 3) array."""
    raw = np.fromfile(path, dtype="<f4")
    if len(raw) % 4:
        raise ValueError(f"{path}: truncated binary cloud (length {len(raw)})")
    return raw.reshape(-1, 4)[:, :3].astype(float)


def write_cloud_bin(path, cloud: np.ndarray, intensity: float = 0.0) -> None:
    cloud = np.asarray(cloud, dtype=float).reshape(-1, 3)
    quad = np.empty((len(cloud), 4), dtype="<f4")
    quad[:, :3] = cloud
    quad[:, 3] = intensity
    quad.tofile(path)


def read_poses(path) -> list[tuple[float, Pose2]]:
    """`timestamp x y theta` lines (seconds, meters, radians, world frame)."""
    out = []
    with open(path, "r", encoding="ascii") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 'timestamp x y theta'")
            t, x, y, th = (float(v) for v in parts)
            out.append((t, Pose2(x, y, th)))
    out.sort(key=lambda p: p[0])
    return out


def write_poses(path, poses: Iterable[tuple[float, Pose2]]) -> None:
    with open(path, "w", encoding="ascii") as f:
        for t, p in poses:
            f.write(f"{t!r} {p.x!r} {p.y!r} {p.theta!r}\n")


def _cloud_files(frames_dir) -> list[tuple[float, Path]]:
    files = []
    for entry in Path(frames_dir).iterdir():
        if entry.suffix not in (".txt", ".bin"):
            continue
        try:
            t = float(entry.stem)
        except ValueError:
            log.warning("ignoring cloud file with non-timestamp name: %s", entry)
            continue
        files.append((t, entry))
    files.sort(key=lambda f: f[0])
    return files


def read_frame_stream(frames_path, poses_path) -> Iterator[FrameInput]:
    """Pair each cloud file with the nearest-timestamp pose.

    Clouds with no pose within POSE_GATE_S are dropped with a warning; if no
    cloud at all pairs with a pose, the stream raises instead."""
    files = _cloud_files(frames_path)
    poses = read_poses(poses_path)
    if files and not poses:
        raise ValueError(f"no poses found in {poses_path}")
    times = np.asarray([t for t, _ in poses])
    matched = 0
    for t, path in files:
        i = int(np.searchsorted(times, t))
        best, gap = None, np.inf
        for j in (i - 1, i):
            if 0 <= j < len(times) and abs(times[j] - t) < gap:
                best, gap = j, abs(times[j] - t)
        if best is None or gap > POSE_GATE_S:
            log.warning("dropping cloud at t=%s: nearest pose is %.3fs away",
                        t, gap if best is not None else np.inf)
            continue
        cloud = read_cloud_bin(path) if path.suffix == ".bin" else read_cloud_txt(path)
        matched += 1
        yield FrameInput(timestamp=t, cloud=cloud, pose=poses[best][1])
    if files and matched == 0:
        raise ValueError("no overlapping timestamps between clouds and poses")


def polygons_json_line(out: FrameOutput, frame: int) -> str:
    return json.dumps({
        "t": out.timestamp,
        "polygons": [[[float(x), float(y)] for x, y in p.points]
                     for p in out.polygons],
        "frame": frame,
    })


def metrics_csv_row(out: FrameOutput, frame: int) -> str:
    m = out.metrics
    return (f"{frame},{out.timestamp!r},{m.occupied_cells},{m.boundary_vertices},"
            f"{m.polygon_vertices},{m.polygon_count},"
            f"{m.t_grid_ms:.3f},{m.t_vec_ms:.3f},{m.t_total_ms:.3f}")


def write_outputs(outputs: Iterable[FrameOutput], out_path, metrics_path) -> int:
    """Stream frame outputs to a polygons JSONL file and a metrics CSV.

    On failure mid-stream a `<path>.partial` marker is left beside each
    output before the error propagates. Returns the frame count."""
    frame = 0
    try:
        with open(out_path, "w", encoding="ascii") as fj, \
                open(metrics_path, "w", encoding="ascii") as fm:
            fm.write(METRICS_HEADER + "\n")
            for out in outputs:
                fj.write(polygons_json_line(out, frame) + "\n")
                fm.write(metrics_csv_row(out, frame) + "\n")
                frame += 1
    except BaseException:
        for p in (out_path, metrics_path):
            try:
                with open(os.fspath(p) + ".partial", "w") as f:
                    f.write("incomplete output: writer aborted\n")
            except OSError:
                pass
        raise
    return frame
