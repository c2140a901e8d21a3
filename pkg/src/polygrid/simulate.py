"""Deterministic synthetic LiDAR: multi-beam ray casting against parametric
scenes (piecewise-linear ground profile plus axis-aligned boxes), with
ground-truth footprints for end-to-end checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose2
from .vectorize import Polygon


@dataclass
class Scene:
    """World model: ground height h(x) from knots, boxes as (cx, cy, cz,
    ex, ey, ez) rows with full side lengths, and a square validity bound."""

    ground_x: np.ndarray
    ground_h: np.ndarray
    boxes: np.ndarray          # (B, 6)
    bounds: float = 200.0      # |x|, |y| of valid vehicle positions, meters

    @classmethod
    def create(cls, ground: list[tuple[float, float]] | None = None,
               boxes: list[tuple[float, ...]] | None = None,
               bounds: float = 200.0) -> "Scene":
        knots = sorted(ground) if ground else [(0.0, 0.0)]
        gx = np.asarray([k[0] for k in knots], dtype=float)
        gh = np.asarray([k[1] for k in knots], dtype=float)
        bx = np.asarray(boxes if boxes else np.empty((0, 6)), dtype=float).reshape(-1, 6)
        if np.any(bx[:, 3:] <= 0):
            raise ValueError("box extents must be > 0")
        return cls(ground_x=gx, ground_h=gh, boxes=bx, bounds=bounds)

    def height(self, x):
        """Ground height at x; constant beyond the outermost knots."""
        return np.interp(x, self.ground_x, self.ground_h)


@dataclass
class LidarModel:
    """Multi-beam spinning sensor: beam elevations, horizontal resolution,
    range gate and mount height. Noise sigma 0 gives the exact oracle."""

    vertical_angles: np.ndarray = field(
        default_factory=lambda: np.radians(np.linspace(-25.0, 15.0, 40)))
    delta_s: float = 0.2           # degrees
    max_range: float = 60.0
    sensor_height: float = 1.8
    range_noise_sigma: float = 0.0


def _ground_hits(scene: Scene, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Nearest ray-ground intersection parameter per ray (inf when none)."""
    gx, gh = scene.ground_x, scene.ground_h
    # Piece list: flat extensions beyond the knots plus each knot interval.
    xa = np.concatenate(([-np.inf], gx))
    xb = np.concatenate((gx, [np.inf]))
    ha = np.concatenate((gh[:1], gh))
    with np.errstate(divide="ignore", invalid="ignore"):
        sl = np.concatenate(([0.0], np.diff(gh) / np.diff(gx), [0.0])) \
            if len(gx) > 1 else np.zeros(2)
    if len(gx) == 1:
        xa, xb, ha = xa[[0, 1]], xb[[0, 1]], ha[[0, 1]]
    anchor = np.where(np.isfinite(xa), xa, 0.0)

    dx, dz = dirs[:, 0:1], dirs[:, 2:3]
    den = dz - sl[None, :] * dx
    num = ha[None, :] + sl[None, :] * (origin[0] - anchor[None, :]) - origin[2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = num / den
    x_at = origin[0] + t * dx
    ok = (den != 0) & (t > 1e-9) & (x_at >= xa[None, :]) & (x_at <= xb[None, :])
    t = np.where(ok, t, np.inf)
    return t.min(axis=1)


def _box_hits(scene: Scene, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Nearest ray-box intersection parameter per ray (inf when none)."""
    if len(scene.boxes) == 0:
        return np.full(len(dirs), np.inf)
    lo = scene.boxes[:, 0:3] - scene.boxes[:, 3:6] / 2.0
    hi = scene.boxes[:, 0:3] + scene.boxes[:, 3:6] / 2.0
    t_near = np.full((len(dirs), len(scene.boxes)), -np.inf)
    t_far = np.full((len(dirs), len(scene.boxes)), np.inf)
    for ax in range(3):
        d = dirs[:, ax:ax + 1]
        o = origin[ax]
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (lo[None, :, ax] - o) / d
            t2 = (hi[None, :, ax] - o) / d
        both = np.stack((t1, t2))
        tlo = np.nanmin(both, axis=0)
        thi = np.nanmax(both, axis=0)
        flat = (d == 0.0)
        inside = (o >= lo[None, :, ax]) & (o <= hi[None, :, ax])
        tlo = np.where(flat, np.where(inside, -np.inf, np.inf), tlo)
        thi = np.where(flat, np.where(inside, np.inf, -np.inf), thi)
        t_near = np.maximum(t_near, tlo)
        t_far = np.minimum(t_far, thi)
    t = np.where((t_near <= t_far) & (t_near > 1e-9), t_near, np.inf)
    return t.min(axis=1)


def simulate_scan(scene: Scene, pose: Pose2, model: LidarModel,
                  seed: int = 0) -> np.ndarray:
    """One full sweep from the pose: (N, 3) returns in the sensor frame,
    beam-major then horizontal index. Rays that meet nothing inside max_range
    produce no return. Range noise, when enabled, is drawn from the seed."""
    if abs(pose.x) > scene.bounds or abs(pose.y) > scene.bounds:
        raise ValueError("pose outside scene bounds")
    ground_z = float(scene.height(pose.x))
    origin = np.array([pose.x, pose.y, ground_z + model.sensor_height])

    s = int(math.floor(360.0 / model.delta_s + 1e-9))
    az = np.radians(np.arange(s) * model.delta_s) + pose.theta
    elev = np.asarray(model.vertical_angles, dtype=float)
    ce, se = np.cos(elev), np.sin(elev)
    ca, sa = np.cos(az), np.sin(az)
    # beam-major (V, S) ray grid
    dirs = np.stack((np.outer(ce, ca), np.outer(ce, sa),
                     np.broadcast_to(se[:, None], (len(elev), s))),
                    axis=2).reshape(-1, 3)

    t = np.minimum(_ground_hits(scene, origin, dirs),
                   _box_hits(scene, origin, dirs))
    hit = t <= model.max_range
    t = t[hit]
    dirs = dirs[hit]
    if model.range_noise_sigma > 0.0:
        rng = np.random.default_rng(seed)
        t = t + rng.normal(0.0, model.range_noise_sigma, size=len(t))
        keep = (t > 0.0) & (t <= model.max_range)
        t, dirs = t[keep], dirs[keep]
    pw = origin[None, :] + t[:, None] * dirs

    c, sn = math.cos(pose.theta), math.sin(pose.theta)
    vx = pw[:, 0] - pose.x
    vy = pw[:, 1] - pose.y
    return np.stack((c * vx + sn * vy, -sn * vx + c * vy, pw[:, 2] - origin[2]),
                    axis=1)


def footprint_oracle(scene: Scene) -> list[Polygon]:
    """Ground-plane rectangle of every box: the true 2D static-obstacle
    footprints, one CCW polygon each."""
    out = []
    for cx, cy, _, ex, ey, _ in scene.boxes:
        out.append(Polygon.from_points(np.array([
            [cx - ex / 2, cy - ey / 2],
            [cx + ex / 2, cy - ey / 2],
            [cx + ex / 2, cy + ey / 2],
            [cx - ex / 2, cy + ey / 2]])))
    return out


def make_trajectory(kind: str, length: float, step: float, radius: float = 20.0,
                    heading: float = 0.0) -> list[tuple[float, Pose2]]:
    """Evenly spaced poses along a straight line or a left-turning arc with
    headings tangent to the path, timestamped at 10 Hz. `heading` rotates the
    whole path about the origin."""
    if step <= 0:
        raise ValueError("step must be > 0")
    s = np.arange(0.0, length + 1e-9, step)
    if len(s) == 0 or s[-1] < length - 1e-9:
        s = np.append(s, length)
    c, sn = math.cos(heading), math.sin(heading)
    poses = []
    for i, si in enumerate(s):
        if kind == "straight":
            x, y, th = float(si), 0.0, 0.0
        elif kind == "arc":
            phi = si / radius
            x, y, th = radius * math.sin(phi), radius * (1.0 - math.cos(phi)), phi
        else:
            raise ValueError(f"unknown trajectory kind: {kind}")
        poses.append((0.1 * i, Pose2(c * x - sn * y, sn * x + c * y, th + heading)))
    return poses


def read_scene(path) -> Scene:
    """Parse a scene file: `ground x0 h0 x1 h1 ...` and `box cx cy cz ex ey ez`
    lines, `#` comments."""
    ground = None
    boxes = []
    with open(path, "r", encoding="ascii") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                vals = [float(v) for v in parts[1:]]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad number in scene line")
            if parts[0] == "ground":
                if len(vals) < 2 or len(vals) % 2:
                    raise ValueError(f"{path}:{lineno}: ground needs x h pairs")
                ground = list(zip(vals[::2], vals[1::2]))
            elif parts[0] == "box":
                if len(vals) != 6:
                    raise ValueError(f"{path}:{lineno}: box needs 6 values")
                boxes.append(tuple(vals))
            else:
                raise ValueError(f"{path}:{lineno}: unknown scene entry '{parts[0]}'")
    return Scene.create(ground=ground, boxes=boxes)


def write_scene(scene: Scene, path) -> None:
    with open(path, "w", encoding="ascii") as f:
        pairs = " ".join(f"{x!r} {h!r}" for x, h in zip(scene.ground_x, scene.ground_h))
        f.write(f"ground {pairs}\n")
        for row in scene.boxes:
            f.write("box " + " ".join(repr(v) for v in row) + "\n")


def builtin_scene(name: str) -> Scene:
    """Named scene presets used by the CLI and the test suite."""
    if name == "flat":
        return Scene.create()
    if name == "single_box":
        # one 2 m box, 5 m laterally off a straight +x path
        return Scene.create(boxes=[(5.0, 5.0, 1.0, 2.0, 2.0, 2.0)])
    if name == "cluttered":
        boxes = [
            (6.0, 4.0, 1.0, 2.0, 2.0, 2.0),
            (10.0, -5.0, 1.0, 3.0, 1.5, 2.0),
            (14.0, 6.0, 0.75, 1.5, 1.5, 1.5),
            (18.0, -4.0, 1.0, 2.0, 3.0, 2.0),
            (22.0, 5.0, 1.0, 2.5, 2.0, 2.0),
            (8.0, -9.0, 1.25, 2.0, 2.0, 2.5),
            (16.0, 9.0, 1.0, 3.0, 2.0, 2.0),
            (24.0, -7.0, 1.0, 1.5, 2.5, 2.0),
        ]
        return Scene.create(boxes=boxes)
    if name == "uphill":
        return Scene.create(ground=[(-50.0, 0.0), (5.0, 0.0), (25.0, 2.0), (120.0, 2.0)],
                            boxes=[(15.0, 5.0, 2.0, 2.0, 2.0, 2.0)])
    if name == "downhill":
        return Scene.create(ground=[(-50.0, 0.0), (5.0, 0.0), (25.0, -2.0), (120.0, -2.0)],
                            boxes=[(15.0, -5.0, -0.0, 2.0, 2.0, 2.0)])
    raise ValueError(f"unknown scene '{name}'")
