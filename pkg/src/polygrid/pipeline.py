"""Per-frame orchestration: cloud + pose -> updated rolling grid -> convex
polygons, with stage timing and output metrics."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .geometry import Point2, Pose2
from .gridmap import GridConfig, GridMap, integrate_scan, map_center, recenter
from .ground import (FanGridConfig, build_fan_grid, extract_obstacle_points,
                     fit_ground_lines, project_to_scan)
from .vectorize import (DecompositionError, Polygon, VectorizationConfig,
                        binarize_submap, decompose, is_simple, morph_close,
                        polygon_area, simplify, trace_boundaries)

log = logging.getLogger(__name__)


class FrameRejected(ValueError):
    """Raised for malformed frames; pipeline state is left untouched."""


@dataclass
class PipelineConfig:
    fan: FanGridConfig = field(default_factory=FanGridConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    vec: VectorizationConfig = field(default_factory=VectorizationConfig)

    def validate(self) -> None:
        self.fan.validate()
        self.grid.validate()
        self.vec.validate()
        if self.vec.submap_w > self.grid.w or self.vec.submap_h > self.grid.h:
            raise ValueError("submap_w/submap_h must fit inside the grid (w, h)")


@dataclass
class FrameInput:
    timestamp: float
    cloud: np.ndarray  # (N, 3) sensor frame
    pose: Pose2        # world frame


@dataclass
class RunMetrics:
    occupied_cells: int
    boundary_vertices: int
    polygon_vertices: int
    polygon_count: int
    t_grid_ms: float
    t_vec_ms: float
    t_total_ms: float


@dataclass
class FrameOutput:
    timestamp: float
    polygons: list[Polygon]  # map frame, all convex
    metrics: RunMetrics


class Pipeline:
    """Stateful frame processor.

    The map frame is the world frame rotated so its x axis matches the first
    accepted pose's heading; the grid heading is latched there and never
    changes. Output polygons are expressed in the map frame.
    """

    def __init__(self, cfg: PipelineConfig):
        cfg.validate()
        self.cfg = cfg
        self.grid: GridMap | None = None
        self.theta0: float | None = None
        self.frame_index = 0
        self.last_timestamp: float | None = None

    def clone(self) -> "Pipeline":
        other = Pipeline(self.cfg)
        other.grid = self.grid.clone() if self.grid is not None else None
        other.theta0 = self.theta0
        other.frame_index = self.frame_index
        other.last_timestamp = self.last_timestamp
        return other

    def _to_map_frame(self, pose: Pose2) -> Pose2:
        c, s = math.cos(-self.theta0), math.sin(-self.theta0)
        return Pose2(c * pose.x - s * pose.y, s * pose.x + c * pose.y,
                     pose.theta - self.theta0)

    def process_frame(self, frame: FrameInput) -> FrameOutput:
        """Run one frame through ground segmentation, grid update and
        vectorization. Raises FrameRejected (state untouched) on malformed
        input or non-increasing timestamps."""
        t0 = time.perf_counter()
        cloud = np.asarray(frame.cloud, dtype=float)
        if cloud.ndim != 2 or (len(cloud) and cloud.shape[1] != 3):
            raise FrameRejected(f"cloud must be (N, 3), got {cloud.shape}")
        if not np.isfinite(cloud).all():
            raise FrameRejected("cloud contains non-finite points")
        pose = frame.pose
        if not (math.isfinite(pose.x) and math.isfinite(pose.y)
                and math.isfinite(pose.theta)):
            raise FrameRejected("non-finite pose")
        if self.last_timestamp is not None and frame.timestamp <= self.last_timestamp:
            raise FrameRejected(
                f"non-increasing timestamp {frame.timestamp} after {self.last_timestamp}")

        if self.theta0 is None:
            self.theta0 = pose.theta
        pose_m = self._to_map_frame(pose)

        t_grid0 = time.perf_counter()
        fan = build_fan_grid(cloud, self.cfg.fan)
        model = fit_ground_lines(fan, self.cfg.fan)
        obstacles, _ = extract_obstacle_points(cloud, model, self.cfg.fan)
        scan = project_to_scan(obstacles, self.cfg.fan)

        center = map_center(pose_m, self.cfg.grid.lam)
        if self.grid is None:
            self.grid = GridMap.create(self.cfg.grid, center, self.theta0)
        recenter(self.grid, center)
        integrate_scan(self.grid, scan, pose_m, self.cfg.grid)
        t_grid = time.perf_counter() - t_grid0

        t_vec0 = time.perf_counter()
        img = binarize_submap(self.grid, self.cfg.grid, self.cfg.vec)
        occupied = int(img.bits.sum())
        closed = morph_close(img, self.cfg.vec.morph_kernel)
        boundaries = trace_boundaries(closed)
        boundary_vertices = sum(len(b) for b in boundaries)
        min_area = self.grid.r_m * self.grid.r_m
        polygons: list[Polygon] = []
        for boundary in boundaries:
            poly = simplify(boundary, self.cfg.vec)
            pts = poly.points
            if len(pts) < 3:
                continue
            if polygon_area(pts) < 0:
                poly = Polygon.from_points(pts[::-1])
                pts = poly.points
            if poly.is_convex:
                # Includes flat boundaries traced around thin structures: no
                # reflex vertices, emitted as-is.
                polygons.append(poly)
            elif is_simple(pts):
                try:
                    polygons.extend(decompose(poly, min_area=min_area))
                except DecompositionError:
                    log.warning("frame %d: dropping undecomposable boundary",
                                self.frame_index)
            else:
                log.debug("frame %d: dropping pinched non-simple boundary",
                          self.frame_index)
        t_vec = time.perf_counter() - t_vec0

        t_total = time.perf_counter() - t0
        metrics = RunMetrics(
            occupied_cells=occupied,
            boundary_vertices=boundary_vertices,
            polygon_vertices=sum(len(p) for p in polygons),
            polygon_count=len(polygons),
            t_grid_ms=t_grid * 1e3,
            t_vec_ms=t_vec * 1e3,
            t_total_ms=t_total * 1e3)
        self.frame_index += 1
        self.last_timestamp = frame.timestamp
        return FrameOutput(timestamp=frame.timestamp, polygons=polygons,
                           metrics=metrics)


def process_frame(frame: FrameInput, state: Pipeline,
                  cfg: PipelineConfig | None = None) -> FrameOutput:
    """Functional entry point over a Pipeline state."""
    if cfg is not None and cfg is not state.cfg:
        raise ValueError("cfg must match the pipeline state's config")
    return state.process_frame(frame)
