"""Rolling fixed-size log-odds occupancy grid.

The grid window translates with the vehicle by whole cells (it never rotates;
its heading is latched from the first pose). Scan integration traces every
ray through the grid, applying miss updates to traversed cells and a hit
update to the endpoint cell, with all cell values clamped to a configured
log-odds band.

Grid arrays are indexed ``cells[ix, iy]`` with x along axis 0 and y along
axis 1, both increasing with the metric axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
from numba import njit

from .geometry import Point2, Pose2

# Nudge used when a traversed segment meets a cell boundary exactly: the cell
# picked is the one the segment is about to enter, so corner crossings step
# diagonally instead of visiting a zero-length cell.
_EDGE_EPS = 1e-7


@dataclass
class GridConfig:
    """Rolling-grid geometry, sensor-update weights and classification thresholds."""

    r_m: float = 0.1          # meters per cell
    w: int = 600              # cells
    h: int = 600              # cells
    alpha_hit: float = 0.7    # occupancy probability applied on a hit
    alpha_miss: float = 0.4   # occupancy probability applied on a miss
    l_up: float = 5.0         # log-odds clamp bounds
    l_low: float = -2.0
    lam: float = 10.0         # forward offset of the map center, meters
    beta_occ: float = 0.65    # occupied / unknown / free thresholds
    beta_free: float = 0.35

    def validate(self) -> None:
        if not self.r_m > 0:
            raise ValueError("r_m must be > 0")
        if self.w <= 0 or self.h <= 0:
            raise ValueError("w and h must be > 0")
        if not (0.0 < self.alpha_miss < 0.5 < self.alpha_hit < 1.0):
            raise ValueError("alpha_miss < 0.5 < alpha_hit required")
        if not self.l_low < 0.0 < self.l_up:
            raise ValueError("l_low < 0 < l_up required")
        if not (0.0 < self.beta_free < self.beta_occ < 1.0):
            raise ValueError("0 < beta_free < beta_occ < 1 required")


class CellState(IntEnum):
    FREE = 0
    UNKNOWN = 1
    OCCUPIED = 2


def log_odds(p):
    """log(p / (1 - p)). Domain error outside (0, 1)."""
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError("probability must lie strictly inside (0, 1)")
    out = np.log(p / (1.0 - p))
    return float(out) if out.ndim == 0 else out

def prob_of(l):
    """Inverse of log_odds: 1 - 1 / (1 + exp(l)), evaluated overflow-safe."""
    l = np.asarray(l, dtype=float)
    out = np.empty_like(l)
    pos = l >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-l[pos]))
    e = np.exp(l[~pos])
    out[~pos] = e / (1.0 + e)
    return float(out) if out.ndim == 0 else out


def map_center(pose: Pose2, lam: float) -> Point2:
    """Map-center anchor: the vehicle position pushed `lam` meters along its heading."""
    return Point2(pose.x + lam * math.cos(pose.theta),
                  pose.y + lam * math.sin(pose.theta))


@dataclass
class GridMap:
    """Fixed-size log-odds grid with a metric anchor.

    `center` is the metric position of the center cell's midpoint; it moves on
    the r_m lattice as the map recenters. `heading` is fixed at construction.
    """

    cells: np.ndarray
    center: Point2
    heading: float
    r_m: float

    @classmethod
    def create(cls, cfg: GridConfig, center: Point2, heading: float) -> "GridMap":
        cfg.validate()
        return cls(cells=np.zeros((cfg.w, cfg.h)), center=center,
                   heading=heading, r_m=cfg.r_m)

    @property
    def size(self) -> tuple[int, int]:
        return self.cells.shape

    @property
    def origin(self) -> tuple[float, float]:
        """Metric coordinates of the lower-left corner of cell (0, 0)."""
        w, h = self.cells.shape
        return (self.center.x - (w // 2 + 0.5) * self.r_m,
                self.center.y - (h // 2 + 0.5) * self.r_m)

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        ox, oy = self.origin
        return (int(math.floor((x - ox) / self.r_m)),
                int(math.floor((y - oy) / self.r_m)))

    def clone(self) -> "GridMap":
        return GridMap(cells=self.cells.copy(), center=self.center,
                       heading=self.heading, r_m=self.r_m)


def recenter(grid: GridMap, new_center: Point2) -> GridMap:
    """Translate the map window so its center cell contains `new_center`.

    The shift is a whole number of cells; values inside the overlap are moved
    bit-exactly and vacated cells reset to the log-odds prior 0. No-op while
    `new_center` stays within the current center cell. Mutates and returns
    `grid`.
    """
    w, h = grid.cells.shape
    ox, oy = grid.origin
    sx = int(math.floor((new_center.x - ox) / grid.r_m)) - w // 2
    sy = int(math.floor((new_center.y - oy) / grid.r_m)) - h // 2
    if sx == 0 and sy == 0:
        return grid
    fresh = np.zeros_like(grid.cells)
    dx0, dx1 = max(0, -sx), min(w, w - sx)
    dy0, dy1 = max(0, -sy), min(h, h - sy)
    if dx0 < dx1 and dy0 < dy1:
        fresh[dx0:dx1, dy0:dy1] = grid.cells[dx0 + sx:dx1 + sx, dy0 + sy:dy1 + sy]
    grid.cells = fresh
    grid.center = Point2(grid.center.x + sx * grid.r_m, grid.center.y + sy * grid.r_m)
    return grid


def _supercover_batch(p0: np.ndarray, p1: np.ndarray):
    """Cells crossed by each segment, in traversal order.

    p0, p1: (R, 2) segment endpoints in cell units (cell (i, j) spans
    [i, i+1) x [j, j+1)). Returns (cells (M, 2) int64, ray (M,) int64) where
    consecutive rows of one ray follow the segment; every cell the segment
    passes through appears exactly once per ray. Segments meeting a cell
    corner exactly step diagonally.
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    nrays = p0.shape[0]
    if nrays == 0:
        return np.empty((0, 2), dtype=np.int64), np.empty(0, dtype=np.int64)

    # Work in (major, minor) coordinates so |slope| <= 1.
    d = p1 - p0
    swap = np.abs(d[:, 1]) > np.abs(d[:, 0])
    u0 = np.where(swap, p0[:, 1], p0[:, 0])
    v0 = np.where(swap, p0[:, 0], p0[:, 1])
    u1 = np.where(swap, p1[:, 1], p1[:, 0])
    v1 = np.where(swap, p1[:, 0], p1[:, 1])

    du = u1 - u0
    dv = v1 - v0
    step = np.where(du >= 0.0, 1, -1)
    slope = dv / np.where(du == 0.0, 1.0, du)
    bias = np.sign(dv) * _EDGE_EPS

    i0 = np.floor(u0).astype(np.int64)
    i1 = np.floor(u1).astype(np.int64)
    ncols = np.abs(i1 - i0) + 1
    kmax = int(ncols.max())

    cols = i0[:, None] + step[:, None] * np.arange(kmax, dtype=np.int64)[None, :]
    col_ok = np.arange(kmax)[None, :] < ncols[:, None]
    colf = cols.astype(float)

    fwd = (step > 0)[:, None]
    u_en = np.where(fwd, np.maximum(colf, u0[:, None]), np.minimum(colf + 1.0, u0[:, None]))
    u_ex = np.where(fwd, np.minimum(colf + 1.0, u1[:, None]), np.maximum(colf, u1[:, None]))
    v_en = v0[:, None] + (u_en - u0[:, None]) * slope[:, None]
    v_ex = v0[:, None] + (u_ex - u0[:, None]) * slope[:, None]
    j_en = np.floor(v_en + bias[:, None]).astype(np.int64)
    j_ex = np.floor(v_ex - bias[:, None]).astype(np.int64)

    # Two slots per column: the cell entered, plus the neighbor when the
    # segment crosses a minor-axis boundary inside the column.
    cell_u = np.repeat(cols[:, :, None], 2, axis=2)
    cell_v = np.stack((j_en, j_ex), axis=2)
    ok = np.repeat(col_ok[:, :, None], 2, axis=2)
    ok[:, :, 1] &= j_ex != j_en

    ray = np.broadcast_to(np.arange(nrays, dtype=np.int64)[:, None, None], ok.shape)
    flat = ok.reshape(-1)
    cu = cell_u.reshape(-1)[flat]
    cv = cell_v.reshape(-1)[flat]
    rid = ray.reshape(-1)[flat]

    sw = swap[rid]
    ci = np.where(sw, cv, cu)
    cj = np.where(sw, cu, cv)
    return np.stack((ci, cj), axis=1), rid


def raycast_cells(from_cell: tuple[int, int], to_cell: tuple[int, int]) -> list[tuple[int, int]]:
    """8-connected run of cells from from_cell to to_cell inclusive, each once,
    in traversal order: every cell crossed by the segment joining the two cell
    centers. Caller is responsible for both cells being inside the grid.
    """
    p0 = np.array([[from_cell[0] + 0.5, from_cell[1] + 0.5]])
    p1 = np.array([[to_cell[0] + 0.5, to_cell[1] + 0.5]])
    cells, _ = _supercover_batch(p0, p1)
    return [(int(i), int(j)) for i, j in cells]


@njit(cache=True)
def _integrate_rays(delta, p0x, p0y, p1x, p1y, hit_ray, l_hit, l_miss):
    """Walk every ray's supercover cells, accumulating miss updates and the
    endpoint update into the per-frame delta grid.

    Mirrors _supercover_batch's column-walk arithmetic operation for
    operation, so the traversed cell set matches raycast_cells exactly.
    Segments must already be clipped inside the grid.
    """
    for idx in range(p0x.shape[0]):
        ax, ay, bx, by = p0x[idx], p0y[idx], p1x[idx], p1y[idx]
        swap = abs(by - ay) > abs(bx - ax)
        if swap:
            u0, v0, u1, v1 = ay, ax, by, bx
        else:
            u0, v0, u1, v1 = ax, ay, bx, by
        du = u1 - u0
        dv = v1 - v0
        step = 1 if du >= 0.0 else -1
        sl = dv / (1.0 if du == 0.0 else du)
        bias = _EDGE_EPS if dv > 0.0 else (-_EDGE_EPS if dv < 0.0 else 0.0)
        i0 = int(math.floor(u0))
        i1 = int(math.floor(u1))
        ncols = abs(i1 - i0) + 1
        l_end = l_hit if hit_ray[idx] else l_miss
        for k in range(ncols):
            col = i0 + step * k
            colf = float(col)
            if step > 0:
                u_en = colf if colf > u0 else u0
                u_ex = colf + 1.0 if colf + 1.0 < u1 else u1
            else:
                u_en = colf + 1.0 if colf + 1.0 < u0 else u0
                u_ex = colf if colf > u1 else u1
            j_en = int(math.floor(v0 + (u_en - u0) * sl + bias))
            j_ex = int(math.floor(v0 + (u_ex - u0) * sl - bias))
            l_last = l_end if k == ncols - 1 else l_miss
            if swap:
                if j_ex != j_en:
                    delta[j_en, col] += l_miss
                    delta[j_ex, col] += l_last
                else:
                    delta[j_en, col] += l_last
            else:
                if j_ex != j_en:
                    delta[col, j_en] += l_miss
                    delta[col, j_ex] += l_last
                else:
                    delta[col, j_en] += l_last


def integrate_scan(grid: GridMap, scan, pose: Pose2, cfg: GridConfig) -> GridMap:
    """Fuse one obstacle pseudo-scan into the grid.

    Scan endpoints are transformed by `pose` into the map frame. Each ray
    applies a miss update log(alpha_miss / (1 - alpha_miss)) to every traversed
    cell before its endpoint and a hit update log(alpha_hit / (1 - alpha_hit))
    to the endpoint cell; virtual endpoints (empty rays) and rays clipped at
    the window edge apply misses all the way instead of a hit. Per-frame
    updates accumulate additively, then every cell is clamped to
    [l_low, l_up]. Mutates and returns `grid`.
    """
    if not (math.isfinite(pose.x) and math.isfinite(pose.y) and math.isfinite(pose.theta)):
        raise ValueError("non-finite pose")
    w, h = grid.cells.shape
    ox, oy = grid.origin

    ca, sa = math.cos(pose.theta), math.sin(pose.theta)
    sx, sy = scan.xy[:, 0], scan.xy[:, 1]
    ex = (pose.x + sx * ca - sy * sa - ox) / grid.r_m
    ey = (pose.y + sx * sa + sy * ca - oy) / grid.r_m
    x0 = (pose.x - ox) / grid.r_m
    y0 = (pose.y - oy) / grid.r_m
    if not (0.0 < x0 < w and 0.0 < y0 < h):
        raise ValueError("vehicle pose outside the map window; recenter first")

    # Clip each ray to the (slightly inset) window so endpoint cells are valid.
    lo, hi_x, hi_y = 1e-9, w - 1e-9, h - 1e-9
    dx = ex - x0
    dy = ey - y0
    with np.errstate(divide="ignore", invalid="ignore"):
        tx = np.where(dx == 0.0, np.inf, np.maximum((lo - x0) / dx, (hi_x - x0) / dx))
        ty = np.where(dy == 0.0, np.inf, np.maximum((lo - y0) / dy, (hi_y - y0) / dy))
    t_clip = np.minimum(1.0, np.minimum(tx, ty))
    clipped = t_clip < 1.0

    hit_ray = ~(np.asarray(scan.virtual, dtype=bool) | clipped)
    l_hit = math.log(cfg.alpha_hit / (1.0 - cfg.alpha_hit))
    l_miss = math.log(cfg.alpha_miss / (1.0 - cfg.alpha_miss))
    delta = np.zeros_like(grid.cells)
    _integrate_rays(delta, np.full_like(dx, x0), np.full_like(dy, y0),
                    x0 + t_clip * dx, y0 + t_clip * dy, hit_ray, l_hit, l_miss)
    np.add(grid.cells, delta, out=grid.cells)
    np.clip(grid.cells, cfg.l_low, cfg.l_up, out=grid.cells)
    return grid


def classify_cells(grid: GridMap, cfg: GridConfig) -> np.ndarray:
    """Per-cell state: Occupied iff p >= beta_occ, Free iff p < beta_free,
    Unknown between. Returns an int8 array of CellState values.

    Compares in log-odds space (l >= log_odds(beta)), which is the same
    partition since the probability map is strictly monotone."""
    states = np.full(grid.cells.shape, CellState.UNKNOWN, dtype=np.int8)
    states[grid.cells >= log_odds(cfg.beta_occ)] = CellState.OCCUPIED
    states[grid.cells < log_odds(cfg.beta_free)] = CellState.FREE
    return states


def write_pgm(grid: GridMap, cfg: GridConfig, path) -> None:
    """Dump the classified grid as a binary PGM: 0 = occupied, 128 = unknown,
    255 = free. Rows run top-to-bottom in decreasing y."""
    states = classify_cells(grid, cfg)
    lut = np.array([255, 128, 0], dtype=np.uint8)  # FREE, UNKNOWN, OCCUPIED
    img = lut[states.T[::-1]]  # (h, w), top row = max y
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(img.tobytes())
