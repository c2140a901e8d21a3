"""Ground segmentation: 3D cloud -> fixed-size 2D obstacle pseudo-scan.

The cloud is binned into a polar fan grid (angular segments x radial bins),
the lowest point per bin seeds piecewise ground-line fitting per segment,
every point is classified by its clearance above the fitted line, clearance
pass-through filtering removes ground and overhead returns, and the surviving
obstacle points collapse to one nearest point per horizontal ray.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .geometry import Point3


@dataclass
class FanGridConfig:
    delta_a: float = 1.0        # segment angular resolution, degrees
    delta_d: float = 0.5        # bin radial resolution, meters
    d_min: float = 1.0          # valid perception range, meters
    d_max: float = 60.0
    delta_s: float = 0.2        # sensor horizontal angular resolution, degrees
    g_low: float = 0.2          # clearance pass-through band, meters
    g_high: float = 2.5
    max_slope: float = 0.30     # ground-line growing: slope limit
    fit_dist_tol: float = 0.10  # ground-line growing: point-to-line tolerance, meters
    seed_z_tol: float = 0.25    # seed accepted within this of the expected ground z, meters
    sensor_height: float = 1.8  # sensor above local ground, meters

    @property
    def m(self) -> int:
        """Number of angular segments."""
        return int(math.floor(360.0 / self.delta_a + 1e-9))

    @property
    def n(self) -> int:
        """Number of radial bins per segment."""
        return int(math.floor((self.d_max - self.d_min) / self.delta_d + 1e-9))

    @property
    def s(self) -> int:
        """Number of output scan rays."""
        return int(math.floor(360.0 / self.delta_s + 1e-9))

    def validate(self) -> None:
        if not 0.0 < self.delta_a <= 360.0:
            raise ValueError("delta_a must be in (0, 360]")
        if abs(360.0 / self.delta_a - round(360.0 / self.delta_a)) > 1e-6:
            raise ValueError("360 must be divisible by delta_a")
        if not self.delta_d > 0.0:
            raise ValueError("delta_d must be > 0")
        if not 0.0 <= self.d_min < self.d_max:
            raise ValueError("0 <= d_min < d_max required")
        if not self.delta_s > 0.0:
            raise ValueError("delta_s must be > 0")
        if not 0.0 <= self.g_low < self.g_high:
            raise ValueError("0 <= g_low < g_high required")
        if self.max_slope <= 0.0 or self.fit_dist_tol <= 0.0:
            raise ValueError("max_slope and fit_dist_tol must be > 0")
        if self.seed_z_tol < 0.0 or self.sensor_height < 0.0:
            raise ValueError("seed_z_tol and sensor_height must be >= 0")


def _angles_deg(x, y):
    """Azimuth in degrees, normalized to [0, 360)."""
    deg = np.degrees(np.arctan2(y, x)) % 360.0
    return np.where(deg >= 360.0, 0.0, deg)


def bin_index(range_m: float, angle_rad: float, cfg: FanGridConfig):
    """Fan-grid indices (segment k, bin j) for a polar point, or None when the
    range falls outside [d_min, d_max]."""
    if not (cfg.d_min <= range_m <= cfg.d_max):
        return None
    deg = math.degrees(angle_rad) % 360.0
    if deg >= 360.0:
        deg = 0.0
    k = min(int(deg // cfg.delta_a), cfg.m - 1)
    j = min(int((range_m - cfg.d_min) // cfg.delta_d), cfg.n - 1)
    return k, j


@dataclass
class FanGrid:
    """Lowest point per (segment, bin): its range and z. Empty bins are masked."""

    m: int
    n: int
    filled: np.ndarray   # (m, n) bool
    r_low: np.ndarray    # (m, n) range of the lowest-z point
    z_low: np.ndarray    # (m, n) its z


def build_fan_grid(cloud: np.ndarray, cfg: FanGridConfig) -> FanGrid:
    """Bin a cloud (N, 3) into the fan grid, keeping the minimum-z point per bin.

    Points outside [d_min, d_max] are discarded. Ties on z keep the earliest
    point in the cloud.
    """
    cloud = np.asarray(cloud, dtype=float).reshape(-1, 3)
    m, n = cfg.m, cfg.n
    filled = np.zeros((m, n), dtype=bool)
    r_low = np.full((m, n), np.nan)
    z_low = np.full((m, n), np.nan)
    if len(cloud):
        x, y, z = cloud[:, 0], cloud[:, 1], cloud[:, 2]
        r = np.hypot(x, y)
        ok = (r >= cfg.d_min) & (r <= cfg.d_max)
        r, z = r[ok], z[ok]
        deg = _angles_deg(x[ok], y[ok])
        k = np.minimum((deg / cfg.delta_a).astype(np.int64), m - 1)
        j = np.minimum(((r - cfg.d_min) / cfg.delta_d).astype(np.int64), n - 1)
        flat = k * n + j
        order = np.lexsort((z, flat))
        fs = flat[order]
        if len(fs):
            first = np.ones(len(fs), dtype=bool)
            first[1:] = fs[1:] != fs[:-1]
            sel = order[first]
            filled.reshape(-1)[flat[sel]] = True
            r_low.reshape(-1)[flat[sel]] = r[sel]
            z_low.reshape(-1)[flat[sel]] = z[sel]
    return FanGrid(m=m, n=n, filled=filled, r_low=r_low, z_low=z_low)


@njit(cache=True)
def _fit_segments(filled, r_low, z_low, ground_z, seed_tol, max_slope, dist_tol):
    """Grow least-squares line pieces over each segment's bin points.

    Growing starts at the first bin whose lowest point sits within seed_tol of
    the expected ground height; a point joins the current piece only if the
    refit slope stays within max_slope and the point lies within dist_tol of
    the refit line, otherwise the piece closes and a new one starts there.
    Pieces need at least two points and are valid over the bin span
    [j_lo, j_hi] of their member points.
    """
    m, n = filled.shape
    cap = m * n + 1
    seg = np.empty(cap, np.int64)
    jlo = np.empty(cap, np.int64)
    jhi = np.empty(cap, np.int64)
    slopes = np.empty(cap, np.float64)
    icepts = np.empty(cap, np.float64)
    cnt = 0
    for k in range(m):
        j0 = -1
        for j in range(n):
            if filled[k, j] and abs(z_low[k, j] - ground_z) <= seed_tol:
                j0 = j
                break
        if j0 < 0:
            continue
        npts = 0
        sr = sz = srz = srr = 0.0
        j_first = j_last = 0
        for j in range(j0, n):
            if not filled[k, j]:
                continue
            r = r_low[k, j]
            z = z_low[k, j]
            if npts == 0:
                npts = 1
                sr, sz, srz, srr = r, z, r * z, r * r
                j_first = j_last = j
                continue
            n2 = npts + 1
            sr2, sz2 = sr + r, sz + z
            srz2, srr2 = srz + r * z, srr + r * r
            den = n2 * srr2 - sr2 * sr2
            grow = False
            if den > 1e-12:
                kk = (n2 * srz2 - sr2 * sz2) / den
                bb = (sz2 - kk * sr2) / n2
                if abs(kk) <= max_slope:
                    dist = abs(kk * r - z + bb) / math.sqrt(kk * kk + 1.0)
                    if dist <= dist_tol:
                        grow = True
            if grow:
                npts = n2
                sr, sz, srz, srr = sr2, sz2, srz2, srr2
                j_last = j
            else:
                if npts >= 2:
                    den0 = npts * srr - sr * sr
                    k0 = (npts * srz - sr * sz) / den0
                    seg[cnt] = k
                    jlo[cnt] = j_first
                    jhi[cnt] = j_last
                    slopes[cnt] = k0
                    icepts[cnt] = (sz - k0 * sr) / npts
                    cnt += 1
                npts = 1
                sr, sz, srz, srr = r, z, r * z, r * r
                j_first = j_last = j
        if npts >= 2:
            den0 = npts * srr - sr * sr
            k0 = (npts * srz - sr * sz) / den0
            seg[cnt] = k
            jlo[cnt] = j_first
            jhi[cnt] = j_last
            slopes[cnt] = k0
            icepts[cnt] = (sz - k0 * sr) / npts
            cnt += 1
    return seg[:cnt], jlo[:cnt], jhi[:cnt], slopes[:cnt], icepts[:cnt]


@dataclass
class GroundModel:
    """Fitted ground-line pieces, ordered by (segment, bin) with disjoint bin
    spans inside a segment. A piece covers every point binned into
    [j_lo, j_hi] of its segment."""

    seg: np.ndarray
    j_lo: np.ndarray
    j_hi: np.ndarray
    slope: np.ndarray
    intercept: np.ndarray
    m: int
    n: int
    delta_a: float
    delta_d: float
    d_min: float
    d_max: float

    def pieces_for(self, k: int) -> list[tuple[float, float, float, float]]:
        """(r_lo, r_hi, slope, intercept) tuples of segment k, with the valid
        interval expressed as the covered bins' radial span."""
        sel = np.flatnonzero(self.seg == k)
        return [(self.d_min + self.j_lo[i] * self.delta_d,
                 self.d_min + (self.j_hi[i] + 1) * self.delta_d,
                 self.slope[i], self.intercept[i]) for i in sel]

    def clearance(self, k: np.ndarray, r: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Clearance for points given segment indices, ranges and heights.

        Points whose bin is covered by a piece get the point-to-line distance
        |slope*r - z + intercept| / sqrt(slope^2 + 1); uncovered points fall
        back to their raw z.
        """
        g = np.asarray(z, dtype=float).copy()
        if len(self.seg) == 0 or len(g) == 0:
            return g
        j = np.minimum(((r - self.d_min) / self.delta_d).astype(np.int64),
                       self.n - 1)
        key = k * self.n + j
        idx = np.searchsorted(self.seg * self.n + self.j_lo, key, side="right") - 1
        safe = np.maximum(idx, 0)
        covered = (idx >= 0) & (self.seg[safe] == k) & (j <= self.j_hi[safe])
        kk = self.slope[safe]
        bb = self.intercept[safe]
        g_line = np.abs(kk * r - z + bb) / np.sqrt(kk * kk + 1.0)
        return np.where(covered, g_line, g)


def fit_ground_lines(grid: FanGrid, cfg: FanGridConfig) -> GroundModel:
    """Fit the per-segment piecewise ground lines from the fan-grid lowest points."""
    seg, jlo, jhi, slopes, icepts = _fit_segments(
        grid.filled, grid.r_low, grid.z_low,
        -cfg.sensor_height, cfg.seed_z_tol, cfg.max_slope, cfg.fit_dist_tol)
    return GroundModel(seg=seg, j_lo=jlo, j_hi=jhi, slope=slopes, intercept=icepts,
                       m=cfg.m, n=cfg.n, delta_a=cfg.delta_a, delta_d=cfg.delta_d,
                       d_min=cfg.d_min, d_max=cfg.d_max)


def ground_clearance(p: Point3, model: GroundModel) -> float:
    """Clearance of a single point above its segment's fitted ground line, or
    its raw z when no line piece covers its bin."""
    r = math.hypot(p.x, p.y)
    if not (model.d_min <= r <= model.d_max):
        return p.z
    deg = math.degrees(math.atan2(p.y, p.x)) % 360.0
    if deg >= 360.0:
        deg = 0.0
    k = min(int(deg // model.delta_a), model.m - 1)
    j = min(int((r - model.d_min) // model.delta_d), model.n - 1)
    for i in np.flatnonzero(model.seg == k):
        if model.j_lo[i] <= j <= model.j_hi[i]:
            kk, bb = model.slope[i], model.intercept[i]
            return abs(kk * r - p.z + bb) / math.sqrt(kk * kk + 1.0)
    return p.z


def extract_obstacle_points(cloud: np.ndarray, model: GroundModel,
                            cfg: FanGridConfig) -> tuple[np.ndarray, np.ndarray]:
    """Clearance-filter the cloud: keep in-range points with clearance in
    [g_low, g_high]. Returns (xy (M, 2), clearance (M,))."""
    cloud = np.asarray(cloud, dtype=float).reshape(-1, 3)
    if not len(cloud):
        return np.empty((0, 2)), np.empty(0)
    x, y, z = cloud[:, 0], cloud[:, 1], cloud[:, 2]
    r = np.hypot(x, y)
    ok = (r >= cfg.d_min) & (r <= cfg.d_max)
    x, y, z, r = x[ok], y[ok], z[ok], r[ok]
    deg = _angles_deg(x, y)
    k = np.minimum((deg / cfg.delta_a).astype(np.int64), cfg.m - 1)
    g = model.clearance(k, r, z)
    keep = (g >= cfg.g_low) & (g <= cfg.g_high)
    return np.stack((x[keep], y[keep]), axis=1), g[keep]


@dataclass
class ObstacleScan:
    """Fixed-size 2D pseudo-scan: one obstacle endpoint per horizontal ray.

    Entry i corresponds to the ray at i * delta_s degrees. Rays with no
    obstacle carry a virtual endpoint at range d_max.
    """

    xy: np.ndarray       # (s, 2) endpoints, sensor frame
    virtual: np.ndarray  # (s,) bool

    def __len__(self) -> int:
        return len(self.xy)


def project_to_scan(obstacles_xy: np.ndarray, cfg: FanGridConfig) -> ObstacleScan:
    """Collapse obstacle points to the nearest point per ray; empty rays get a
    virtual endpoint at d_max along the ray. Range ties keep the earliest
    input point."""
    s = cfg.s
    ang = np.radians(np.arange(s) * cfg.delta_s)
    xy = np.stack((cfg.d_max * np.cos(ang), cfg.d_max * np.sin(ang)), axis=1)
    virtual = np.ones(s, dtype=bool)
    obstacles_xy = np.asarray(obstacles_xy, dtype=float).reshape(-1, 2)
    if len(obstacles_xy):
        x, y = obstacles_xy[:, 0], obstacles_xy[:, 1]
        r = np.hypot(x, y)
        deg = _angles_deg(x, y)
        ray = np.minimum((deg / cfg.delta_s).astype(np.int64), s - 1)
        order = np.lexsort((r, ray))
        rs = ray[order]
        first = np.ones(len(rs), dtype=bool)
        first[1:] = rs[1:] != rs[:-1]
        sel = order[first]
        xy[ray[sel]] = obstacles_xy[sel]
        virtual[ray[sel]] = False
    return ObstacleScan(xy=xy, virtual=virtual)
