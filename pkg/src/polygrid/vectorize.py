"""Grid -> convex polygons: submap binarization, morphological cleanup,
border following, double-threshold boundary simplification and reflex-vertex
edge-extension decomposition.

Boundaries and polygons are counter-clockwise in the metric map frame, so a
chord's "outer" side (away from the obstacle interior) is its right side.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .gridmap import GridConfig, GridMap, log_odds

# Direction ring in (x, y), counter-clockwise from east.
_DIRS = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))
_DIR_OF = {d: i for i, d in enumerate(_DIRS)}


class DecompositionError(RuntimeError):
    pass


@dataclass
class VectorizationConfig:
    submap_w: int = 400       # central crop of the grid, cells
    submap_h: int = 400
    delta_in: float = 0.30    # inner (toward obstacle) split threshold, meters
    delta_ou: float = 0.10    # outer (protruding) split threshold, meters
    k_min: int = 8            # chains shorter than this pass through unchanged
    morph_kernel: int = 1     # closing structuring-element radius, cells

    def validate(self) -> None:
        if self.submap_w <= 0 or self.submap_h <= 0:
            raise ValueError("submap_w and submap_h must be > 0")
        if not self.delta_ou < self.delta_in:
            raise ValueError("delta_ou < delta_in required")
        if self.k_min < 3:
            raise ValueError("k_min must be >= 3")
        if self.morph_kernel < 0:
            raise ValueError("morph_kernel must be >= 0")


@dataclass
class BinaryImage:
    """Occupancy bit image of the submap with its metric anchor."""

    bits: np.ndarray     # (w, h) bool, [ix, iy]
    origin_x: float      # metric corner of pixel (0, 0)
    origin_y: float
    r_m: float

    def cell_center(self, ix, iy) -> tuple[float, float]:
        return (self.origin_x + (ix + 0.5) * self.r_m,
                self.origin_y + (iy + 0.5) * self.r_m)


@dataclass
class Boundary:
    """Closed boundary polyline, counter-clockwise, implicit closure."""

    points: np.ndarray  # (N, 2) metric

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class Polygon:
    points: np.ndarray  # (N, 2) metric, CCW, implicit closure
    is_convex: bool

    @classmethod
    def from_points(cls, points: np.ndarray) -> "Polygon":
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        return cls(points=pts, is_convex=len(pts) >= 3 and not _reflex_mask(pts).any())

    def __len__(self) -> int:
        return len(self.points)


def polygon_area(points: np.ndarray) -> float:
    """Signed shoelace area; positive for counter-clockwise."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 3:
        return 0.0
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def binarize_submap(grid: GridMap, cfg_g: GridConfig,
                    cfg_v: VectorizationConfig) -> BinaryImage:
    """Occupied-cell bits of the central submap crop.

    The crop is taken first; the occupied test (log-odds against
    log_odds(beta_occ)) matches classify_cells exactly."""
    w, h = grid.cells.shape
    sw, sh = min(cfg_v.submap_w, w), min(cfg_v.submap_h, h)
    x0, y0 = (w - sw) // 2, (h - sh) // 2
    ox, oy = grid.origin
    return BinaryImage(
        bits=grid.cells[x0:x0 + sw, y0:y0 + sh] >= log_odds(cfg_g.beta_occ),
        origin_x=ox + x0 * grid.r_m,
        origin_y=oy + y0 * grid.r_m,
        r_m=grid.r_m)


def _shifted(a: np.ndarray, di: int, dj: int) -> np.ndarray:
    """a translated by (di, dj) with zero fill."""
    out = np.zeros_like(a)
    si = slice(max(0, di), a.shape[0] + min(0, di))
    sj = slice(max(0, dj), a.shape[1] + min(0, dj))
    ti = slice(max(0, -di), a.shape[0] + min(0, -di))
    tj = slice(max(0, -dj), a.shape[1] + min(0, -dj))
    out[si, sj] = a[ti, tj]
    return out


def _dilate(a: np.ndarray, k: int) -> np.ndarray:
    out = a.copy()
    for di in range(-k, k + 1):
        for dj in range(-k, k + 1):
            if di or dj:
                out |= _shifted(a, di, dj)
    return out


def _erode(a: np.ndarray, k: int) -> np.ndarray:
    out = a.copy()
    for di in range(-k, k + 1):
        for dj in range(-k, k + 1):
            if di or dj:
                out &= _shifted(a, di, dj)
    return out


def morph_close(img: BinaryImage, kernel: int) -> BinaryImage:
    """Binary closing with a square (2*kernel+1) element; kernel 0 is identity.

    Computed on a padded plane, so foreground is never lost at image borders
    and closing stays extensive."""
    if kernel <= 0:
        return BinaryImage(img.bits.copy(), img.origin_x, img.origin_y, img.r_m)
    p = kernel * 2
    padded = np.pad(img.bits, p)
    closed = _erode(_dilate(padded, kernel), kernel)[p:-p, p:-p]
    return BinaryImage(closed, img.origin_x, img.origin_y, img.r_m)


def _trace_component(labels: np.ndarray, lab: int, start: tuple[int, int]) -> list[tuple[int, int]]:
    """Moore-neighbor outer-border trace from the component's bottom-left-most
    pixel; counter-clockwise, terminated by the repeated-start-move criterion."""
    w, h = labels.shape
    contour = [start]
    cur = start
    back = 4  # toward the (background) west neighbor of the start pixel
    first_d = None
    while True:
        found = -1
        nxt = cur
        for step in range(1, 9):
            d = (back + step) % 8
            nx, ny = cur[0] + _DIRS[d][0], cur[1] + _DIRS[d][1]
            if 0 <= nx < w and 0 <= ny < h and labels[nx, ny] == lab:
                found = d
                nxt = (nx, ny)
                break
        if found < 0:
            return contour  # isolated pixel
        if cur == start:
            if first_d is None:
                first_d = found
            elif found == first_d:
                if contour[-1] == start:
                    contour.pop()
                return contour
        bg_dir = _DIRS[(found - 1) % 8]
        bg = (cur[0] + bg_dir[0], cur[1] + bg_dir[1])
        contour.append(nxt)
        back = _DIR_OF[(bg[0] - nxt[0], bg[1] - nxt[1])]
        cur = nxt


def trace_boundaries(img: BinaryImage) -> list[Boundary]:
    """Outer border of every 8-connected foreground component, as metric
    points at cell centers, counter-clockwise, ordered by bottom-left-most
    start pixel. Components whose border has fewer than 3 points are skipped."""
    if not img.bits.any():
        return []
    labels, nlab = ndimage.label(img.bits, structure=np.ones((3, 3), dtype=int))
    fg = np.argwhere(img.bits)
    labs = labels[fg[:, 0], fg[:, 1]]
    order = np.lexsort((fg[:, 0], fg[:, 1], labs))
    first = np.ones(len(order), dtype=bool)
    first[1:] = labs[order][1:] != labs[order][:-1]
    starts = fg[order[first]]
    start_order = np.lexsort((starts[:, 0], starts[:, 1]))  # discovery: by (y, x)
    out = []
    for si in start_order:
        ix, iy = int(starts[si][0]), int(starts[si][1])
        contour = _trace_component(labels, int(labels[ix, iy]), (ix, iy))
        if len(contour) < 3:
            continue
        pts = np.asarray(contour, dtype=float)
        pts = (pts + 0.5) * img.r_m
        pts[:, 0] += img.origin_x
        pts[:, 1] += img.origin_y
        out.append(Boundary(points=pts))
    return out


def _chain_retained(pts: np.ndarray, delta_in: float, delta_ou: float,
                    k_min: int) -> set[int]:
    """Double-threshold split of one open chain; returns retained indices.

    Chords with the largest inner deviation above delta_in split there first,
    otherwise the largest outer deviation above delta_ou splits; chords under
    both thresholds keep only their endpoints. Chains shorter than k_min are
    kept whole."""
    n = len(pts)
    if n < k_min:
        return set(range(n))
    retained = {0, n - 1}
    queue = deque([(0, n - 1)])
    while queue:
        i_s, i_e = queue.popleft()
        if i_e - i_s < 2:
            continue
        a = pts[i_s]
        b = pts[i_e]
        seg = pts[i_s + 1:i_e]
        ab = b - a
        norm = math.hypot(ab[0], ab[1])
        if norm < 1e-12:
            # Degenerate chord (coincident endpoints on a pinched boundary):
            # fall back to point distance, counted as inner deviation.
            dist = np.hypot(seg[:, 0] - a[0], seg[:, 1] - a[1])
            outer = np.zeros(len(seg), dtype=bool)
        else:
            cross = (a[0] - seg[:, 0]) * (b[1] - seg[:, 1]) \
                - (a[1] - seg[:, 1]) * (b[0] - seg[:, 0])
            dist = np.abs(cross) / norm
            outer = cross < 0.0
        d_in = d_ou = 0.0
        i_in = i_ou = -1
        if outer.any():
            j = int(np.argmax(np.where(outer, dist, -1.0)))
            d_ou, i_ou = float(dist[j]), i_s + 1 + j
        if (~outer).any():
            j = int(np.argmax(np.where(outer, -1.0, dist)))
            d_in, i_in = float(dist[j]), i_s + 1 + j
        if d_in > delta_in:
            queue.append((i_s, i_in))
            queue.append((i_in, i_e))
            retained.add(i_in)
        elif d_ou > delta_ou:
            queue.append((i_s, i_ou))
            queue.append((i_ou, i_e))
            retained.add(i_ou)
    return retained


def simplify_chain(pts: np.ndarray, cfg: VectorizationConfig) -> np.ndarray:
    """Simplify one open chain; output vertices are a subset of the input."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    keep = sorted(_chain_retained(pts, cfg.delta_in, cfg.delta_ou, cfg.k_min))
    return pts[keep]


def _farthest_pair(pts: np.ndarray) -> tuple[int, int]:
    """Indices of the two mutually farthest points (lowest indices on ties)."""
    n = len(pts)
    best = (-1.0, 0, 0)
    for i0 in range(0, n, 256):
        block = pts[i0:i0 + 256]
        d2 = ((block[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        j = int(np.argmax(d2))
        bi, bj = divmod(j, n)
        if d2[bi, bj] > best[0]:
            best = (float(d2[bi, bj]), i0 + bi, bj)
    i, j = best[1], best[2]
    return (i, j) if i < j else (j, i)


def simplify(boundary: Boundary, cfg: VectorizationConfig) -> Polygon:
    """Double-threshold simplification of a closed boundary.

    The boundary splits at its two mutually farthest vertices into two open
    chains which are simplified independently and rejoined; boundaries shorter
    than k_min pass through unchanged."""
    pts = boundary.points
    n = len(pts)
    if n < cfg.k_min:
        return Polygon.from_points(pts)
    i, j = _farthest_pair(pts)
    idx_a = np.arange(i, j + 1)
    idx_b = np.concatenate((np.arange(j, n), np.arange(0, i + 1)))
    keep: set[int] = set()
    for idx in (idx_a, idx_b):
        local = _chain_retained(pts[idx], cfg.delta_in, cfg.delta_ou, cfg.k_min)
        keep.update(int(idx[li]) for li in local)
    return Polygon.from_points(pts[sorted(keep)])


def _cross3(pts: np.ndarray) -> np.ndarray:
    """Cross product at every vertex: (p[i] - p[i-1]) x (p[i+1] - p[i])."""
    prv = np.roll(pts, 1, axis=0)
    nxt = np.roll(pts, -1, axis=0)
    return ((pts[:, 0] - prv[:, 0]) * (nxt[:, 1] - pts[:, 1])
            - (pts[:, 1] - prv[:, 1]) * (nxt[:, 0] - pts[:, 0]))


def _reflex_mask(pts: np.ndarray) -> np.ndarray:
    """Reflex (interior angle > 180 deg) vertices of a CCW polygon, with a
    scale-relative collinearity tolerance."""
    prv = np.roll(pts, 1, axis=0)
    nxt = np.roll(pts, -1, axis=0)
    la = np.hypot(pts[:, 0] - prv[:, 0], pts[:, 1] - prv[:, 1])
    lb = np.hypot(nxt[:, 0] - pts[:, 0], nxt[:, 1] - pts[:, 1])
    return _cross3(pts) < -1e-9 * la * lb


def _segments_intersect(p0, p1, q0, q1) -> bool:
    """Closed-segment intersection test (touching counts)."""
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    def on_seg(a, b, c):
        return (min(a[0], b[0]) - 1e-12 <= c[0] <= max(a[0], b[0]) + 1e-12
                and min(a[1], b[1]) - 1e-12 <= c[1] <= max(a[1], b[1]) + 1e-12)

    o1, o2 = orient(p0, p1, q0), orient(p0, p1, q1)
    o3, o4 = orient(q0, q1, p0), orient(q0, q1, p1)
    if ((o1 > 0) != (o2 > 0)) and ((o3 > 0) != (o4 > 0)) and o1 != 0 and o2 != 0 \
            and o3 != 0 and o4 != 0:
        return True
    for (a, b, c) in ((p0, p1, q0), (p0, p1, q1), (q0, q1, p0), (q0, q1, p1)):
        if orient(a, b, c) == 0 and on_seg(a, b, c):
            return True
    return False


def is_simple(points: np.ndarray) -> bool:
    """True when the closed polygon has no repeated vertices, zero-length
    edges, or crossings between non-adjacent edges."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(pts)
    if n < 3:
        return False
    nxt = np.roll(pts, -1, axis=0)
    if np.any(np.hypot(nxt[:, 0] - pts[:, 0], nxt[:, 1] - pts[:, 1]) < 1e-12):
        return False
    for i in range(n):
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if _segments_intersect(pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n]):
                return False
    return True


def sunken_vertices(poly: Polygon) -> list[int]:
    """Indices of reflex vertices (interior angle > 180 deg) of a CCW simple
    polygon; empty means convex."""
    pts = poly.points
    if len(pts) < 3:
        raise ValueError("polygon needs at least 3 vertices")
    if not is_simple(pts):
        raise ValueError("non-simple polygon")
    if polygon_area(pts) < 0:
        raise ValueError("polygon must be counter-clockwise")
    return [int(i) for i in np.flatnonzero(_reflex_mask(pts))]


def _clean_ring(pts: np.ndarray) -> np.ndarray:
    """Drop repeated consecutive vertices and collinear interior vertices."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    changed = True
    while changed and len(pts) >= 3:
        nxt = np.roll(pts, -1, axis=0)
        dup = np.hypot(nxt[:, 0] - pts[:, 0], nxt[:, 1] - pts[:, 1]) < 1e-9
        if dup.any():
            pts = pts[~dup]
            continue
        prv = np.roll(pts, 1, axis=0)
        nxt = np.roll(pts, -1, axis=0)
        la = np.hypot(pts[:, 0] - prv[:, 0], pts[:, 1] - prv[:, 1])
        lb = np.hypot(nxt[:, 0] - pts[:, 0], nxt[:, 1] - pts[:, 1])
        collinear = np.abs(_cross3(pts)) <= 1e-9 * la * lb
        if collinear.any():
            pts = pts[~collinear]
            continue
        changed = False
    return pts


def _first_reflex_run_start(reflex: np.ndarray) -> int:
    """First index of the first run of consecutive reflex vertices, treating
    the index ring circularly."""
    n = len(reflex)
    for i in range(n):
        if reflex[i] and not reflex[(i - 1) % n]:
            return i
    return int(np.flatnonzero(reflex)[0])


def _ray_hit(pts: np.ndarray, i: int):
    """First intersection of the extension of edge (i-1 -> i) beyond vertex i
    with a non-adjacent polygon edge. Returns (distance, edge index, point)."""
    n = len(pts)
    o = pts[i]
    d = pts[i] - pts[(i - 1) % n]
    dn = math.hypot(d[0], d[1])
    d = d / dn
    best = None
    for j in range(n):
        if j == i or (j + 1) % n == i or j == (i - 1) % n:
            continue  # edges touching vertex i or the extended edge itself
        q0 = pts[j]
        q1 = pts[(j + 1) % n]
        e = q1 - q0
        denom = d[0] * e[1] - d[1] * e[0]
        w0 = q0 - o
        if abs(denom) < 1e-14:
            if abs(d[0] * w0[1] - d[1] * w0[0]) > 1e-9:
                continue  # parallel, not collinear
            for q in (q0, q1):
                t = (q[0] - o[0]) * d[0] + (q[1] - o[1]) * d[1]
                if t > 1e-9 and (best is None or t < best[0] - 1e-12):
                    best = (t, j, o + t * d)
            continue
        t = (w0[0] * e[1] - w0[1] * e[0]) / denom
        s = (w0[0] * d[1] - w0[1] * d[0]) / denom
        if t > 1e-9 and -1e-9 <= s <= 1.0 + 1e-9 and (best is None or t < best[0] - 1e-12):
            best = (t, j, o + t * d)
    return best


def decompose(poly: Polygon, min_area: float = 0.0) -> list[Polygon]:
    """Split a simple CCW polygon into convex pieces by extending the edge
    entering each first reflex vertex until it meets another edge.

    The output pieces partition the input area. Pieces with fewer than 3
    distinct vertices are dropped, as are pieces below min_area when a
    positive threshold is given (sub-resolution slivers)."""
    work = [np.asarray(poly.points, dtype=float).reshape(-1, 2)]
    out: list[Polygon] = []
    budget = 4 * len(poly.points) ** 2 + 16
    while work:
        budget -= 1
        if budget < 0:
            raise DecompositionError("decomposition failure")
        pts = _clean_ring(work.pop())
        if len(pts) < 3:
            continue
        if min_area > 0.0 and abs(polygon_area(pts)) < min_area:
            continue
        reflex = _reflex_mask(pts)
        if not reflex.any():
            out.append(Polygon(points=pts, is_convex=True))
            continue
        i = _first_reflex_run_start(reflex)
        hit = _ray_hit(pts, i)
        if hit is None:
            raise DecompositionError("decomposition failure")
        _, j, p_i = hit
        n = len(pts)
        fwd = [(i + k) % n for k in range((j - i) % n + 1)]       # i .. j
        rest = [(j + 1 + k) % n for k in range((i - j - 1) % n + 1)]  # j+1 .. i
        piece1 = np.vstack((pts[fwd], p_i[None, :]))
        piece2 = np.vstack((p_i[None, :], pts[rest]))
        work.append(piece2)
        work.append(piece1)
    return out
