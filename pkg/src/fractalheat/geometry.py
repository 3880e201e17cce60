"""Planar self-similar systems, generalized von Koch prefractals, and rasterization.

Conventions: the base segment of a von Koch curve runs from (0,0) to (1,0) and
the curve bulges to the left of the travel direction (apex above the segment).
Snowflake boundaries are oriented counterclockwise (interior on the left) with
the bumps pointing outward.  The snowflake base polygon has side length 1.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import GeometryError, ResourceLimitError
from .series import write_json_sidecar

# Vertex budget for prefractal generation (per polyline).
MAX_VERTICES = 20_000_000

_CROSS_EPS = 1e-12


@dataclass(frozen=True)
class Similitude:
    """A contractive similarity of the plane: x -> ratio * R(rotation) * F * x + translation.

    F is a reflection across the x-axis when ``reflection`` is set, applied
    before the rotation.
    """

    ratio: float
    rotation: float = 0.0
    reflection: bool = False
    translation: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not (0.0 < self.ratio < 1.0):
            raise ValueError(f"ratio must lie in (0,1), got {self.ratio}")
        object.__setattr__(self, "translation",
                           (float(self.translation[0]), float(self.translation[1])))

    @property
    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        m = np.array([[c, -s], [s, c]]) * self.ratio
        if self.reflection:
            m = m @ np.diag([1.0, -1.0])
        return m

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = pts @ self.matrix.T + np.asarray(self.translation)
        return out if np.asarray(points).ndim > 1 else out[0]


@dataclass(frozen=True)
class SelfSimilarSystem:
    """A finite list of planar similitudes, or an abstract ratio/multiplicity list.

    Concrete systems carry ``maps``; abstract systems only a ratio profile.
    ``meta`` records construction parameters (e.g. the (n, r) of a GKF system).
    """

    maps: tuple = ()
    ambient_dim: int = 2
    abstract_ratios: tuple = ()   # ((ratio, multiplicity), ...)
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.maps and not self.abstract_ratios:
            raise ValueError("system needs at least one map or ratio")
        if self.ambient_dim < 1:
            raise ValueError("ambient_dim must be positive")
        for r, m in self.abstract_ratios:
            if not (0 < r < 1):
                raise ValueError("ratios must lie in (0,1)")
            if m < 1 or int(m) != m:
                raise ValueError("multiplicities must be integers >= 1")

    @classmethod
    def from_ratios(cls, pairs, ambient_dim: int = 2) -> "SelfSimilarSystem":
        return cls(maps=(), ambient_dim=ambient_dim,
                   abstract_ratios=tuple((float(r), int(m)) for r, m in pairs))

    def distinct_ratios(self, rel_tol: float = 1e-12):
        """Deduplicated scaling ratios sorted descending, with multiplicities.

        Ratios agreeing to within ``rel_tol`` relative are merged (guards
        against float noise such as (1-r)/2 vs r when r = 1/3).
        """
        if self.maps:
            pairs = [(phi.ratio, 1) for phi in self.maps]
        else:
            pairs = list(self.abstract_ratios)
        pairs.sort(reverse=True)
        ratios, mults = [], []
        for r, m in pairs:
            if ratios and abs(ratios[-1] - r) <= rel_tol * r:
                mults[-1] += m
            else:
                ratios.append(r)
                mults.append(m)
        return ratios, mults


@dataclass(frozen=True)
class Polyline:
    """Ordered planar vertices; a closed polyline has an implicit closing edge."""

    vertices: np.ndarray
    closed: bool = False

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 2:
            raise ValueError("vertices must be an (n,2) array with n >= 2")
        if np.any(np.all(v[1:] == v[:-1], axis=1)):
            raise ValueError("consecutive vertices must be distinct")
        if self.closed and np.all(v[0] == v[-1]):
            raise ValueError("closed polyline must not repeat its first vertex")
        object.__setattr__(self, "vertices", v)

    @property
    def edges(self) -> np.ndarray:
        """(m, 2, 2) array of segment endpoints, including the closing edge."""
        v = self.vertices
        if self.closed:
            v = np.vstack([v, v[:1]])
        return np.stack([v[:-1], v[1:]], axis=1)

    @property
    def n_edges(self) -> int:
        return len(self.vertices) if self.closed else len(self.vertices) - 1

    def shoelace_area(self) -> float:
        """Signed area (positive for counterclockwise closed polylines)."""
        v = self.vertices
        x, y = v[:, 0], v[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def to_csv(self, path):
        np.savetxt(Path(path), self.vertices, delimiter=",", header="x,y",
                   comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path, closed=False) -> "Polyline":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(vertices=data, closed=closed)


@dataclass(frozen=True)
class GridDomain:
    """Rasterized interior of a closed curve, with a Dirichlet rim mask.

    ``boundary_mask`` marks exterior cells 8-adjacent to the interior; they
    carry the Dirichlet value 1 in the heat solver.
    """

    h: float
    origin: tuple
    interior_mask: np.ndarray
    boundary_mask: np.ndarray

    def __post_init__(self):
        if np.any(self.interior_mask & self.boundary_mask):
            raise ValueError("interior and boundary masks must be disjoint")
        if not self.interior_mask.any():
            raise ValueError("empty interior")

    @property
    def area(self) -> float:
        return float(self.interior_mask.sum()) * self.h ** 2

    def cell_centers(self):
        """(x, y) coordinates of all cell centers as 2-D arrays."""
        ny, nx = self.interior_mask.shape
        x = self.origin[0] + (np.arange(nx) + 0.5) * self.h
        y = self.origin[1] + (np.arange(ny) + 0.5) * self.h
        return np.meshgrid(x, y)

    def to_pgm(self, path, sidecar=True):
        """Write the masks as a PGM (0 exterior, 128 rim, 255 interior)."""
        img = np.zeros(self.interior_mask.shape, dtype=np.uint8)
        img[self.boundary_mask] = 128
        img[self.interior_mask] = 255
        path = Path(path)
        with open(path, "wb") as fh:
            fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
            fh.write(img[::-1].tobytes())   # row 0 at the bottom
        if sidecar:
            write_json_sidecar(path.with_suffix(".json"),
                               {"h": self.h, "origin": list(self.origin),
                                "area": self.area})


def gkf_system(n: int, r: float, strict: bool = True) -> SelfSimilarSystem:
    """The (n, r)-von Koch self-similar system of n+1 maps on the unit segment.

    Two maps of ratio l = (1-r)/2 cover the outer pieces and n-1 maps of
    ratio r trace the regular n-gon adjoined over the middle gap.  Maps are
    returned in chaining order along the curve.

    The standard construction requires r <= 1/3; pass ``strict=False`` to
    build the (possibly self-intersecting) system for larger r anyway.
    """
    if n < 3 or int(n) != n:
        raise ValueError(f"n must be an integer >= 3, got {n}")
    if not (0 < r < 1):
        raise ValueError(f"r must lie in (0, 1), got {r}")
    if strict and r > 1 / 3:
        raise ValueError(f"r must lie in (0, 1/3], got {r} "
                         "(use strict=False to override)")
    n = int(n)
    ell = (1 - r) / 2
    theta = 2 * math.pi / n          # central angle
    alpha = math.pi - theta          # interior angle
    phi_l = Similitude(ratio=ell)
    psis = []
    anchor = np.array([ell, 0.0])
    for k in range(1, n):
        psi = Similitude(ratio=r, rotation=alpha - (k - 1) * theta,
                         translation=tuple(anchor))
        psis.append(psi)
        anchor = psi(np.array([1.0, 0.0]))
    phi_r = Similitude(ratio=ell, translation=(ell + r, 0.0))
    maps = (phi_l, *psis, phi_r)
    return SelfSimilarSystem(maps=maps, ambient_dim=2, meta={"n": n, "r": r})


def self_avoidance_bound(n: int) -> float:
    """Largest r guaranteeing a simple (n, r)-von Koch curve."""
    if n < 3:
        raise ValueError("n must be >= 3")
    if n % 2 == 0:
        s, c = math.sin(math.pi / n), math.cos(math.pi / n)
        return s * s / (c * c + 1)
    return 1 - math.cos(math.pi / n)


def prefractal_curve(system: SelfSimilarSystem, depth: int) -> Polyline:
    """Depth-d polygonal approximation of the von Koch curve from (0,0) to (1,0)."""
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if not system.maps:
        raise ValueError("prefractal generation needs a concrete map system")
    n_maps = len(system.maps)
    n_vertices = n_maps ** depth + 1
    if n_vertices > MAX_VERTICES:
        raise ResourceLimitError(
            f"depth {depth} needs {n_vertices} vertices (budget {MAX_VERTICES})")
    pts = np.array([[0.0, 0.0], [1.0, 0.0]])
    for _ in range(depth):
        pieces = [phi(pts) for phi in system.maps]
        # consecutive pieces share an endpoint; drop the duplicate
        pts = np.vstack([pieces[0]] + [p[1:] for p in pieces[1:]])
    # endpoints are exact by construction of the chaining maps
    pts[0] = (0.0, 0.0)
    pts[-1] = (1.0, 0.0)
    return Polyline(vertices=pts, closed=False)


def _place_on_edge(curve: np.ndarray, a, b) -> np.ndarray:
    """Map the unit-segment curve onto the segment a -> b by a similarity."""
    a = np.asarray(a, float)
    d = np.asarray(b, float) - a
    m = np.array([[d[0], -d[1]], [d[1], d[0]]])
    return curve @ m.T + a


def snowflake(system: SelfSimilarSystem, depth: int,
              check_simple: bool = True) -> Polyline:
    """Closed (n, r)-von Koch snowflake boundary at the given prefractal depth.

    The curve copies are mounted on the edges of a regular n-gon with unit
    side so the bumps point outward; the result is oriented counterclockwise.
    """
    meta = system.meta
    if "n" not in meta:
        raise ValueError("snowflake needs a system built by gkf_system")
    n, r = meta["n"], meta["r"]
    bound = self_avoidance_bound(n)
    if r >= bound:
        warnings.warn(
            f"r={r} is not below the self-avoidance bound {bound:.6g} for n={n}; "
            "the boundary may self-intersect")
    curve = prefractal_curve(system, depth).vertices
    # regular n-gon with unit side, centered at origin, vertex 0 at angle -pi/2 - pi/n
    rad = 1 / (2 * math.sin(math.pi / n))
    angles = -math.pi / 2 - math.pi / n + 2 * math.pi * np.arange(n) / n
    poly = rad * np.column_stack([np.cos(angles), np.sin(angles)])
    # traverse the polygon clockwise so the left-bulging curve points outward,
    # then reverse the whole boundary to make it counterclockwise
    order = [0] + list(range(n - 1, 0, -1))   # clockwise vertex sequence
    pieces = []
    for i in range(n):
        a = poly[order[i]]
        b = poly[order[(i + 1) % n]]
        seg = _place_on_edge(curve, a, b)
        pieces.append(seg[:-1])
    vertices = np.vstack(pieces)[::-1]
    boundary = Polyline(vertices=vertices, closed=True)
    if check_simple:
        bad = polyline_self_intersections(boundary)
        if bad:
            raise GeometryError(
                f"snowflake boundary self-intersects; first offending edge pair {bad[0]}")
    return boundary


def _orient(p, q, r):
    """Sign of the cross product (q-p) x (r-p) with an epsilon deadband."""
    v = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
    if abs(v) <= _CROSS_EPS:
        return 0
    return 1 if v > 0 else -1


def _segments_properly_intersect(a0, a1, b0, b1) -> bool:
    d1 = _orient(b0, b1, a0)
    d2 = _orient(b0, b1, a1)
    d3 = _orient(a0, a1, b0)
    d4 = _orient(a0, a1, b1)
    return d1 * d2 < 0 and d3 * d4 < 0


def polyline_self_intersections(poly: Polyline, max_pairs: int = 10):
    """Proper self-intersections of a polyline via a uniform-grid sweep.

    Adjacent edges (sharing a vertex) are skipped.  Returns a list of
    offending (i, j) edge-index pairs, at most ``max_pairs`` of them.
    """
    edges = poly.edges
    m = len(edges)
    lengths = np.linalg.norm(edges[:, 1] - edges[:, 0], axis=1)
    cell = max(lengths.max(), 1e-12)
    lo = edges.min(axis=(0, 1))
    mins = np.floor((edges.min(axis=1) - lo) / cell).astype(np.int64)
    maxs = np.floor((edges.max(axis=1) - lo) / cell).astype(np.int64)
    buckets = {}
    for i in range(m):
        for ix in range(mins[i, 0], maxs[i, 0] + 1):
            for iy in range(mins[i, 1], maxs[i, 1] + 1):
                buckets.setdefault((ix, iy), []).append(i)
    hits = []
    seen = set()
    for members in buckets.values():
        for ai in range(len(members)):
            for bi in range(ai + 1, len(members)):
                i, j = members[ai], members[bi]
                if i > j:
                    i, j = j, i
                if (i, j) in seen:
                    continue
                seen.add((i, j))
                # skip adjacent edges (incl. wraparound for closed polylines)
                if j - i == 1 or (poly.closed and i == 0 and j == m - 1):
                    continue
                if _segments_properly_intersect(edges[i, 0], edges[i, 1],
                                                edges[j, 0], edges[j, 1]):
                    hits.append((i, j))
                    if len(hits) >= max_pairs:
                        return hits
    return hits


def rasterize(boundary: Polyline, resolution: int, margin_cells: int = 3,
              keep_largest: bool = True) -> GridDomain:
    """Even-odd scanline fill of a simple closed polyline at cells-per-unit resolution."""
    if not boundary.closed:
        raise GeometryError("rasterize needs a closed polyline")
    if resolution < 16:
        raise ValueError("resolution must be >= 16 cells per unit length")
    if polyline_self_intersections(boundary, max_pairs=1):
        raise GeometryError("rasterize needs a simple (non-self-intersecting) polyline")
    h = 1.0 / resolution
    v = boundary.vertices
    lo = v.min(axis=0) - margin_cells * h
    hi = v.max(axis=0) + margin_cells * h
    nx = int(np.ceil((hi[0] - lo[0]) / h))
    ny = int(np.ceil((hi[1] - lo[1]) / h))
    origin = (float(lo[0]), float(lo[1]))

    interior = np.zeros((ny, nx), dtype=bool)
    edges = boundary.edges
    p, q = edges[:, 0], edges[:, 1]
    y_lo = np.minimum(p[:, 1], q[:, 1])
    y_hi = np.maximum(p[:, 1], q[:, 1])
    ys = origin[1] + (np.arange(ny) + 0.5) * h
    # per-edge row spans; accumulate x-crossings row by row
    crossings = [[] for _ in range(ny)]
    j0 = np.clip(np.ceil((y_lo - origin[1]) / h - 0.5).astype(int), 0, ny)
    j1 = np.clip(np.floor((y_hi - origin[1]) / h - 0.5).astype(int), -1, ny - 1)
    for e in range(len(edges)):
        if j0[e] > j1[e]:
            continue
        py, qy = p[e, 1], q[e, 1]
        if py == qy:
            continue
        rows = np.arange(j0[e], j1[e] + 1)
        yy = ys[rows]
        # half-open rule [min, max): avoids double counting at shared vertices
        sel = (yy >= y_lo[e]) & (yy < y_hi[e])
        rows, yy = rows[sel], yy[sel]
        xx = p[e, 0] + (yy - py) * (q[e, 0] - p[e, 0]) / (qy - py)
        for row, x in zip(rows, xx):
            crossings[row].append(x)
    for row in range(ny):
        xs = sorted(crossings[row])
        for a, b in zip(xs[0::2], xs[1::2]):
            i0 = int(np.ceil((a - origin[0]) / h - 0.5))
            i1 = int(np.floor((b - origin[0]) / h - 0.5))
            if i1 >= i0:
                interior[row, max(i0, 0):min(i1, nx - 1) + 1] = True

    if keep_largest:
        labels, n_comp = ndimage.label(interior)
        if n_comp > 1:
            sizes = ndimage.sum_labels(interior, labels, np.arange(1, n_comp + 1))
            interior = labels == (1 + int(np.argmax(sizes)))
    rim = ndimage.binary_dilation(interior, structure=np.ones((3, 3), bool)) & ~interior
    return GridDomain(h=h, origin=origin, interior_mask=interior, boundary_mask=rim)


def sector_polygon(system: SelfSimilarSystem, depth: int) -> Polyline:
    """Region subordinate to one von Koch curve: curve plus its base segment."""
    curve = prefractal_curve(system, depth).vertices
    if depth == 0:
        # degenerate: the bare base segment
        return Polyline(vertices=curve, closed=False)
    # reversed so the closed region is traversed counterclockwise
    return Polyline(vertices=curve[::-1], closed=True)


def middle_gap_polygon(system: SelfSimilarSystem) -> Polyline:
    """The regular n-gon spanning the middle gap of a GKF curve."""
    n, r = system.meta["n"], system.meta["r"]
    ell = (1 - r) / 2
    pts = [np.array([ell, 0.0])]
    for psi in system.maps[1:n]:
        pts.append(psi(np.array([1.0, 0.0])))
    # reversed so the polygon is counterclockwise
    return Polyline(vertices=np.array(pts)[::-1], closed=True)


def osculating_residual(system: SelfSimilarSystem, depth: int):
    """Residual polygon(s) of one curve-subordinate sector after removing
    the n+1 scaled copies.

    The depth-d sector decomposes exactly into the map images of the
    depth-(d-1) sector plus the middle n-gon, so the residual is the gap
    polygon; at depth 0 the whole (degenerate) sector is returned.
    """
    if "n" not in system.meta:
        raise ValueError("osculating_residual needs a GKF system")
    if depth == 0:
        return [sector_polygon(system, 0)]
    return [middle_gap_polygon(system)]


def residual_area_fraction(system: SelfSimilarSystem) -> float:
    """1 - sum of squared scaling ratios: the residual's area share of the sector."""
    ratios, mults = system.distinct_ratios()
    return 1.0 - sum(m * r * r for r, m in zip(ratios, mults))
