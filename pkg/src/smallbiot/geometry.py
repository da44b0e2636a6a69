"""
Shape descriptions and geometric measures.

A :class:`ShapeSpec` is an immutable description of a 1D interval or a 2D
polygon/disk, with all coordinates dimensionless (in units of the extrinsic
length scale). Everything here is a pure function of its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

KINDS = ("interval", "polygon", "disk")


@dataclass(frozen=True)
class ShapeSpec:
    """Analytic description of a domain.

    ``kind`` is one of ``interval``, ``polygon`` or ``disk``. A polygon
    holds its counterclockwise vertex list; a disk holds its radius and the
    number of boundary segments used when it is meshed. ``name`` is purely
    informational (e.g. ``"sart2"``).
    """

    kind: str
    length: float | None = None
    vertices: tuple[tuple[float, float], ...] | None = None
    radius: float | None = None
    segments: int = 256
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown shape kind {self.kind!r}")
        if self.kind == "interval":
            if self.length is None or not self.length > 0:
                raise ValueError("interval length must be > 0")
        elif self.kind == "disk":
            if self.radius is None or not self.radius > 0:
                raise ValueError("disk radius must be > 0")
            if self.segments < 3:
                raise ValueError("disk needs at least 3 boundary segments")
        else:
            _check_polygon(np.asarray(self.vertices, dtype=float))

    @property
    def dim(self) -> int:
        return 1 if self.kind == "interval" else 2

    def polygon(self) -> np.ndarray:
        """Vertex array (n, 2); a disk becomes its inscribed regular polygon."""
        if self.kind == "polygon":
            return np.asarray(self.vertices, dtype=float)
        if self.kind == "disk":
            th = 2 * np.pi * np.arange(self.segments) / self.segments
            return self.radius * np.column_stack([np.cos(th), np.sin(th)])
        raise ValueError("an interval has no polygon")

    def scaled(self, s: float) -> "ShapeSpec":
        if self.kind == "interval":
            return ShapeSpec("interval", length=self.length * s, name=self.name)
        if self.kind == "disk":
            return ShapeSpec("disk", radius=self.radius * s,
                             segments=self.segments, name=self.name)
        v = tuple((s * x, s * y) for x, y in self.vertices)
        return ShapeSpec("polygon", vertices=v, name=self.name)

    def transformed(self, angle: float = 0.0,
                    shift: Sequence[float] = (0.0, 0.0)) -> "ShapeSpec":
        """Rotate by ``angle`` (radians) about the origin, then translate."""
        if self.kind != "polygon":
            raise ValueError("only polygons can be rotated/translated")
        c, s = math.cos(angle), math.sin(angle)
        v = tuple((c * x - s * y + shift[0], s * x + c * y + shift[1])
                  for x, y in self.vertices)
        return ShapeSpec("polygon", vertices=v, name=self.name)


@dataclass(frozen=True)
class ShapeMeasures:
    volume: float
    boundary: float
    gamma: float
    intrinsic_length: float
    diameter: float
    inradius: float
    dim: int = 2
    extra: dict = field(default_factory=dict, compare=False)


def interval(length: float = 1.0) -> ShapeSpec:
    return ShapeSpec("interval", length=float(length), name="interval")


def polygon(vertices, name: str = "") -> ShapeSpec:
    v = tuple((float(x), float(y)) for x, y in vertices)
    return ShapeSpec("polygon", vertices=v, name=name)


def disk(radius: float = 1.0, segments: int = 256) -> ShapeSpec:
    return ShapeSpec("disk", radius=float(radius), segments=int(segments), name="disk")


def rectangle(a: float = 1.0, b: float = 1.0) -> ShapeSpec:
    return polygon([(0, 0), (a, 0), (a, b), (0, b)], name="rect")


def right_triangle(w: float) -> ShapeSpec:
    """Right triangle with vertices (0,0), (w,0), (0,1)."""
    return polygon([(0, 0), (w, 0), (0, 1)], name=f"right-triangle({w:g})")


def finned_block(fin_length: float = 8.0, fin_height: float = 0.2) -> ShapeSpec:
    """A 4 x 2 block with a ``fin_length`` x ``fin_height`` fin on its left side.

    The fin is flush with the bottom edge of the block.
    """
    return polygon([(0, 0), (4, 0), (4, 2), (0, 2), (0, fin_height),
                    (-fin_length, fin_height), (-fin_length, 0)],
                   name=f"finned({fin_length:g},{fin_height:g})")


def sartc(w: float = 0.25, cut: float = 1e-4) -> ShapeSpec:
    """Right triangle (w) with its small-angle tip removed by a horizontal cut ``cut`` below the apex."""
    return polygon([(0, 0), (w, 0), (w * cut, 1 - cut), (0, 1 - cut)], name="sartc")


def rectsart(a: float = 2.0, b: float = 1.0, spike: float = 0.02,
             base: float = 0.005) -> ShapeSpec:
    """Rectangle ``a`` x ``b`` with a thin acute triangular spike on its upper-left vertex.

    The spike has its base on the top edge, from x=0 to x=``base``, and its
    tip at (-spike, b + spike): it continues the rectangle corner outward
    along the diagonal.
    """
    return polygon([(0, 0), (a, 0), (a, b), (base, b),
                    (-spike, b + spike), (0, b)], name="rectsart")


def _named_shapes():
    s3 = math.sqrt(3.0)
    return {
        "interval": lambda: interval(1.0),
        "square": lambda: _renamed(rectangle(1.0, 1.0), "square"),
        "rect": lambda a=2.0, b=1.0: rectangle(a, b),
        "disk": lambda r=1.0, n=256: disk(r, int(n)),
        "sart1": lambda: _renamed(right_triangle(0.25), "sart1"),
        "sart2": lambda: _renamed(right_triangle(1 / 16), "sart2"),
        "sartc": lambda: sartc(),
        "rectsart": lambda: rectsart(),
        "finned": lambda L=8.0, H=0.2: finned_block(L, H),
        "equilateral": lambda: polygon([(0, 0), (1, 0), (0.5, s3 / 2)], name="equilateral"),
        "isoceles-right": lambda: polygon([(0, 0), (1, 0), (0, 1)], name="isoceles-right"),
        "right-triangle": lambda w=0.25: right_triangle(w),
    }


NAMED_SHAPES = tuple(_named_shapes())


def _renamed(shape: ShapeSpec, name: str) -> ShapeSpec:
    return ShapeSpec(shape.kind, shape.length, shape.vertices, shape.radius,
                     shape.segments, name)


def named_shape(spec: str) -> ShapeSpec:
    """Build a built-in shape from ``name`` or ``name:p1,p2``, e.g. ``finned:8,0.2``."""
    name, _, args = spec.partition(":")
    table = _named_shapes()
    name = name.strip().lower().replace("_", "-")
    if name == "isosceles-right":
        name = "isoceles-right"
    if name not in table:
        raise ValueError(f"unknown shape {spec!r}; known: {', '.join(table)}")
    params = [float(a) for a in args.split(",") if a.strip()] if args else []
    return table[name](*params)


# ---------------------------------------------------------------------------
# polygon primitives
# ---------------------------------------------------------------------------

def signed_area(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _segments_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 * d2 != 0 and d3 * d4 != 0:
        return True
    return False


def _check_polygon(v: np.ndarray) -> None:
    if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
        raise ValueError("polygon needs at least 3 (x, y) vertices")
    diam = _diameter(v)
    area = signed_area(v)
    if abs(area) < 1e-12 * diam ** 2:
        raise ValueError(f"degenerate polygon: area {area:g} below 1e-12 * diameter^2")
    if area < 0:
        raise ValueError("polygon vertices must be counterclockwise")
    n = len(v)
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                raise ValueError(f"polygon is self-intersecting (edges {i} and {j})")


def _diameter(v: np.ndarray) -> float:
    d = v[:, None, :] - v[None, :, :]
    return float(np.sqrt((d ** 2).sum(-1)).max())


def points_in_polygon(points: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Even-odd rule membership test; boundary points may go either way."""
    points = np.atleast_2d(points)
    x, y = points[:, 0:1], points[:, 1:2]
    x0, y0 = v[:, 0], v[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    crosses = (y0 > y) != (y1 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
    hits = crosses & (x < xint)
    return (hits.sum(axis=1) % 2) == 1


def distance_to_boundary(points: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Euclidean distance from each point to the polygon boundary."""
    points = np.atleast_2d(points)
    a = v
    b = np.roll(v, -1, axis=0)
    ab = b - a
    L2 = (ab ** 2).sum(1)
    out = np.full(len(points), np.inf)
    # chunk to bound memory for large sample sets
    for k in range(0, len(points), 4096):
        p = points[k:k + 4096, None, :]
        t = np.clip(((p - a) * ab).sum(-1) / L2, 0.0, 1.0)
        d = p - (a + t[..., None] * ab)
        out[k:k + 4096] = np.sqrt((d ** 2).sum(-1)).min(axis=1)
    return out


def signed_distance(points: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Distance to the boundary, positive inside and negative outside."""
    d = distance_to_boundary(points, v)
    return np.where(points_in_polygon(points, v), d, -d)


def inradius(v: np.ndarray, rtol: float = 1e-4) -> tuple[float, np.ndarray]:
    """Radius and centre of the largest disk inside the polygon ``v``.

    Coarse grid search followed by Nelder-Mead on the signed distance from
    the few best grid points.
    """
    lo, hi = v.min(0), v.max(0)
    diam = _diameter(v)
    n = 80
    gx = np.linspace(lo[0], hi[0], n)
    gy = np.linspace(lo[1], hi[1], n)
    g = np.column_stack([a.ravel() for a in np.meshgrid(gx, gy)])
    # include edge midpoints pushed inward: thin shapes may miss every grid point
    mids = 0.5 * (v + np.roll(v, -1, axis=0))
    g = np.vstack([g, mids, v.mean(0, keepdims=True)])
    sd = signed_distance(g, v)
    starts = g[np.argsort(-sd)[:8]]
    best_r, best_c = -np.inf, starts[0]
    for x0 in starts:
        res = minimize(lambda c: -signed_distance(c[None, :], v)[0], x0,
                       method="Nelder-Mead",
                       options={"xatol": 1e-3 * rtol * diam, "fatol": 1e-3 * rtol * diam,
                                "maxiter": 4000})
        if -res.fun > best_r:
            best_r, best_c = -res.fun, res.x
    return float(best_r), np.asarray(best_c)


# ---------------------------------------------------------------------------
# measures
# ---------------------------------------------------------------------------

def measures(shape: ShapeSpec) -> ShapeMeasures:
    """Volume, boundary measure, gamma = |dOmega|/|Omega|, diameter and InRadius."""
    if shape.kind == "interval":
        L = shape.length
        # the boundary of an interval is two points
        return ShapeMeasures(L, 2.0, 2.0 / L, L / 2.0, L, L / 2.0, dim=1)
    if shape.kind == "disk":
        r = shape.radius
        return ShapeMeasures(math.pi * r * r, 2 * math.pi * r, 2.0 / r, r / 2.0,
                             2 * r, r, dim=2)
    v = shape.polygon()
    area = signed_area(v)
    perim = float(np.sqrt(((np.roll(v, -1, axis=0) - v) ** 2).sum(1)).sum())
    r, centre = inradius(v)
    return ShapeMeasures(area, perim, perim / area, area / perim, _diameter(v), r,
                         dim=2, extra={"incentre": tuple(centre)})


def measures_3d(volume: float, boundary: float, inradius: float,
                diameter: float = float("nan")) -> ShapeMeasures:
    """Measures for a 3D body given directly (no 3D shapes are meshed)."""
    return ShapeMeasures(volume, boundary, boundary / volume, volume / boundary,
                         diameter, inradius, dim=3)


# ---------------------------------------------------------------------------
# distance and classification feature
# ---------------------------------------------------------------------------

def _boundary_samples(v: np.ndarray, spacing: float) -> np.ndarray:
    pts = []
    n = len(v)
    for i in range(n):
        a, b = v[i], v[(i + 1) % n]
        k = max(1, int(math.ceil(np.linalg.norm(b - a) / spacing)))
        t = np.arange(k)[:, None] / k
        pts.append(a + t * (b - a))
    return np.vstack(pts)


def _interior_samples(v: np.ndarray, spacing: float) -> np.ndarray:
    lo, hi = v.min(0), v.max(0)
    gx = np.arange(lo[0], hi[0] + spacing, spacing)
    gy = np.arange(lo[1], hi[1] + spacing, spacing)
    g = np.column_stack([a.ravel() for a in np.meshgrid(gx, gy)])
    return g[points_in_polygon(g, v)]


def _one_sided(samples: np.ndarray, target: np.ndarray) -> float:
    inside = points_in_polygon(samples, target)
    d = distance_to_boundary(samples[~inside], target) if (~inside).any() else np.zeros(1)
    return float(d.max())


def hausdorff_distance(a: ShapeSpec, b: ShapeSpec, rel_spacing: float = 1e-3,
                       full: bool = False):
    """Hausdorff distance between two closed 2D regions.

    Boundaries are sampled with spacing at most ``rel_spacing`` times the
    larger diameter, interiors on a coarser grid. With ``full=True`` returns
    ``(distance, sampling_bound)``; the distance function is 1-Lipschitz so
    the true value lies within ``sampling_bound`` of the returned one.
    """
    if a.dim != 2 or b.dim != 2:
        raise ValueError("hausdorff_distance needs two 2D shapes")
    va, vb = a.polygon(), b.polygon()
    diam = max(_diameter(va), _diameter(vb))
    h = rel_spacing * diam
    hi = 10 * h
    sa = np.vstack([va, _boundary_samples(va, h), _interior_samples(va, hi)])
    sb = np.vstack([vb, _boundary_samples(vb, h), _interior_samples(vb, hi)])
    d = max(_one_sided(sa, vb), _one_sided(sb, va))
    bound = hi / math.sqrt(2)
    return (d, bound) if full else d


def shape_distance(a: ShapeSpec, b: ShapeSpec, c1: float = 0.5, c2: float = 0.5) -> float:
    """Scale-invariant shape distance mixing Hausdorff distance and perimeter mismatch.

    Shapes are compared as given: no registration is attempted.
    """
    if not (c1 > 0 and c2 > 0 and abs(c1 + c2 - 1.0) < 1e-12):
        raise ValueError("weights must be positive and sum to 1")
    ma, mb = measures(a), measures(b)
    dh = hausdorff_distance(a, b)
    return (c1 * dh + c2 * abs(ma.boundary - mb.boundary)) / max(ma.diameter, mb.diameter)


def feature_F(shape: ShapeSpec | ShapeMeasures) -> float:
    """Classification feature; a lower bound for phi (homogeneous properties).

    Accepts a 2D shape or precomputed measures (the only route for 3D bodies).
    """
    m = measures(shape) if isinstance(shape, ShapeSpec) else shape
    if m.dim == 2:
        return math.pi * m.boundary ** 2 * m.inradius ** 4 / (8 * m.volume ** 3)
    if m.dim == 3:
        return 4 * math.pi * m.boundary ** 2 * m.inradius ** 5 / (45 * m.volume ** 3)
    raise ValueError("feature_F is defined for 2D and 3D domains")


# ---------------------------------------------------------------------------
# shape files
# ---------------------------------------------------------------------------

def save_shape(shape: ShapeSpec, path) -> None:
    """Write the one-shape-per-file text format."""
    lines = [shape.kind]
    if shape.kind == "interval":
        lines.append(repr(shape.length))
    elif shape.kind == "disk":
        lines.append(f"{shape.radius!r} {shape.segments}")
    else:
        lines += [f"{x!r} {y!r}" for x, y in shape.vertices]
    Path(path).write_text("\n".join(lines) + "\n")


def load_shape(path) -> ShapeSpec:
    """Read a shape file: line 1 is the kind, then kind-specific lines.

    ``interval``: one line with the length. ``disk``: ``radius [segments]``.
    ``polygon``: one ``x y`` pair per line. ``named``: one line such as
    ``finned:8,0.2``.
    """
    text = [ln.split("#", 1)[0].strip() for ln in Path(path).read_text().splitlines()]
    rows = [(i + 1, ln) for i, ln in enumerate(text) if ln]
    if not rows:
        raise ValueError(f"{path}: empty shape file")
    kind = rows[0][1].lower()
    body = rows[1:]
    try:
        if kind == "interval":
            return interval(float(body[0][1]))
        if kind == "disk":
            parts = body[0][1].split()
            return disk(float(parts[0]), int(parts[1]) if len(parts) > 1 else 256)
        if kind in ("named", "canonical", "canonical-named"):
            return named_shape(body[0][1])
        if kind == "polygon":
            verts = []
            for lineno, ln in body:
                parts = ln.split()
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: expected 'x y', got {ln!r}")
                verts.append((float(parts[0]), float(parts[1])))
            return polygon(verts, name=Path(path).stem)
    except IndexError:
        raise ValueError(f"{path}: missing data for kind {kind!r}") from None
    raise ValueError(f"{path}:{rows[0][0]}: unknown shape kind {kind!r}")
