"""
Conforming meshes: 1D partitions and 2D triangulations with boundary tagging.

Triangulations come from a Delaunay-refinement loop in the spirit of
Ruppert's algorithm: boundary subsegments are split while encroached, and
circumcentres of skinny or oversized triangles are inserted. The Delaunay
triangulation itself is recomputed from scratch by Qhull at every pass.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .geometry import ShapeSpec, measures, points_in_polygon, signed_area

log = logging.getLogger(__name__)


class MeshError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable mesh.

    nodes: (nv, dim) coordinates. elements: (ne, dim+1) vertex indices,
    counterclockwise in 2D and left-to-right in 1D. boundary_facets:
    (nb, dim) vertex indices, oriented so the domain is on the left.
    element_region: (ne,) region ids for piecewise materials.
    """

    nodes: np.ndarray
    elements: np.ndarray
    boundary_facets: np.ndarray
    element_region: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("nodes", "elements", "boundary_facets", "element_region"):
            arr = getattr(self, name)
            arr.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    def element_volumes(self) -> np.ndarray:
        x = self.nodes
        e = self.elements
        if self.dim == 1:
            return x[e[:, 1], 0] - x[e[:, 0], 0]
        a, b, c = x[e[:, 0]], x[e[:, 1]], x[e[:, 2]]
        return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                      - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))

    def volume(self) -> float:
        return float(self.element_volumes().sum())

    def boundary_measure(self) -> float:
        if self.dim == 1:
            return float(len(self.boundary_facets))
        d = self.nodes[self.boundary_facets[:, 1]] - self.nodes[self.boundary_facets[:, 0]]
        return float(np.sqrt((d ** 2).sum(1)).sum())

    def centroids(self) -> np.ndarray:
        return self.nodes[self.elements].mean(axis=1)

    def regions(self) -> np.ndarray:
        return np.unique(self.element_region)

    def region_volumes(self) -> dict[int, float]:
        vol = self.element_volumes()
        return {int(r): float(vol[self.element_region == r].sum()) for r in self.regions()}

    def with_regions(self, region) -> "Mesh":
        """Copy with new region ids: an array, or a callable on element centroids."""
        reg = region(self.centroids()) if callable(region) else region
        reg = np.asarray(reg, dtype=np.int64).copy()
        if reg.shape != (self.n_elements,):
            raise MeshError("need one region id per element")
        return replace(self, element_region=reg)

    def transformed(self, scale: float = 1.0, angle: float = 0.0, shift=None) -> "Mesh":
        """Dilated, rotated (2D) and translated copy with identical connectivity."""
        x = self.nodes * scale
        if self.dim == 2 and angle:
            c, s = math.cos(angle), math.sin(angle)
            x = x @ np.array([[c, s], [-s, c]])
        if shift is not None:
            x = x + np.asarray(shift, dtype=float)
        return replace(self, nodes=np.ascontiguousarray(x))

    def min_angle(self) -> float:
        """Smallest interior angle in degrees (2D only)."""
        return float(np.degrees(_triangle_angles(self.nodes, self.elements).min()))


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _edges_of(elements: np.ndarray) -> np.ndarray:
    return np.concatenate([elements[:, [0, 1]], elements[:, [1, 2]], elements[:, [2, 0]]])


def validate(mesh: Mesh, shape: ShapeSpec | None = None, rtol: float = 1e-10) -> None:
    """Check orientation, conformity, boundary tagging and (optionally) total volume."""
    vol = mesh.element_volumes()
    bad = np.flatnonzero(vol <= 0)
    if bad.size:
        what = "clockwise triangle" if mesh.dim == 2 else "reversed segment"
        raise MeshError(f"element {bad[0]}: {what} (signed volume {vol[bad[0]]:g})")
    if mesh.element_region.shape != (mesh.n_elements,):
        raise MeshError("element_region must have one entry per element")
    if mesh.dim == 1:
        e = mesh.elements
        count = np.bincount(e.ravel(), minlength=mesh.n_nodes)
        if (count > 2).any():
            raise MeshError(f"node {np.flatnonzero(count > 2)[0]} shared by more than 2 segments")
        ends = set(np.flatnonzero(count == 1).tolist())
        if ends != set(mesh.boundary_facets.ravel().tolist()):
            raise MeshError(f"boundary points {sorted(ends)} do not match boundary block")
    else:
        edges = _edges_of(mesh.elements)
        directed = {}
        for k, (a, b) in enumerate(edges.tolist()):
            if (a, b) in directed:
                raise MeshError(f"facet ({a}, {b}) appears twice with the same orientation")
            directed[(a, b)] = k
        single = {(a, b) for (a, b) in directed if (b, a) not in directed}
        tagged = {tuple(f) for f in mesh.boundary_facets.tolist()}
        for f in sorted(single - tagged):
            raise MeshError(f"non-conforming facet {f}: used by one element but not tagged as boundary")
        for f in sorted(tagged - single):
            raise MeshError(f"boundary facet {f} is not a facet of exactly one element")
    if shape is not None:
        exact = measures(shape).volume if shape.kind != "disk" else abs(signed_area(shape.polygon()))
        if abs(vol.sum() - exact) > rtol * exact:
            raise MeshError(f"element volumes sum to {vol.sum()!r}, expected {exact!r}")


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

def _triangle_angles(x: np.ndarray, t: np.ndarray) -> np.ndarray:
    p = x[t]
    out = np.empty(t.shape)
    for i in range(3):
        u = p[:, (i + 1) % 3] - p[:, i]
        v = p[:, (i + 2) % 3] - p[:, i]
        cos = (u * v).sum(1) / np.sqrt((u * u).sum(1) * (v * v).sum(1))
        out[:, i] = np.arccos(np.clip(cos, -1.0, 1.0))
    return out


def _circumcentres(x: np.ndarray, t: np.ndarray):
    a, b, c = x[t[:, 0]], x[t[:, 1]], x[t[:, 2]]
    ab, ac = b - a, c - a
    d = 2.0 * (ab[:, 0] * ac[:, 1] - ab[:, 1] * ac[:, 0])
    ab2, ac2 = (ab ** 2).sum(1), (ac ** 2).sum(1)
    ux = (ac[:, 1] * ab2 - ab[:, 1] * ac2) / d
    uy = (ab[:, 0] * ac2 - ac[:, 0] * ab2) / d
    off = np.column_stack([ux, uy])
    return a + off, np.sqrt((off ** 2).sum(1))


def _interval_mesh(shape: ShapeSpec, target_h: float) -> Mesh:
    n = max(1, int(math.ceil(shape.length / target_h - 1e-12)))
    x = np.linspace(0.0, shape.length, n + 1)[:, None]
    e = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    return Mesh(x, e, np.array([[0], [n]]), np.zeros(n, dtype=np.int64),
                info={"shape": shape.name or "interval", "level": 0})


class _Segments:
    """Boundary subsegments with concentric-shell splitting at input vertices."""

    def __init__(self, poly: np.ndarray):
        self.n_input = len(poly)
        self.pts = [tuple(p) for p in poly]
        n = len(poly)
        self.segs = [(i, (i + 1) % n) for i in range(n)]

    def split_point(self, a: int, b: int) -> tuple[float, float]:
        pa, pb = np.array(self.pts[a]), np.array(self.pts[b])
        L = float(np.linalg.norm(pb - pa))
        a_in, b_in = a < self.n_input, b < self.n_input
        if a_in != b_in:
            # split at a power-of-two distance from the input vertex so that
            # both segments of a small corner get matching splits
            origin, other = (pa, pb) if a_in else (pb, pa)
            d = 2.0 ** round(math.log2(L / 2))
            if not (0.25 * L <= d <= 0.75 * L):
                d = L / 2
            return tuple(origin + (other - origin) * (d / L))
        return tuple(0.5 * (pa + pb))

    def split(self, k: int) -> None:
        a, b = self.segs[k]
        m = len(self.pts)
        self.pts.append(self.split_point(a, b))
        self.segs[k] = (a, m)
        self.segs.append((m, b))


def generate(shape: ShapeSpec, target_h: float, min_angle: float = 20.0,
             max_points: int = 400_000) -> Mesh:
    """Quality mesh of ``shape`` with element size about ``target_h``.

    Triangles whose smallest angle is below ``min_angle`` are refined unless
    that angle sits in a corner of the input polygon sharper than 60 degrees,
    where the quality bound is unattainable. Disks are meshed as their
    inscribed polygon.
    """
    if not target_h > 0:
        raise ValueError("target_h must be > 0")
    if shape.kind == "interval":
        return _interval_mesh(shape, target_h)

    poly = shape.polygon()
    n_in = len(poly)
    # input-corner angles, to recognise unfixable skinny triangles
    prev, nxt = np.roll(poly, 1, axis=0), np.roll(poly, -1, axis=0)
    u, v = prev - poly, nxt - poly
    corner = np.arccos(np.clip((u * v).sum(1) / np.sqrt((u * u).sum(1) * (v * v).sum(1)), -1, 1))
    sharp = set(np.flatnonzero(corner < np.radians(60.0)).tolist())

    segs = _Segments(poly)
    # boundary subsegments no longer than target_h
    changed = True
    while changed:
        changed = False
        for k in range(len(segs.segs)):
            a, b = segs.segs[k]
            if np.linalg.norm(np.subtract(segs.pts[a], segs.pts[b])) > target_h:
                segs.split(k)
                changed = True

    ratio_bound = 1.0 / (2.0 * math.sin(math.radians(min_angle)))
    size_bound = target_h / math.sqrt(3.0)
    diam = float(np.sqrt(((poly[:, None] - poly[None]) ** 2).sum(-1)).max())
    floor = 1e-7 * diam

    for it in range(500):
        X = np.asarray(segs.pts)
        if len(X) > max_points:
            raise MeshError(f"mesh generation exceeded {max_points} points")
        tree = cKDTree(X)
        S = np.asarray(segs.segs)
        mid = 0.5 * (X[S[:, 0]] + X[S[:, 1]])
        rad = 0.5 * np.linalg.norm(X[S[:, 1]] - X[S[:, 0]], axis=1)
        enc = []
        for k, hits in enumerate(tree.query_ball_point(mid, rad * (1 + 1e-9))):
            a, b = S[k]
            if any(h != a and h != b for h in hits):
                enc.append(k)
        if enc:
            for k in enc:
                if rad[k] > floor:
                    segs.split(k)
            if all(rad[k] <= floor for k in enc):
                break
            continue

        tri = Delaunay(X).simplices
        tri = tri[points_in_polygon(X[tri].mean(axis=1), poly)]
        # every subsegment must be a triangulation edge; split any that is not
        edge_set = {tuple(sorted(e)) for e in _edges_of(tri).tolist()}
        missing = [k for k, (a, b) in enumerate(segs.segs) if (min(a, b), max(a, b)) not in edge_set]
        if missing:
            for k in missing:
                segs.split(k)
            continue

        cc, R = _circumcentres(X, tri)
        P = X[tri]
        elen = np.stack([np.linalg.norm(P[:, 1] - P[:, 0], axis=1),
                         np.linalg.norm(P[:, 2] - P[:, 1], axis=1),
                         np.linalg.norm(P[:, 0] - P[:, 2], axis=1)], axis=1)
        shortest = elen.min(1)
        skinny = R / shortest > ratio_bound
        if sharp and skinny.any():
            # exempt triangles whose smallest angle sits at a sharp input corner
            # or whose shortest edge spans the two sides of a sharp corner
            ang = _triangle_angles(X, tri)
            at = tri[np.arange(len(tri)), ang.argmin(1)]
            exempt = np.isin(at, list(sharp))
            sk = np.flatnonzero(skinny & ~exempt)
            if sk.size:
                onb = _boundary_corner_map(segs, sharp, n_in)
                k_short = elen[sk].argmin(1)
                p0 = tri[sk, k_short]
                p1 = tri[sk, (k_short + 1) % 3]
                for j, (q0, q1) in zip(sk, zip(p0, p1)):
                    c0, c1 = onb.get(int(q0)), onb.get(int(q1))
                    if c0 is not None and c1 is not None and c0[0] == c1[0] and c0[1] != c1[1]:
                        exempt[j] = True
            skinny &= ~exempt
        big = R > size_bound
        bad = (skinny & (shortest > floor)) | big
        if not bad.any():
            break
        order = np.argsort(-(R / shortest) * bad)[: int(bad.sum())]
        keep = _thin_candidates(cc[order], R[order])
        # a candidate encroaching a subsegment is rejected and the subsegment split
        seg_tree = cKDTree(mid)
        to_split = set()
        new_pts = []
        inside = points_in_polygon(keep, poly)
        for p, ok in zip(keep, inside):
            near = seg_tree.query_ball_point(p, rad.max() * (1 + 1e-9))
            e = [k for k in near if np.linalg.norm(mid[k] - p) < rad[k] * (1 + 1e-9)]
            if e:
                to_split.update(e)
            elif ok:
                new_pts.append(tuple(p))
        for k in sorted(to_split):
            if rad[k] > floor:
                segs.split(k)
        segs.pts.extend(new_pts)
        if not to_split and not new_pts:
            break
    else:
        log.warning("mesh refinement stopped after the iteration limit")

    X = np.asarray(segs.pts)
    tri = Delaunay(X).simplices
    tri = tri[points_in_polygon(X[tri].mean(axis=1), poly)]
    area = signed_area_rows(X, tri)
    tri[area < 0] = tri[area < 0][:, [0, 2, 1]]
    used = np.unique(tri)
    remap = -np.ones(len(X), dtype=np.int64)
    remap[used] = np.arange(len(used))
    X, tri = X[used], remap[tri]
    facets = _boundary_from_elements(tri)
    mesh = Mesh(np.ascontiguousarray(X), tri.astype(np.int64), facets,
                np.zeros(len(tri), dtype=np.int64),
                info={"shape": shape.name, "level": 0, "target_h": target_h})
    validate(mesh)
    achieved = mesh.min_angle()
    mesh.info["min_angle"] = achieved
    if achieved < min_angle and not sharp:
        log.warning("achieved minimum angle %.2f deg below target %.1f", achieved, min_angle)
    return mesh


def signed_area_rows(X: np.ndarray, tri: np.ndarray) -> np.ndarray:
    a, b, c = X[tri[:, 0]], X[tri[:, 1]], X[tri[:, 2]]
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


def _thin_candidates(cand: np.ndarray, radius: np.ndarray) -> np.ndarray:
    """Greedily drop candidates within half a circumradius of one already kept."""
    kept = []
    tree = cKDTree(cand)
    alive = np.ones(len(cand), dtype=bool)
    for i in range(len(cand)):
        if not alive[i]:
            continue
        kept.append(i)
        for j in tree.query_ball_point(cand[i], 0.5 * radius[i]):
            if j > i:
                alive[j] = False
    return cand[kept]


def _boundary_corner_map(segs: _Segments, sharp: set, n_in: int) -> dict:
    """For points on a segment chain adjacent to a sharp corner: point -> (corner, side)."""
    out = {}
    # walk the boundary chain from each sharp corner in both directions
    nxt = {a: b for a, b in segs.segs}
    prv = {b: a for a, b in segs.segs}
    for c in sharp:
        for side, step in ((0, nxt), (1, prv)):
            p = step[c]
            while p >= n_in:
                out[p] = (c, side)
                p = step[p]
    return out


def _boundary_from_elements(tri: np.ndarray) -> np.ndarray:
    edges = _edges_of(tri)
    key = np.sort(edges, axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    return edges[counts[inv.ravel()] == 1].astype(np.int64)


# ---------------------------------------------------------------------------
# refinement
# ---------------------------------------------------------------------------

def refine_uniform(mesh: Mesh) -> Mesh:
    """Split every triangle into four congruent children (segments into two).

    New nodes are edge midpoints; they are not projected onto curved
    boundaries.
    """
    x = mesh.nodes
    info = dict(mesh.info, level=mesh.info.get("level", 0) + 1)
    if mesh.dim == 1:
        e = mesh.elements
        m = np.arange(len(x), len(x) + len(e))
        xn = np.vstack([x, 0.5 * (x[e[:, 0]] + x[e[:, 1]])])
        en = np.vstack([np.column_stack([e[:, 0], m]), np.column_stack([m, e[:, 1]])])
        reg = np.concatenate([mesh.element_region, mesh.element_region])
        # keep elements ordered left to right when the input was
        order = np.argsort(xn[en[:, 0], 0], kind="stable")
        return Mesh(xn, en[order], mesh.boundary_facets.copy(), reg[order], info=info)
    t = mesh.elements
    edges = _edges_of(t)
    key = np.sort(edges, axis=1)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.ravel()
    mids = 0.5 * (x[uniq[:, 0]] + x[uniq[:, 1]])
    xn = np.vstack([x, mids])
    ne = len(t)
    m01 = len(x) + inv[:ne]
    m12 = len(x) + inv[ne:2 * ne]
    m20 = len(x) + inv[2 * ne:]
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    tn = np.vstack([np.column_stack([a, m01, m20]),
                    np.column_stack([m01, b, m12]),
                    np.column_stack([m20, m12, c]),
                    np.column_stack([m01, m12, m20])])
    reg = np.tile(mesh.element_region, 4)
    # boundary facets: look up midpoints by sorted key
    lookup = {tuple(k): i for i, k in enumerate(uniq.tolist())}
    f = mesh.boundary_facets
    fm = np.array([len(x) + lookup[(min(p, q), max(p, q))] for p, q in f.tolist()], dtype=np.int64)
    fn = np.vstack([np.column_stack([f[:, 0], fm]), np.column_stack([fm, f[:, 1]])])
    return Mesh(xn, tn.astype(np.int64), fn, reg, info=info)


def refinement_sequence(mesh: Mesh, levels: int) -> list[Mesh]:
    """``levels`` meshes: the input followed by successive uniform refinements."""
    out = [mesh]
    for _ in range(levels - 1):
        out.append(refine_uniform(out[-1]))
    return out


# ---------------------------------------------------------------------------
# file I/O
# ---------------------------------------------------------------------------

def save(mesh: Mesh, path) -> None:
    """Text format: header ``dim nv ne nb nr``, then node, element and boundary blocks."""
    nr = len(mesh.regions())
    lines = [f"{mesh.dim} {mesh.n_nodes} {mesh.n_elements} {len(mesh.boundary_facets)} {nr}"]
    lines += [" ".join(repr(float(c)) for c in row) for row in mesh.nodes]
    lines += [" ".join(str(int(i)) for i in row) + f" {int(r)}"
              for row, r in zip(mesh.elements, mesh.element_region)]
    lines += [" ".join(str(int(i)) for i in row) for row in mesh.boundary_facets]
    Path(path).write_text("\n".join(lines) + "\n")


def load(path, check: bool = True) -> Mesh:
    """Read a mesh written by :func:`save`; errors carry file line numbers."""
    lines = Path(path).read_text().splitlines()

    def fail(lineno, msg):
        raise MeshError(f"{path}:{lineno}: {msg}")

    if not lines:
        fail(1, "empty file")
    try:
        dim, nv, ne, nb, nr = (int(s) for s in lines[0].split())
    except ValueError:
        fail(1, f"bad header {lines[0]!r}; expected 'dim nv ne nb nr'")
    if dim not in (1, 2):
        fail(1, f"dim must be 1 or 2, got {dim}")
    expected = 1 + nv + ne + nb
    if len(lines) < expected:
        fail(len(lines) + 1, f"file truncated: expected {expected} lines, got {len(lines)}")

    def row(lineno, n, conv):
        parts = lines[lineno - 1].split()
        if len(parts) != n:
            fail(lineno, f"expected {n} fields, got {len(parts)}")
        try:
            return [conv(p) for p in parts]
        except ValueError:
            fail(lineno, f"unparseable entry in {lines[lineno - 1]!r}")

    nodes = np.array([row(2 + i, dim, float) for i in range(nv)], dtype=float).reshape(nv, dim)
    start = 2 + nv
    erows = [row(start + i, dim + 2, int) for i in range(ne)]
    elems = np.array([r[:-1] for r in erows], dtype=np.int64).reshape(ne, dim + 1)
    reg = np.array([r[-1] for r in erows], dtype=np.int64)
    start += ne
    facets = np.array([row(start + i, dim, int) for i in range(nb)], dtype=np.int64).reshape(nb, dim)
    for arr, first, what in ((elems, 2 + nv, "element"), (facets, 2 + nv + ne, "facet")):
        bad = np.flatnonzero(((arr < 0) | (arr >= nv)).any(axis=1))
        if bad.size:
            fail(first + bad[0], f"{what} {bad[0]} references a node outside 0..{nv - 1}")
    if len(np.unique(reg)) != nr:
        fail(1, f"header declares {nr} regions, elements use {len(np.unique(reg))}")
    mesh = Mesh(nodes, elems, facets, reg, info={"source": str(path)})
    if check:
        validate(mesh)
    return mesh
