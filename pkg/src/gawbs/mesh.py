"""Triangular meshing of circular cross-sections with circular holes.

The mesher discretizes every circle into chords, then runs a batched
Ruppert-style refinement on top of a Delaunay triangulation:

* a boundary chord whose diametral circle contains another vertex is split at
  its arc midpoint (this keeps every chord a Delaunay edge, so the boundary is
  conforming without explicit edge constraints);
* a glass triangle that is too large for the local size field or whose minimum
  angle is below the quality bound receives its circumcenter, unless the
  circumcenter encroaches a chord, in which case the chord is split instead.

Coordinates are scaled to the unit disk while meshing.  The Delaunay kernel is
Qhull (via :mod:`scipy.spatial`), which is deterministic for identical input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .errors import MeshError, MeshParseError
from .geometry import FiberCrossSection

OUTER = -1
MAX_ROUNDS = 400


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Linear triangle mesh of the glass region.

    ``boundary_tags[e]`` is ``-1`` for an outer-boundary edge and the hole
    index ``i >= 0`` for an edge on hole ``i``.  Every triangle is glass.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "nodes", np.ascontiguousarray(self.nodes, dtype=float).reshape(-1, 2))
        object.__setattr__(self, "triangles", np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3))
        object.__setattr__(self, "boundary_edges",
                           np.ascontiguousarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2))
        object.__setattr__(self, "boundary_tags", np.ascontiguousarray(self.boundary_tags, dtype=np.int64))

    def __eq__(self, other):
        if not isinstance(other, TriMesh):
            return NotImplemented
        return (np.array_equal(self.nodes, other.nodes) and np.array_equal(self.triangles, other.triangles)
                and np.array_equal(self.boundary_edges, other.boundary_edges)
                and np.array_equal(self.boundary_tags, other.boundary_tags))

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def signed_areas(self):
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def centroids(self):
        return self.nodes[self.triangles].mean(axis=1)

    def min_angles(self):
        """Minimum interior angle of every triangle, in degrees."""
        return np.degrees(_triangle_angles(self.nodes[self.triangles]).min(axis=1))

    def edges(self):
        """Unique undirected edges as sorted index pairs."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def hole_loops(self):
        """Map hole index -> list of closed boundary loops (node index lists)."""
        loops = {}
        for tag in np.unique(self.boundary_tags):
            if tag < 0:
                continue
            edges = self.boundary_edges[self.boundary_tags == tag]
            loops[int(tag)] = _edge_loops(edges)
        return loops

    def scaled(self, s: float) -> "TriMesh":
        return TriMesh(self.nodes * s, self.triangles, self.boundary_edges, self.boundary_tags)


def _edge_loops(edges):
    nxt = {}
    for a, b in edges:
        nxt.setdefault(int(a), []).append(int(b))
        nxt.setdefault(int(b), []).append(int(a))
    seen, loops = set(), []
    for start in sorted(nxt):
        if start in seen:
            continue
        loop, prev, cur = [start], None, start
        seen.add(start)
        while True:
            cand = [v for v in nxt[cur] if v != prev]
            if not cand:
                break
            prev, cur = cur, cand[0]
            if cur == start:
                break
            if cur in seen:
                break
            loop.append(cur)
            seen.add(cur)
        loops.append(loop)
    return loops


def _triangle_angles(p):
    a = np.linalg.norm(p[:, 1] - p[:, 2], axis=1)
    b = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
    c = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        A = np.arccos(np.clip((b * b + c * c - a * a) / (2 * b * c), -1, 1))
        B = np.arccos(np.clip((a * a + c * c - b * b) / (2 * a * c), -1, 1))
    C = math.pi - A - B
    return np.stack([A, B, C], axis=1)


def _circumcenters(p):
    ax, ay = p[:, 0, 0], p[:, 0, 1]
    bx, by = p[:, 1, 0] - ax, p[:, 1, 1] - ay
    cx, cy = p[:, 2, 0] - ax, p[:, 2, 1] - ay
    d = 2.0 * (bx * cy - by * cx)
    b2, c2 = bx * bx + by * by, cx * cx + cy * cy
    ux = (cy * b2 - by * c2) / d
    uy = (bx * c2 - cx * b2) / d
    return np.stack([ax + ux, ay + uy], axis=1), np.hypot(ux, uy)


class _Circles:
    """Boundary circles in mesh units: index 0 is the outer circle."""

    def __init__(self, cs: FiberCrossSection, scale: float):
        self.centers = np.array([(0.0, 0.0)] + [h.center for h in cs.holes], dtype=float) * scale
        self.radii = np.array([cs.outer_radius] + [h.radius for h in cs.holes], dtype=float) * scale

    @staticmethod
    def cid(tag):
        return np.asarray(tag) + 1

    def project(self, pts, tags):
        c = self.centers[self.cid(tags)]
        r = self.radii[self.cid(tags)]
        d = pts - c
        return c + d * (r / np.hypot(d[:, 0], d[:, 1]))[:, None]


class _SizeField:
    def __init__(self, circles: _Circles, target_h, hole_h, grading):
        self.circles = circles
        self.target_h = target_h
        self.hole_h = np.asarray(hole_h, dtype=float)
        self.grading = grading

    def __call__(self, pts):
        h = np.full(len(pts), self.target_h)
        c, r = self.circles.centers[1:], self.circles.radii[1:]
        for i in range(len(r)):
            dist = np.maximum(np.hypot(pts[:, 0] - c[i, 0], pts[:, 1] - c[i, 1]) - r[i], 0.0)
            np.minimum(h, self.hole_h[i] + self.grading * dist, out=h)
        return h


class _Boundary:
    """Polygonal boundary: points on circles and the chords joining them."""

    def __init__(self, circles):
        self.circles = circles
        self.segs = np.empty((0, 2), dtype=np.int64)
        self.tags = np.empty(0, dtype=np.int64)

    def polygons(self, pts):
        """Per circle: sorted vertex angles and vertex coordinates."""
        polys = {}
        for tag in np.unique(self.tags):
            idx = np.unique(self.segs[self.tags == tag])
            c = self.circles.centers[tag + 1]
            ang = np.arctan2(pts[idx, 1] - c[1], pts[idx, 0] - c[0])
            order = np.argsort(ang)
            polys[int(tag)] = (ang[order], pts[idx[order]])
        return polys


def _inside_inscribed(q, center, ang, verts):
    """Points ``q`` strictly inside the convex polygon inscribed in a circle."""
    a = np.arctan2(q[:, 1] - center[1], q[:, 0] - center[0])
    k = np.searchsorted(ang, a) % len(ang)
    p0 = verts[k - 1]
    p1 = verts[k]
    cross = (p1[:, 0] - p0[:, 0]) * (q[:, 1] - p0[:, 1]) - (p1[:, 1] - p0[:, 1]) * (q[:, 0] - p0[:, 0])
    return cross > 0.0


def _glass(q, circles, polys):
    ok = _inside_inscribed(q, circles.centers[0], *polys[OUTER]) if OUTER in polys else \
        np.hypot(q[:, 0], q[:, 1]) < circles.radii[0]
    for tag, (ang, verts) in polys.items():
        if tag == OUTER:
            continue
        c = circles.centers[tag + 1]
        near = np.hypot(q[:, 0] - c[0], q[:, 1] - c[1]) <= circles.radii[tag + 1] * (1 + 1e-12)
        if near.any():
            inside = np.zeros(len(q), dtype=bool)
            inside[near] = _inside_inscribed(q[near], c, ang, verts) | \
                (np.hypot(q[near, 0] - c[0], q[near, 1] - c[1]) < circles.radii[tag + 1] * math.cos(math.pi / 3))
            ok &= ~inside
    return ok


def _check_features(cs: FiberCrossSection, target_h, hole_h):
    """Raise when a web or gap is thinner than a quarter of the local size."""
    R = cs.outer_radius
    for i, hole in enumerate(cs.holes):
        gap = R - math.hypot(*hole.center) - hole.radius
        h_loc = min(target_h, hole_h[i] + 0.0)
        if gap < h_loc / 4:
            raise MeshError(f"gap between hole {i} and the outer boundary ({gap:.3g} m) is below "
                            f"h/4; use a smaller target_h or more hole segments")
    if len(cs.holes) > 1:
        c = np.array([h.center for h in cs.holes])
        r = np.array([h.radius for h in cs.holes])
        d = np.hypot(c[:, None, 0] - c[None, :, 0], c[:, None, 1] - c[None, :, 1])
        gap = d - r[:, None] - r[None, :]
        hh = np.minimum(hole_h[:, None], hole_h[None, :])
        np.fill_diagonal(gap, np.inf)
        bad = np.argwhere(gap < hh / 4)
        if bad.size:
            i, j = bad[0]
            raise MeshError(f"web between holes {i} and {j} ({gap[i, j]:.3g} m) is thinner than h/4 "
                            f"({hh[i, j] / 4:.3g} m); use a smaller target_h or more hole segments")


def mesh_cross_section(cs: FiberCrossSection, target_h: float, quality_angle: float = 25.0,
                       hole_segments: int = 16, grading: float = 0.3) -> TriMesh:
    """Mesh the glass region of ``cs``.

    ``target_h`` is the element size away from holes.  Around hole ``i`` the
    size drops to ``min(target_h, 2 pi r_i / hole_segments)`` and grows back
    linearly with slope ``grading``.  Every chord is at most the local size, so
    the chord (sagitta) error on a circle of radius r is below ``h^2 / (8 r)``.
    """
    if not target_h > 0:
        raise MeshError("target_h must be > 0")
    if not 20.0 <= quality_angle <= 33.0:
        raise MeshError("quality_angle must lie in [20, 33] degrees")
    scale = 1.0 / cs.outer_radius
    hole_h = np.array([min(target_h, 2 * math.pi * h.radius / hole_segments) for h in cs.holes])
    _check_features(cs, target_h, hole_h)

    circles = _Circles(cs, scale)
    size = _SizeField(circles, target_h * scale, hole_h * scale, grading)

    pts, bnd = _initial_boundary(circles, size)
    bound = math.radians(quality_angle)
    for _ in range(MAX_ROUNDS):
        tri = Delaunay(pts)
        simp = tri.simplices
        split = _split_encroached(pts, bnd, circles)
        if split is not None:
            pts = split
            continue
        polys = bnd.polygons(pts)
        cen = pts[simp].mean(axis=1)
        keep = _glass(cen, circles, polys)
        tris = simp[keep]
        p = pts[tris]
        ang = _triangle_angles(p)
        amin = ang.min(axis=1)
        edge = np.max(np.stack([np.linalg.norm(p[:, 1] - p[:, 2], axis=1),
                                np.linalg.norm(p[:, 2] - p[:, 0], axis=1),
                                np.linalg.norm(p[:, 0] - p[:, 1], axis=1)]), axis=0)
        hloc = size(cen[keep])
        bad = (amin < bound) | (edge > hloc)
        if not bad.any():
            break
        pts = _refine(pts, tris[bad], amin[bad], edge[bad] / hloc[bad], bnd, circles, polys)
    else:
        raise MeshError("mesh refinement did not converge; try a larger target_h")
    return _finalize(pts, tris, bnd, scale)


def _initial_boundary(circles, size):
    pts, segs, tags = [], [], []
    for ci in range(len(circles.radii)):
        c, r = circles.centers[ci], circles.radii[ci]
        if ci == 0:
            h = size.target_h
            n = max(12, int(math.ceil(2 * math.pi * r / h)))
        else:
            n = max(3, int(math.ceil(2 * math.pi * r / size.hole_h[ci - 1] - 1e-9)))
        t = 2 * math.pi * np.arange(n) / n
        base = sum(len(q) for q in pts)
        pts.append(np.stack([c[0] + r * np.cos(t), c[1] + r * np.sin(t)], axis=1))
        idx = base + np.arange(n)
        segs.append(np.stack([idx, np.roll(idx, -1)], axis=1))
        tags.append(np.full(n, ci - 1))
    bnd = _Boundary(circles)
    bnd.segs = np.concatenate(segs)
    bnd.tags = np.concatenate(tags)
    return np.concatenate(pts), bnd


def _split_segments(pts, bnd, circles, which):
    which = np.unique(np.asarray(which, dtype=np.int64))
    a, b = bnd.segs[which, 0], bnd.segs[which, 1]
    mids = circles.project(0.5 * (pts[a] + pts[b]), bnd.tags[which])
    new = len(pts) + np.arange(len(which))
    keep = np.ones(len(bnd.segs), dtype=bool)
    keep[which] = False
    bnd.segs = np.concatenate([bnd.segs[keep], np.stack([a, new], 1), np.stack([new, b], 1)])
    bnd.tags = np.concatenate([bnd.tags[keep], bnd.tags[which], bnd.tags[which]])
    order = np.lexsort((bnd.segs[:, 0], bnd.tags))
    bnd.segs, bnd.tags = bnd.segs[order], bnd.tags[order]
    return np.concatenate([pts, mids])


def _split_encroached(pts, bnd, circles):
    """Split every chord whose diametral circle holds a vertex.

    Returns the extended point array, or None when no chord is encroached.
    """
    a, b = bnd.segs[:, 0], bnd.segs[:, 1]
    mid = 0.5 * (pts[a] + pts[b])
    half = 0.5 * np.linalg.norm(pts[b] - pts[a], axis=1)
    tree = cKDTree(pts)
    hits = tree.query_ball_point(mid, half * (1 - 1e-10))
    enc = [i for i, h in enumerate(hits) if any(j != a[i] and j != b[i] for j in h)]
    if not enc:
        return None
    return _split_segments(pts, bnd, circles, enc)


def _refine(pts, bad_tris, amin, size_ratio, bnd, circles, polys):
    p = pts[bad_tris]
    cc, rad = _circumcenters(p)
    # worst quality first; size violations ordered by how oversized they are
    order = np.lexsort((-size_ratio, amin))
    a, b = bnd.segs[:, 0], bnd.segs[:, 1]
    mid = 0.5 * (pts[a] + pts[b])
    half = 0.5 * np.linalg.norm(pts[b] - pts[a], axis=1)
    seg_tree = cKDTree(mid)
    hmax = half.max()
    finite = np.isfinite(cc).all(axis=1)
    glass = np.zeros(len(cc), dtype=bool)
    glass[finite] = _glass(cc[finite], circles, polys)

    split, acc_pts, acc_r = set(), [], []
    for t in order:
        if not finite[t]:
            continue
        c = cc[t]
        cand = seg_tree.query_ball_point(c, hmax)
        enc = [s for s in cand if np.hypot(*(c - mid[s])) < half[s]]
        if enc:
            split.add(min(enc))
            continue
        if not glass[t]:
            _, s = seg_tree.query(c)
            split.add(int(s))
            continue
        if acc_pts:
            d = np.hypot(*(np.asarray(acc_pts) - c).T)
            if np.any(d < 0.5 * np.minimum(rad[t], np.asarray(acc_r))):
                continue
        acc_pts.append(c)
        acc_r.append(rad[t])
    if acc_pts:
        pts = np.concatenate([pts, np.asarray(acc_pts)])
    if split:
        pts = _split_segments(pts, bnd, circles, sorted(split))
    return pts


def _finalize(pts, tris, bnd, scale):
    used = np.unique(np.concatenate([tris.ravel(), bnd.segs.ravel()]))
    remap = -np.ones(len(pts), dtype=np.int64)
    remap[used] = np.arange(len(used))
    nodes = pts[used] / scale
    tris = remap[tris]
    p = nodes[tris]
    area2 = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - \
        (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    cw = area2 < 0
    tris[cw] = tris[cw][:, [0, 2, 1]]
    # canonical ordering for byte-stable output
    tris = _rotate_min_first(tris)
    tris = tris[np.lexsort((tris[:, 2], tris[:, 1], tris[:, 0]))]
    segs = remap[bnd.segs]
    mesh = TriMesh(nodes, tris, segs, bnd.tags.copy())
    _validate_conforming(mesh)
    return mesh


def _rotate_min_first(tris):
    k = np.argmin(tris, axis=1)
    idx = (k[:, None] + np.arange(3)[None, :]) % 3
    return np.take_along_axis(tris, idx, axis=1)


def _validate_conforming(mesh: TriMesh):
    t = mesh.triangles
    e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    e.sort(axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    free = uniq[counts == 1]
    b = np.sort(mesh.boundary_edges, axis=1)
    free_set = {tuple(x) for x in free.tolist()}
    bset = {tuple(x) for x in b.tolist()}
    if free_set != bset:
        raise MeshError("boundary recovery failed: free edges do not match the boundary chords")
    if np.any(counts > 2):
        raise MeshError("non-manifold edge in mesh")
    if np.any(mesh.signed_areas() <= 0):
        raise MeshError("degenerate triangle produced")


def refine_uniform(mesh: TriMesh, cs: FiberCrossSection) -> TriMesh:
    """Split every triangle into four; boundary midpoints are moved onto their circle."""
    t = mesh.triangles
    e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    es = np.sort(e, axis=1)
    uniq, inv = np.unique(es, axis=0, return_inverse=True)
    inv = inv.reshape(3, -1).T
    n0 = len(mesh.nodes)
    mids = 0.5 * (mesh.nodes[uniq[:, 0]] + mesh.nodes[uniq[:, 1]])
    # move boundary midpoints onto the true circles
    circles = _Circles(cs, 1.0)
    lookup = {tuple(x): i for i, x in enumerate(uniq.tolist())}
    bsorted = np.sort(mesh.boundary_edges, axis=1)
    bidx = np.array([lookup[tuple(x)] for x in bsorted.tolist()], dtype=np.int64)
    mids[bidx] = circles.project(mids[bidx], mesh.boundary_tags)
    nodes = np.concatenate([mesh.nodes, mids])
    m01, m12, m20 = n0 + inv[:, 0], n0 + inv[:, 1], n0 + inv[:, 2]
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    tris = np.concatenate([np.stack([a, m01, m20], 1), np.stack([m01, b, m12], 1),
                           np.stack([m20, m12, c], 1), np.stack([m01, m12, m20], 1)])
    be = mesh.boundary_edges
    bm = n0 + bidx
    edges = np.concatenate([np.stack([be[:, 0], bm], 1), np.stack([bm, be[:, 1]], 1)])
    tags = np.concatenate([mesh.boundary_tags, mesh.boundary_tags])
    return TriMesh(nodes, tris, edges, tags)


# -- file format -------------------------------------------------------------

MAGIC = "gawbsmesh 1"


def _tag_str(tag):
    return "outer" if tag < 0 else f"hole{int(tag)}"


def write_mesh(mesh: TriMesh, path) -> None:
    """Write the plain-text mesh format (17 significant digits)."""
    lines = [MAGIC, f"{mesh.n_nodes} {mesh.n_triangles} {len(mesh.boundary_edges)}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.nodes.tolist()]
    lines += [f"{i} {j} {k} glass" for i, j, k in mesh.triangles.tolist()]
    lines += [f"{i} {j} {_tag_str(t)}" for (i, j), t in zip(mesh.boundary_edges.tolist(),
                                                           mesh.boundary_tags.tolist())]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse_tag(s, lineno):
    if s == "outer":
        return OUTER
    if s.startswith("hole") and s[4:].isdigit():
        return int(s[4:])
    raise MeshParseError(f"unknown boundary tag {s!r}", lineno)


def read_mesh(path) -> TriMesh:
    """Parse a mesh file, validating counts, indices and orientation."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    pos = 0

    def next_line():
        nonlocal pos
        if pos >= len(lines):
            raise MeshParseError(f"unexpected end of file at line {pos + 1}", pos + 1)
        pos += 1
        return lines[pos - 1].split()

    if next_line() != MAGIC.split():
        raise MeshParseError(f"missing header {MAGIC!r}", 1)
    counts = next_line()
    try:
        nn, nt, ne = (int(c) for c in counts)
    except ValueError:
        raise MeshParseError("malformed counts line", 2) from None
    if min(nn, nt, ne) < 0:
        raise MeshParseError("negative count", 2)
    nodes = np.empty((nn, 2))
    for i in range(nn):
        f = next_line()
        try:
            nodes[i] = [float(f[0]), float(f[1])]
            if len(f) != 2:
                raise ValueError
        except (ValueError, IndexError):
            raise MeshParseError(f"malformed node {i}", pos) from None
    tris = np.empty((nt, 3), dtype=np.int64)
    for i in range(nt):
        f = next_line()
        try:
            tris[i] = [int(f[0]), int(f[1]), int(f[2])]
            if len(f) != 4 or f[3] != "glass":
                raise ValueError
        except (ValueError, IndexError):
            raise MeshParseError(f"malformed triangle {i}", pos) from None
        if tris[i].min() < 0 or tris[i].max() >= nn:
            raise MeshParseError(f"triangle {i} has a node index out of range", pos)
        p = nodes[tris[i]]
        area2 = (p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1]) - (p[1, 1] - p[0, 1]) * (p[2, 0] - p[0, 0])
        if not area2 > 0:
            raise MeshParseError(f"triangle {i} has non-positive area (clockwise or degenerate)", pos)
    edges = np.empty((ne, 2), dtype=np.int64)
    tags = np.empty(ne, dtype=np.int64)
    for i in range(ne):
        f = next_line()
        if len(f) != 3:
            raise MeshParseError(f"malformed boundary edge {i}", pos)
        try:
            edges[i] = [int(f[0]), int(f[1])]
        except ValueError:
            raise MeshParseError(f"malformed boundary edge {i}", pos) from None
        if edges[i].min() < 0 or edges[i].max() >= nn:
            raise MeshParseError(f"boundary edge {i} has a node index out of range", pos)
        tags[i] = _parse_tag(f[2], pos)
    return TriMesh(nodes, tris, edges, tags)
