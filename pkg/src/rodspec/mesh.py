"""Triangle meshes of the perforated cell ``Y(x1)`` and of the thin rod.

Cell meshes start from a structured background grid on the periodicity cell.
Vertices close to the hole boundary are pulled onto ``{F = 0}``; triangles
cut by the hole are clipped at their edge crossings (located by bisection),
and triangles that lie in the hole are dropped.  The faces ``y1 = -1/2`` and
``y1 = +1/2`` are identified through ``periodic_pairs``.

Rod meshes glue ``2N + 1`` cell meshes, each frozen at its midpoint
``x1 = eps * j``, and map them to physical coordinates
``x1 = eps * (j + y1)``, ``x2 = eps * y2``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import CellGeometry, GeometryError, RodGeometry, reduce_y1

MAX_VERTICES = 2_000_000
MIN_ANGLE_DEG = 10.0
# vertices whose estimated distance to {F=0} is below this many grid pitches
# are moved onto the level set
WARP_FRACTION = 0.3


class Tag(enum.IntEnum):
    LATERAL = 1
    HOLE = 2
    END_MINUS = 3
    END_PLUS = 4


@dataclass
class TriMesh:
    """Triangulation with tagged boundary edges.

    Attributes
    ----------
    vertices : (nv, 2) float array
        ``(y1, y2)`` for cell meshes, physical ``(x1, x2)`` for rod meshes.
    triangles : (nt, 3) int array
        Counter-clockwise vertex triples.
    boundary_edges : (nb, 2) int array
    boundary_tags : (nb,) int array of :class:`Tag` values
    periodic_pairs : (np, 2) int array
        ``(master, slave)`` with ``slave = master + (1, 0)``; cell meshes only.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    periodic_pairs: np.ndarray
    h: float
    kind: str = "cell"
    x1: float = 0.0
    epsilon: float | None = None
    geometry: CellGeometry | None = None
    tri_cell: np.ndarray | None = None
    cell_slices: np.ndarray | None = None

    # -- basic measures --------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def area(self) -> float:
        return float(self.signed_areas().sum())

    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    def edges(self) -> np.ndarray:
        """Unique undirected edges, sorted lexicographically."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    def min_angle(self) -> float:
        """Smallest interior angle in degrees."""
        return float(np.degrees(_triangle_angles(self.vertices[self.triangles]).min()))

    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges()) + self.n_triangles

    def tagged_vertices(self, *tags) -> np.ndarray:
        sel = np.isin(self.boundary_tags, [int(t) for t in tags])
        return np.unique(self.boundary_edges[sel].ravel())

    def tag_counts(self) -> dict:
        return {t.name: int(np.sum(self.boundary_tags == t)) for t in Tag}

    # -- coordinates ------------------------------------------------------
    def local_coordinates(self, points: np.ndarray | None = None,
                          cell: np.ndarray | None = None):
        """Return ``(x1, y1, y2)`` used to evaluate coefficient fields.

        For a cell mesh ``x1`` is the frozen slice.  For a rod mesh the slow
        variable is the physical ``x1`` and ``y = x / eps`` reduced mod 1 in
        ``y1``; if ``cell`` is given, ``y1`` is measured from that cell's centre
        (which agrees with the reduction except on the cell faces).
        """
        pts = self.vertices if points is None else np.asarray(points, dtype=float)
        if self.kind == "cell":
            return np.full(len(pts), self.x1), reduce_y1(pts[:, 0]), pts[:, 1].copy()
        eps = self.epsilon
        x1 = pts[:, 0]
        t = x1 / eps
        y1 = reduce_y1(t) if cell is None else t - cell
        return x1.copy(), y1, pts[:, 1] / eps

    def frozen_slices(self, which: str = "centroid") -> np.ndarray:
        """Per-triangle slice ``x1`` at which the hole geometry is frozen."""
        if self.kind == "cell":
            return np.full(self.n_triangles, self.x1)
        return self.cell_slices[self.tri_cell]


def _triangle_angles(p: np.ndarray) -> np.ndarray:
    a = np.linalg.norm(p[:, 1] - p[:, 2], axis=1)
    b = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
    c = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        A = np.arccos(np.clip((b * b + c * c - a * a) / (2 * b * c), -1, 1))
        B = np.arccos(np.clip((a * a + c * c - b * b) / (2 * a * c), -1, 1))
    C = np.pi - A - B
    ang = np.stack([A, B, C], axis=1)
    return np.nan_to_num(ang, nan=0.0)


# --- level-set helpers ---------------------------------------------------

def _project(geom: CellGeometry, x1: float, pts: np.ndarray, iters: int = 30) -> np.ndarray:
    """Newton projection of points onto ``{F(x1, .) = 0}`` along the gradient."""
    p = np.array(pts, dtype=float, copy=True)
    for _ in range(iters):
        f = geom.level(x1, p[:, 0], p[:, 1])
        g1, g2 = geom.level_gradient(x1, p[:, 0], p[:, 1])
        g2n = np.maximum(g1 * g1 + g2 * g2, 1e-300)
        step = np.stack([f * g1 / g2n, f * g2 / g2n], axis=1)
        p -= step
        if np.max(np.abs(step), initial=0.0) < 1e-15:
            break
    return p


def _bisect_edge(geom, x1, pa, pb, iters: int = 60):
    """Point of ``{F = 0}`` on segment ``[pa, pb]`` (F(pa) > 0 > F(pb))."""
    lo, hi = 0.0, 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        q = pa + mid * (pb - pa)
        if geom.level(x1, q[0], q[1]) > 0:
            lo = mid
        else:
            hi = mid
    return pa + 0.5 * (lo + hi) * (pb - pa)


# --- cell mesh -----------------------------------------------------------

def _grid_counts(half_width: float, pitch: float):
    nx = max(1, int(round(1.0 / pitch)))
    ny = max(1, int(round(2 * half_width / pitch)))
    return nx, ny


def mesh_cell(geom: CellGeometry, x1: float, h: float) -> TriMesh:
    """Mesh ``Y(x1)`` on a structured background grid of pitch ``h/2``.

    Raises
    ------
    GeometryError
        If the hole touches the cell boundary, or the minimum angle is still
        below 10 degrees after one internal remesh at ``h/2``.
    """
    if not (0 < h <= 0.125 + 1e-15):
        raise ValueError("mesh size h must satisfy 0 < h <= 1/8")
    m = _mesh_cell_once(geom, x1, h)
    if m.min_angle() < MIN_ANGLE_DEG:
        m = _mesh_cell_once(geom, x1, h / 2)
        if m.min_angle() < MIN_ANGLE_DEG:
            raise GeometryError(
                f"cell mesh at x1={x1:g} has minimum angle {m.min_angle():.2f} deg < {MIN_ANGLE_DEG}")
        m.h = h
    return m


def _mesh_cell_once(geom: CellGeometry, x1: float, h: float) -> TriMesh:
    w = geom.half_width
    pitch = h / 2
    nx, ny = _grid_counts(w, pitch)
    ys1 = np.linspace(-0.5, 0.5, nx + 1)
    ys2 = np.linspace(-w, w, ny + 1)
    G1, G2 = np.meshgrid(ys1, ys2, indexing="ij")
    verts = np.stack([G1.ravel(), G2.ravel()], axis=1)
    vid = lambda i, j: i * (ny + 1) + j

    # background triangles, diagonal alternating in a checkerboard
    I, J = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    I, J = I.ravel(), J.ravel()
    v00, v10, v01, v11 = vid(I, J), vid(I + 1, J), vid(I, J + 1), vid(I + 1, J + 1)
    alt = (I + J) % 2 == 0
    t1 = np.where(alt[:, None], np.stack([v00, v10, v11], 1), np.stack([v00, v10, v01], 1))
    t2 = np.where(alt[:, None], np.stack([v00, v11, v01], 1), np.stack([v10, v11, v01], 1))
    tris = np.concatenate([t1, t2])

    on_face = (np.abs(np.abs(verts[:, 0]) - 0.5) < 1e-12) | (np.abs(np.abs(verts[:, 1]) - w) < 1e-12)

    if not geom.hole_present:
        return _finish_cell(geom, x1, h, pitch, verts, tris, np.zeros(len(verts), bool))

    F = geom.level(x1, verts[:, 0], verts[:, 1])
    g1, g2 = geom.level_gradient(x1, verts[:, 0], verts[:, 1])
    dist = F / np.maximum(np.hypot(g1, g2), 1e-14)
    warp = np.abs(dist) < WARP_FRACTION * pitch
    inside = (F <= 0) & ~warp
    if np.any((warp | inside) & on_face):
        bad = verts[np.flatnonzero((warp | inside) & on_face)[0]]
        raise GeometryError(f"hole touches the cell boundary near y={tuple(bad)} at x1={x1:g}")
    if warp.any():
        verts[warp] = _project(geom, x1, verts[warp])
    state = np.where(warp, 0, np.where(F > 0, 1, -1))  # +1 out (material), -1 in hole, 0 on

    # triangles entirely in the material are kept as is
    s = state[tris]
    keep_plain = (s >= 0).all(axis=1) & (s > 0).any(axis=1)
    all_on = (s == 0).all(axis=1)
    if all_on.any():
        c = verts[tris[all_on]].mean(axis=1)
        ok = geom.level(x1, c[:, 0], c[:, 1]) > 0
        idx = np.flatnonzero(all_on)
        keep_plain[idx[ok]] = True
    cut = (s < 0).any(axis=1) & (s > 0).any(axis=1)

    new_pts = []
    crossings = {}
    nv = len(verts)

    def crossing(a, b):
        key = (a, b) if a < b else (b, a)
        if key not in crossings:
            pa, pb = (verts[a], verts[b]) if state[a] > 0 else (verts[b], verts[a])
            new_pts.append(_bisect_edge(geom, x1, pa, pb))
            crossings[key] = nv + len(new_pts) - 1
        return crossings[key]

    new_tris = []
    for t in tris[cut]:
        poly = []
        for k in range(3):
            a, b = int(t[k]), int(t[(k + 1) % 3])
            if state[a] >= 0:
                poly.append(a)
            if state[a] * state[b] < 0:
                poly.append(crossing(a, b))
        new_tris.append(poly)

    on_level = state == 0
    if new_pts:
        verts = np.concatenate([verts, np.array(new_pts)])
        on_level = np.concatenate([on_level, np.ones(len(new_pts), bool)])
    pieces = [tris[keep_plain]]
    for poly in new_tris:
        if len(poly) == 3:
            pieces.append(np.array([poly]))
        elif len(poly) == 4:
            pieces.append(_split_quad(verts, poly))
    tris = np.concatenate(pieces).astype(np.int64)
    return _finish_cell(geom, x1, h, pitch, verts, tris, on_level)


def _split_quad(verts, q):
    a, b, c, d = q
    opt1 = np.array([[a, b, c], [a, c, d]])
    opt2 = np.array([[a, b, d], [b, c, d]])
    m1 = _triangle_angles(verts[opt1]).min()
    m2 = _triangle_angles(verts[opt2]).min()
    return opt1 if m1 >= m2 else opt2


def _boundary_edges(tris: np.ndarray) -> np.ndarray:
    e = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    key = np.sort(e, axis=1)
    uniq, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    once = counts[inv] == 1
    return e[once]  # keeps the triangle's orientation


def _finish_cell(geom, x1, h, pitch, verts, tris, on_level) -> TriMesh:
    used = np.unique(tris)
    remap = -np.ones(len(verts), dtype=np.int64)
    remap[used] = np.arange(len(used))
    verts = verts[used]
    on_level = on_level[used]
    tris = remap[tris]
    # enforce counter-clockwise orientation
    p = verts[tris]
    sa = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    flip = sa < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]

    w = geom.half_width
    be = _boundary_edges(tris)
    pe = verts[be]
    lateral = (np.abs(np.abs(pe[:, :, 1]) - w) < 1e-12).all(axis=1) & \
        (np.abs(pe[:, 0, 1] - pe[:, 1, 1]) < 1e-12)
    face = (np.abs(np.abs(pe[:, :, 0]) - 0.5) < 1e-12).all(axis=1) & \
        (np.abs(pe[:, 0, 0] - pe[:, 1, 0]) < 1e-12)
    hole = on_level[be].all(axis=1) & ~lateral & ~face
    if np.any(~(lateral | face | hole)):
        raise GeometryError("untaggable boundary edge in cell mesh")
    tagged = ~face
    tags = np.where(lateral, int(Tag.LATERAL), int(Tag.HOLE))[tagged]

    left = np.flatnonzero(np.abs(verts[:, 0] + 0.5) < 1e-12)
    right = np.flatnonzero(np.abs(verts[:, 0] - 0.5) < 1e-12)
    left = left[np.argsort(verts[left, 1])]
    right = right[np.argsort(verts[right, 1])]
    if len(left) != len(right) or np.max(np.abs(verts[left, 1] - verts[right, 1]), initial=0) > 1e-12:
        raise GeometryError("cell faces do not match for periodic identification")
    pairs = np.stack([left, right], axis=1) if len(left) else np.zeros((0, 2), np.int64)
    return TriMesh(verts, tris, be[tagged], tags.astype(np.int64), pairs.astype(np.int64),
                   h=h, kind="cell", x1=float(x1), geometry=geom)


# --- rod mesh -------------------------------------------------------------

def mesh_rod(geom: CellGeometry, rod: RodGeometry, h_y: float) -> TriMesh:
    """Mesh the perforated rod by gluing per-cell meshes.

    Raises
    ------
    GeometryError
        If the hole is under-resolved (fewer than 8 grid pitches across) or
        the estimated vertex count exceeds the memory guard.
    """
    eps = rod.epsilon
    nx, ny = _grid_counts(geom.half_width, h_y / 2)
    estimate = rod.cell_count * (nx + 1) * (ny + 1)
    if estimate > MAX_VERTICES:
        suggestion = h_y * math.sqrt(estimate / MAX_VERTICES) * 1.05
        raise GeometryError(
            f"rod mesh would have ~{estimate} vertices (> {MAX_VERTICES}); "
            f"use h_y >= {suggestion:.4g}")

    centers = rod.cell_centers
    cached = None
    verts, tris, bedges, btags, tcell = [], [], [], [], []
    offset = 0
    prev_right = None
    for j, xc in enumerate(centers):
        if cached is None or geom.depends_on_x1:
            cm = mesh_cell(geom, float(xc), h_y)
            _check_resolution(cm, h_y)
            cached = cm
        cm = cached
        # merge the left face of this cell with the right face of the previous
        left, right = cm.periodic_pairs[:, 0], cm.periodic_pairs[:, 1]
        local = np.arange(cm.n_vertices)
        gmap = np.empty(cm.n_vertices, dtype=np.int64)
        fresh = np.ones(cm.n_vertices, bool)
        if prev_right is not None:
            if len(prev_right) != len(left):
                raise GeometryError("adjacent cells have incompatible face meshes")
            gmap[left] = prev_right
            fresh[left] = False
        gmap[fresh] = offset + np.arange(fresh.sum())
        offset += int(fresh.sum())
        pts = np.stack([eps * (j - rod.n_cells + cm.vertices[local[fresh], 0]),
                        eps * cm.vertices[local[fresh], 1]], axis=1)
        verts.append(pts)
        tris.append(gmap[cm.triangles])
        bedges.append(gmap[cm.boundary_edges])
        btags.append(cm.boundary_tags)
        tcell.append(np.full(cm.n_triangles, j, dtype=np.int64))
        # end faces
        if j == 0:
            e = _face_edges(cm, left)
            bedges.append(gmap[e])
            btags.append(np.full(len(e), int(Tag.END_MINUS)))
        if j == len(centers) - 1:
            e = _face_edges(cm, right)
            bedges.append(gmap[e])
            btags.append(np.full(len(e), int(Tag.END_PLUS)))
        prev_right = gmap[right]

    V = np.concatenate(verts)
    # snap end coordinates exactly
    V[np.abs(V[:, 0] + 0.5) < 1e-12, 0] = -0.5
    V[np.abs(V[:, 0] - 0.5) < 1e-12, 0] = 0.5
    return TriMesh(V, np.concatenate(tris), np.concatenate(bedges).astype(np.int64),
                   np.concatenate(btags).astype(np.int64), np.zeros((0, 2), np.int64),
                   h=h_y, kind="rod", epsilon=eps, geometry=geom,
                   tri_cell=np.concatenate(tcell), cell_slices=np.asarray(centers, float))


def _face_edges(cm: TriMesh, face_vertices: np.ndarray) -> np.ndarray:
    be = _boundary_edges(cm.triangles)
    on = np.isin(be, face_vertices).all(axis=1)
    return be[on]


def _check_resolution(cm: TriMesh, h_y: float):
    hv = cm.tagged_vertices(Tag.HOLE)
    if len(hv) == 0:
        return
    ext = np.ptp(cm.vertices[hv], axis=0).max()
    if ext < 8 * (h_y / 2):
        raise GeometryError(
            f"hole spans only {ext / (h_y / 2):.1f} grid pitches (< 8); decrease h_y")


# --- refinement ----------------------------------------------------------

def refine(m: TriMesh) -> TriMesh:
    """Uniform red refinement; midpoints of HOLE edges are re-snapped."""
    t = m.triangles
    nv = m.n_vertices
    e_all = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    key = np.sort(e_all, axis=1)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.ravel()
    mid = nv + np.arange(len(uniq))
    P = 0.5 * (m.vertices[uniq[:, 0]] + m.vertices[uniq[:, 1]])
    nt = len(t)
    m01, m12, m20 = mid[inv[:nt]], mid[inv[nt:2 * nt]], mid[inv[2 * nt:]]
    # locate edge index of each boundary edge
    lookup = {(int(a), int(b)): i for i, (a, b) in enumerate(uniq)}
    bidx = np.array([lookup[(min(a, b), max(a, b))] for a, b in m.boundary_edges], dtype=np.int64)

    hole = m.boundary_tags == int(Tag.HOLE)
    if hole.any() and m.geometry is not None and m.geometry.hole_present:
        ei = bidx[hole]
        if m.kind == "cell":
            P[ei] = _project(m.geometry, m.x1, P[ei])
        else:
            # the hole edge belongs to exactly one triangle; use its cell
            owner = np.empty(len(uniq), dtype=np.int64)
            owner[inv] = np.tile(np.arange(nt), 3)
            cells = m.tri_cell[owner[ei]]
            eps = m.epsilon
            for c in np.unique(cells):
                sel = ei[cells == c]
                jc = c - (len(m.cell_slices) - 1) // 2
                local = np.stack([P[sel, 0] / eps - jc, P[sel, 1] / eps], axis=1)
                local = _project(m.geometry, float(m.cell_slices[c]), local)
                P[sel] = np.stack([eps * (jc + local[:, 0]), eps * local[:, 1]], axis=1)

    V = np.concatenate([m.vertices, P])
    T = np.concatenate([
        np.stack([t[:, 0], m01, m20], 1),
        np.stack([m01, t[:, 1], m12], 1),
        np.stack([m20, m12, t[:, 2]], 1),
        np.stack([m01, m12, m20], 1),
    ])
    bm = mid[bidx]
    BE = np.concatenate([np.stack([m.boundary_edges[:, 0], bm], 1),
                         np.stack([bm, m.boundary_edges[:, 1]], 1)])
    BT = np.concatenate([m.boundary_tags, m.boundary_tags])

    pairs = m.periodic_pairs
    if len(pairs):
        slave_of = dict(map(tuple, pairs.tolist()))
        new_pairs = [pairs]
        extra = []
        left_set = set(pairs[:, 0].tolist())
        for i, (a, b) in enumerate(uniq.tolist()):
            if a in left_set and b in left_set:
                sa, sb = slave_of[a], slave_of[b]
                k = lookup.get((min(sa, sb), max(sa, sb)))
                if k is not None:
                    extra.append((mid[i], mid[k]))
        if extra:
            new_pairs.append(np.array(extra, dtype=np.int64))
        pairs = np.concatenate(new_pairs)
        order = np.argsort(V[pairs[:, 0], 1], kind="stable")
        pairs = pairs[order]
    tri_cell = None if m.tri_cell is None else np.tile(m.tri_cell, 4)
    return replace(m, vertices=V, triangles=T, boundary_edges=BE, boundary_tags=BT,
                   periodic_pairs=pairs, h=m.h / 2, tri_cell=tri_cell)


# --- plain-text dump -------------------------------------------------------

def write_mesh(m: TriMesh, fh) -> None:
    """Write the plain-text mesh format (sections: vertices, triangles, tags, periodic_pairs)."""
    fh.write(f"# rodspec mesh kind={m.kind} h={m.h!r}\n")
    fh.write(f"vertices {m.n_vertices}\n")
    for x, y in m.vertices:
        fh.write(f"{x:.17g} {y:.17g}\n")
    fh.write(f"triangles {m.n_triangles}\n")
    for a, b, c in m.triangles:
        fh.write(f"{a} {b} {c}\n")
    fh.write(f"tags {len(m.boundary_edges)}\n")
    for (a, b), t in zip(m.boundary_edges, m.boundary_tags):
        fh.write(f"{a} {b} {Tag(int(t)).name}\n")
    fh.write(f"periodic_pairs {len(m.periodic_pairs)}\n")
    for a, b in m.periodic_pairs:
        fh.write(f"{a} {b}\n")


def read_mesh(fh) -> TriMesh:
    lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    pos = 0

    def section(name):
        nonlocal pos
        head, count = lines[pos].split()
        if head != name:
            raise ValueError(f"expected section {name!r}, found {head!r}")
        rows = lines[pos + 1: pos + 1 + int(count)]
        pos += 1 + int(count)
        return [r.split() for r in rows]

    V = np.array(section("vertices"), dtype=float).reshape(-1, 2)
    T = np.array(section("triangles"), dtype=np.int64).reshape(-1, 3)
    tags = section("tags")
    BE = np.array([r[:2] for r in tags], dtype=np.int64).reshape(-1, 2)
    BT = np.array([int(Tag[r[2]]) for r in tags], dtype=np.int64)
    PP = np.array(section("periodic_pairs"), dtype=np.int64).reshape(-1, 2)
    return TriMesh(V, T, BE, BT, PP, h=float("nan"))
