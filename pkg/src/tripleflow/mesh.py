"""Adaptive conforming triangulations by newest-vertex bisection.

Every mesh is grown from the same macro triangulation of the box, so all
meshes belong to one bisection forest.  A leaf is identified by its macro
triangle and a heap index (root 1, children 2n and 2n+1), which makes
hierarchy queries (ancestor tests, point location, exact density
transfer) cheap and independent of the previous mesh's vertex numbering.

Triangles are stored as ``(v0, v1, v2)`` counter-clockwise with the
refinement edge ``v1 - v2``; bisection at its midpoint ``m`` creates the
children ``(m, v0, v1)`` and ``(m, v2, v0)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ArgumentError, MeshError, OutOfDomain
from .network import WALLS, Box, CurveNetwork

log = logging.getLogger(__name__)

_KEY = np.int64(1) << np.int64(40)  # macro * _KEY + heap


def _edge_keys(a, b, nv_bound):
    lo = np.minimum(a, b).astype(np.int64)
    hi = np.maximum(a, b).astype(np.int64)
    return lo * np.int64(nv_bound) + hi


@dataclass(frozen=True)
class MacroMesh:
    box: Box
    nx: int
    ny: int
    points: np.ndarray
    triangles: np.ndarray

    @property
    def H(self) -> float:
        return self.box.min_side

    @classmethod
    def from_box(cls, box: Box):
        H = box.min_side
        nx = int(round(box.width / H))
        ny = int(round(box.height / H))
        if abs(nx * H - box.width) > 1e-12 * box.diameter or abs(ny * H - box.height) > 1e-12 * box.diameter:
            raise ArgumentError("box sides must be integer multiples of the shorter side")
        xs = box.xmin + H * np.arange(nx + 1)
        ys = box.ymin + H * np.arange(ny + 1)
        xs[-1], ys[-1] = box.xmax, box.ymax
        X, Y = np.meshgrid(xs, ys, indexing="xy")
        pts = np.column_stack([X.ravel(), Y.ravel()]).astype(float)
        tris = []
        for j in range(ny):
            for i in range(nx):
                a = j * (nx + 1) + i
                b = a + 1
                c = b + nx + 1
                d = a + nx + 1
                tris.append((b, c, a))
                tris.append((d, a, c))
        return cls(box, nx, ny, pts, np.array(tris, dtype=np.int64))

    def locate_macro(self, pts):
        """Macro triangle index of each point (points assumed inside the box)."""
        H = self.H
        i = np.clip(np.floor((pts[:, 0] - self.box.xmin) / H).astype(int), 0, self.nx - 1)
        j = np.clip(np.floor((pts[:, 1] - self.box.ymin) / H).astype(int), 0, self.ny - 1)
        x0 = self.box.xmin + i * H
        y0 = self.box.ymin + j * H
        # T1 = (b, c, a) lies below the diagonal a-c
        below = (pts[:, 0] - x0) >= (pts[:, 1] - y0)
        return 2 * (j * self.nx + i) + np.where(below, 0, 1)


class BulkMesh:
    """Leaf triangulation plus hierarchy bookkeeping.

    ``noslip`` is the set of wall names forming the no-slip boundary; the
    remaining walls are free-slip.
    """

    def __init__(self, macro: MacroMesh, points, triangles, macro_id, heap, noslip=WALLS):
        self.macro = macro
        self.points = np.asarray(points, dtype=float)
        self.triangles = np.asarray(triangles, dtype=np.int64)
        self.macro_id = np.asarray(macro_id, dtype=np.int64)
        self.heap = np.asarray(heap, dtype=np.int64)
        self.noslip = frozenset(noslip)
        if not self.noslip <= set(WALLS):
            raise ArgumentError(f"unknown wall names in {sorted(noslip)}")
        if np.any(self.areas <= 0.0):
            raise MeshError("mesh has a non-positive triangle area")

    @property
    def box(self) -> Box:
        return self.macro.box

    @property
    def H(self) -> float:
        return self.macro.H

    @property
    def n_vertices(self) -> int:
        return self.points.shape[0]

    @property
    def n_elements(self) -> int:
        return self.triangles.shape[0]

    @cached_property
    def areas(self):
        p = self.points[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def diameters(self):
        p = self.points[self.triangles]
        e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
        return np.linalg.norm(e, axis=2).max(axis=1)

    @cached_property
    def centroids(self):
        return self.points[self.triangles].mean(axis=1)

    @cached_property
    def keys(self):
        return self.macro_id * _KEY + self.heap

    @cached_property
    def _key_order(self):
        o = np.argsort(self.keys, kind="stable")
        return o, self.keys[o]

    def element_of_key(self, keys):
        """Element index per hierarchy key, -1 when the key is not a leaf."""
        o, sk = self._key_order
        keys = np.asarray(keys, dtype=np.int64)
        pos = np.searchsorted(sk, keys)
        pos = np.minimum(pos, sk.size - 1)
        hit = sk[pos] == keys
        return np.where(hit, o[pos], -1)

    # ------------------------------------------------------------------
    # edges
    @cached_property
    def _edges(self):
        t = self.triangles
        # local edge k is opposite vertex k
        a = np.stack([t[:, 1], t[:, 2], t[:, 0]], axis=1)
        b = np.stack([t[:, 2], t[:, 0], t[:, 1]], axis=1)
        nv = self.n_vertices
        keys = _edge_keys(a, b, nv)
        uk, inv = np.unique(keys.ravel(), return_inverse=True)
        edges = np.column_stack([uk // nv, uk % nv])
        tri_edges = inv.reshape(-1, 3)
        counts = np.bincount(inv, minlength=uk.size)
        return edges, tri_edges, counts

    @property
    def edges(self):
        return self._edges[0]

    @property
    def tri_edges(self):
        return self._edges[1]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @cached_property
    def boundary_edges(self):
        """Indices of edges on the domain boundary."""
        return np.where(self._edges[2] == 1)[0]

    def wall_of_points(self, pts):
        """Boolean matrix (n, 4) of wall membership in the order of WALLS."""
        box = self.box
        tol = 1e-12 * box.diameter
        pts = np.atleast_2d(pts)
        return np.column_stack(
            [
                np.abs(pts[:, 1] - box.ymin) <= tol,
                np.abs(pts[:, 0] - box.xmax) <= tol,
                np.abs(pts[:, 1] - box.ymax) <= tol,
                np.abs(pts[:, 0] - box.xmin) <= tol,
            ]
        )

    @cached_property
    def boundary_edge_walls(self):
        """Wall name for each boundary edge."""
        e = self.edges[self.boundary_edges]
        mid = 0.5 * (self.points[e[:, 0]] + self.points[e[:, 1]])
        w = self.wall_of_points(mid)
        if not np.all(w.sum(axis=1) == 1):
            raise MeshError("boundary edge not on exactly one wall")
        return [WALLS[i] for i in np.argmax(w, axis=1)]

    # ------------------------------------------------------------------
    def locate_point(self, x):
        """(element, barycentric coordinates) for one point or an array of points."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        el, bary = locate_points(self, np.atleast_2d(x))
        if single:
            return int(el[0]), bary[0]
        return el, bary

    def dump(self) -> str:
        lines = [f"v {float(x)!r} {float(y)!r}" for x, y in self.points]
        for t, m, h in zip(self.triangles, self.macro_id, self.heap):
            lines.append(f"t {t[0]} {t[1]} {t[2]} {int(m)}:{int(h)}")
        return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------
# refinement


def _bisect(points, leaves, marked, mids, max_heap_bits=40):
    """Bisect marked leaves with conforming closure.

    ``leaves`` is a dict of arrays (tri, macro, heap); ``mids`` maps edge
    keys to midpoint vertex ids and is updated in place.  ``points`` is a
    python list of coordinate pairs (appended to).
    """
    tri, mac, heap = leaves["tri"], leaves["macro"], leaves["heap"]
    nvb = 1 << 40
    to_split = marked.copy()
    while True:
        # closure: a leaf with a split (or to-be-split) edge must split itself
        while True:
            ref = _edge_keys(tri[to_split, 1], tri[to_split, 2], nvb)
            pending = np.union1d(ref, np.fromiter(mids.keys(), dtype=np.int64, count=len(mids)))
            k0 = _edge_keys(tri[:, 1], tri[:, 2], nvb)
            k1 = _edge_keys(tri[:, 2], tri[:, 0], nvb)
            k2 = _edge_keys(tri[:, 0], tri[:, 1], nvb)
            need = np.isin(k0, pending) | np.isin(k1, pending) | np.isin(k2, pending)
            new = need & ~to_split
            if not np.any(new):
                break
            to_split |= new
        if not np.any(to_split):
            break
        if np.any(heap[to_split] >= (np.int64(1) << np.int64(max_heap_bits - 1))):
            raise MeshError("bisection depth exceeds the hierarchy key range")
        idx = np.where(to_split)[0]
        v0, v1, v2 = tri[idx, 0], tri[idx, 1], tri[idx, 2]
        keys = _edge_keys(v1, v2, nvb)
        m = np.empty(idx.size, dtype=np.int64)
        for n, (key, a, b) in enumerate(zip(keys.tolist(), v1.tolist(), v2.tolist())):
            mid = mids.get(key)
            if mid is None:
                pa, pb = points[a], points[b]
                points.append((0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])))
                mid = len(points) - 1
                mids[key] = mid
            m[n] = mid
        c1 = np.column_stack([m, v0, v1])
        c2 = np.column_stack([m, v2, v0])
        keep = ~to_split
        tri = np.vstack([tri[keep], c1, c2])
        mac = np.concatenate([mac[keep], mac[idx], mac[idx]])
        heap = np.concatenate([heap[keep], 2 * heap[idx], 2 * heap[idx] + 1])
        # hanging nodes: leaves whose edges were split by a neighbour
        k0 = _edge_keys(tri[:, 1], tri[:, 2], nvb)
        k1 = _edge_keys(tri[:, 2], tri[:, 0], nvb)
        k2 = _edge_keys(tri[:, 0], tri[:, 1], nvb)
        mk = np.fromiter(mids.keys(), dtype=np.int64, count=len(mids))
        to_split = np.isin(k0, mk) | np.isin(k1, mk) | np.isin(k2, mk)
    leaves["tri"], leaves["macro"], leaves["heap"] = tri, mac, heap
    return leaves


def refine_uniform(mesh: BulkMesh, times: int = 1) -> BulkMesh:
    """Bisect every element ``times`` times (nested refinement of ``mesh``)."""
    return refine_where(mesh, lambda m: np.ones(m.n_elements, dtype=bool), rounds=times)


def refine_where(mesh: BulkMesh, predicate, rounds: int = 1) -> BulkMesh:
    points = [tuple(p) for p in mesh.points]
    leaves = {"tri": mesh.triangles.copy(), "macro": mesh.macro_id.copy(), "heap": mesh.heap.copy()}
    mids: dict = {}
    cur = mesh
    for _ in range(rounds):
        marked = np.asarray(predicate(cur), dtype=bool)
        if not np.any(marked):
            break
        leaves = _bisect(points, leaves, marked, mids)
        cur = BulkMesh(mesh.macro, np.array(points), leaves["tri"], leaves["macro"], leaves["heap"], mesh.noslip)
    return cur


def macro_mesh(box: Box, noslip=WALLS) -> BulkMesh:
    mm = MacroMesh.from_box(box)
    n = mm.triangles.shape[0]
    return BulkMesh(mm, mm.points, mm.triangles, np.arange(n), np.ones(n, dtype=np.int64), noslip)


def uniform_mesh(box: Box, level: int, noslip=WALLS) -> BulkMesh:
    """Mesh with every element diameter at most H / 2**level."""
    return build_adapted(macro_mesh(box, noslip), None, level, level)


def distance_to_segments(points, A, B, chunk=4096):
    """Euclidean distance from each point to the nearest segment [A_j, B_j]."""
    points = np.atleast_2d(points)
    out = np.full(points.shape[0], np.inf)
    if A.shape[0] == 0:
        return out
    D = B - A
    dd = np.maximum(np.einsum("ij,ij->i", D, D), 1e-300)
    for s in range(0, A.shape[0], chunk):
        a, d, l2 = A[s : s + chunk], D[s : s + chunk], dd[s : s + chunk]
        for p0 in range(0, points.shape[0], 8192):
            P = points[p0 : p0 + 8192]
            rel = P[:, None, :] - a[None, :, :]
            t = np.clip(np.einsum("pjk,jk->pj", rel, d) / l2[None, :], 0.0, 1.0)
            q = rel - t[:, :, None] * d[None, :, :]
            dist = np.sqrt(np.einsum("pjk,pjk->pj", q, q)).min(axis=1)
            out[p0 : p0 + 8192] = np.minimum(out[p0 : p0 + 8192], dist)
    return out


def build_adapted(base: BulkMesh, net: CurveNetwork | None, k: int, l: int, band: float = 1.0) -> BulkMesh:
    """Rebuild from the macro mesh: diameter <= H/2**k near the network, <= H/2**l elsewhere.

    An element counts as near the network when its centroid lies within
    ``(1 + band)`` element diameters of a curve segment, which covers every
    element cut by the network plus a band of width ``band`` diameters.
    """
    if not (isinstance(k, (int, np.integer)) and isinstance(l, (int, np.integer))) or k < l or l < 0:
        raise ArgumentError("adapt levels need integers k >= l >= 0")
    mm = base.macro
    H = mm.H
    fine, coarse = H / 2.0**k, H / 2.0**l
    tol = 1e-9 * H
    if net is not None and net.n_vertices:
        A = net.X[net.seg_a]
        B = net.X[net.seg_b]
    else:
        A = B = np.zeros((0, 2))
    points = [tuple(p) for p in mm.points]
    n = mm.triangles.shape[0]
    leaves = {"tri": mm.triangles.copy(), "macro": np.arange(n, dtype=np.int64), "heap": np.ones(n, dtype=np.int64)}
    mids: dict = {}
    max_rounds = 2 * k + 8
    for it in range(max_rounds + 1):
        P = np.array(points)
        t = leaves["tri"]
        p = P[t]
        e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
        diam = np.linalg.norm(e, axis=2).max(axis=1)
        marked = diam > coarse + tol
        cand = (diam > fine + tol) & ~marked
        if np.any(cand) and A.shape[0]:
            c = p.mean(axis=1)
            d = distance_to_segments(c[cand], A, B)
            near = d <= (1.0 + band) * diam[cand]
            idx = np.where(cand)[0]
            marked[idx[near]] = True
        if not np.any(marked):
            break
        if it == max_rounds:
            raise MeshError(f"refinement did not terminate within {max_rounds} rounds")
        leaves = _bisect(points, leaves, marked, mids)
    return BulkMesh(mm, np.array(points), leaves["tri"], leaves["macro"], leaves["heap"], base.noslip)


def adapt(mesh: BulkMesh, net: CurveNetwork, k: int, l: int, band: float = 1.0) -> BulkMesh:
    """Adapted mesh for the network (rebuilt within the mesh's bisection forest)."""
    return build_adapted(mesh, net, k, l, band)


# ----------------------------------------------------------------------
# point location


def _orient(a, b, c):
    return (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])


def barycentric(tri_pts, x):
    """Barycentric coordinates of points ``x`` (n,2) in triangles (n,3,2)."""
    a, b, c = tri_pts[:, 0], tri_pts[:, 1], tri_pts[:, 2]
    det = _orient(a, b, c)
    l1 = _orient(x, b, c) / det
    l2 = _orient(a, x, c) / det
    l3 = 1.0 - l1 - l2
    return np.column_stack([l1, l2, l3])


def locate_points(mesh: BulkMesh, x, clamp_tol=None):
    """Vectorized hierarchical point location.

    Points within ``clamp_tol`` outside the box are clamped (and logged);
    farther points raise OutOfDomain.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float)).copy()
    box = mesh.box
    clamp_tol = 1e-9 * box.diameter if clamp_tol is None else clamp_tol
    inside = box.contains(x)
    if not np.all(inside):
        if not np.all(box.contains(x, tol=clamp_tol)):
            raise OutOfDomain("point outside the domain")
        log.debug("clamping %d points onto the domain", int(np.sum(~inside)))
        x[:, 0] = np.clip(x[:, 0], box.xmin, box.xmax)
        x[:, 1] = np.clip(x[:, 1], box.ymin, box.ymax)
    mm = mesh.macro
    mac = mm.locate_macro(x)
    tri = mm.points[mm.triangles[mac]].copy()  # (n, 3, 2) coordinates
    heap = np.ones(x.shape[0], dtype=np.int64)
    el = np.full(x.shape[0], -1, dtype=np.int64)
    active = np.arange(x.shape[0])
    for _ in range(64):
        e = mesh.element_of_key(mac[active] * _KEY + heap[active])
        hit = e >= 0
        el[active[hit]] = e[hit]
        active = active[~hit]
        if active.size == 0:
            break
        t = tri[active]
        v0, v1, v2 = t[:, 0], t[:, 1], t[:, 2]
        m = 0.5 * (v1 + v2)
        right = _orient(v0, m, x[active]) >= 0.0  # child 2 holds v2
        c1 = np.stack([m, v0, v1], axis=1)
        c2 = np.stack([m, v2, v0], axis=1)
        tri[active] = np.where(right[:, None, None], c2, c1)
        heap[active] = 2 * heap[active] + right.astype(np.int64)
    else:
        raise MeshError("point location did not reach a leaf")
    bary = barycentric(mesh.points[mesh.triangles[el]], x)
    bary = np.clip(bary, 0.0, 1.0)
    bary /= bary.sum(axis=1, keepdims=True)
    return el, bary


def locate_point(mesh: BulkMesh, x):
    return mesh.locate_point(x)


# ----------------------------------------------------------------------
# hierarchy relations between two meshes of the same forest


def _depth(heap):
    # floor(log2(heap)) for positive int64 values
    d = np.zeros_like(heap)
    h = heap.copy()
    while np.any(h > 1):
        big = h > 1
        d[big] += 1
        h[big] >>= 1
    return d


def ancestor_map(fine: BulkMesh, coarse: BulkMesh):
    """For each leaf of ``fine``, the ``coarse`` leaf containing it (or -1)."""
    out = np.full(fine.n_elements, -1, dtype=np.int64)
    h = fine.heap.copy()
    todo = np.arange(fine.n_elements)
    while todo.size:
        e = coarse.element_of_key(fine.macro_id[todo] * _KEY + h[todo])
        hit = e >= 0
        out[todo[hit]] = e[hit]
        todo = todo[~hit]
        h[todo] >>= 1
        root = h[todo] == 0
        todo = todo[~root]
    return out


def project_density(rho_old, mesh_old: BulkMesh, mesh_new: BulkMesh):
    """Elementwise L2 projection of a piecewise constant between forest meshes."""
    rho_old = np.asarray(rho_old, dtype=float)
    if rho_old.shape[0] != mesh_old.n_elements:
        raise ArgumentError("density must have one value per old element")
    if mesh_old.macro is not mesh_new.macro and mesh_old.macro.box != mesh_new.macro.box:
        raise ArgumentError("meshes do not share a macro triangulation")
    out = np.zeros(mesh_new.n_elements)
    # new leaves inside (or equal to) an old leaf
    up = ancestor_map(mesh_new, mesh_old)
    got = up >= 0
    out[got] = rho_old[up[got]]
    # new leaves that are strict ancestors of old leaves: area-weighted mean
    if not np.all(got):
        down = ancestor_map(mesh_old, mesh_new)
        sel = down >= 0
        dd = _depth(mesh_old.heap[sel]) - _depth(mesh_new.heap[down[sel]])
        w = np.ldexp(1.0, -dd.astype(int))
        acc = np.zeros(mesh_new.n_elements)
        np.add.at(acc, down[sel], w * rho_old[sel])
        out[~got] = acc[~got]
    return out
