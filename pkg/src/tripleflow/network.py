"""Polygonal curve networks with triple junctions and boundary points.

A network stores one polyline per interface.  Values that live on the
network (curvatures, displacements, test functions) are stored per curve
vertex, so a triple-junction point appears once for each of its three
curves and one-sided limits come for free.  All vertices are concatenated
into one global "surface vertex" numbering; ``net.offsets[i]`` is the first
global index of curve ``i``.

Normals follow one fixed convention: the unit normal of an oriented segment
``(q0, q1)`` is the clockwise rotation of ``q1 - q0``.  A counter-clockwise
closed curve therefore has outward normals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import (
    ArgumentError,
    DegenerateSegment,
    TopologyError,
    Unsupported,
)

WALLS = ("bottom", "right", "top", "left")
_WALL_NORMALS = {
    "bottom": (0.0, -1.0),
    "right": (1.0, 0.0),
    "top": (0.0, 1.0),
    "left": (-1.0, 0.0),
}


def rot_cw(v):
    """Clockwise quarter turn of vectors stored in the last axis."""
    v = np.asarray(v, dtype=float)
    return np.stack([v[..., 1], -v[..., 0]], axis=-1)


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle ``(xmin, xmax) x (ymin, ymax)``."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self):
        for name in ("xmin", "xmax", "ymin", "ymax"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ArgumentError("box needs xmin < xmax and ymin < ymax")

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def diameter(self) -> float:
        return math.hypot(self.width, self.height)

    @property
    def min_side(self) -> float:
        return min(self.width, self.height)

    @property
    def perimeter(self) -> float:
        return 2.0 * (self.width + self.height)

    def corners(self):
        """Corners in counter-clockwise order starting at (xmin, ymin)."""
        return np.array(
            [
                [self.xmin, self.ymin],
                [self.xmax, self.ymin],
                [self.xmax, self.ymax],
                [self.xmin, self.ymax],
            ]
        )

    def wall_of(self, p, tol=None):
        """Name of the wall containing ``p`` (first match), or None."""
        tol = 1e-12 * self.diameter if tol is None else tol
        x, y = float(p[0]), float(p[1])
        if abs(y - self.ymin) <= tol:
            return "bottom"
        if abs(x - self.xmax) <= tol:
            return "right"
        if abs(y - self.ymax) <= tol:
            return "top"
        if abs(x - self.xmin) <= tol:
            return "left"
        return None

    def snap_to_wall(self, p, wall):
        p = np.array(p, dtype=float)
        if wall == "bottom":
            p[1] = self.ymin
        elif wall == "top":
            p[1] = self.ymax
        elif wall == "left":
            p[0] = self.xmin
        elif wall == "right":
            p[0] = self.xmax
        return p

    def boundary_coordinate(self, p):
        """Counter-clockwise arclength of a boundary point from (xmin, ymin)."""
        x, y = float(p[0]), float(p[1])
        w, h = self.width, self.height
        wall = self.wall_of(p, tol=1e-9 * self.diameter)
        if wall == "bottom":
            return x - self.xmin
        if wall == "right":
            return w + (y - self.ymin)
        if wall == "top":
            return w + h + (self.xmax - x)
        if wall == "left":
            return 2 * w + h + (self.ymax - y)
        raise TopologyError(f"point {p} is not on the domain boundary")

    def contains(self, pts, tol=0.0):
        pts = np.atleast_2d(pts)
        return (
            (pts[:, 0] >= self.xmin - tol)
            & (pts[:, 0] <= self.xmax + tol)
            & (pts[:, 1] >= self.ymin - tol)
            & (pts[:, 1] <= self.ymax + tol)
        )


@dataclass(frozen=True)
class PolyCurve:
    """One interface polyline.  Closed curves do not repeat their first vertex."""

    vertices: np.ndarray
    closed: bool = False

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise ArgumentError("curve vertices must have shape (K, 2)")
        if v.shape[0] < (3 if self.closed else 2):
            raise ArgumentError("curve has too few vertices")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_segments(self) -> int:
        k = self.vertices.shape[0]
        return k if self.closed else k - 1

    def segment(self, j):
        k = self.n_vertices
        return self.vertices[j], self.vertices[(j + 1) % k]

    def length(self) -> float:
        v = self.vertices
        if self.closed:
            v = np.vstack([v, v[:1]])
        return float(np.sum(np.linalg.norm(np.diff(v, axis=0), axis=1)))


@dataclass(frozen=True)
class TripleJunction:
    """Three curve ends meeting at one point.

    ``ends[j]`` is 0 for the first vertex of curve ``curves[j]`` and 1 for its
    last vertex.  ``orient`` is the triple ``o^k``.
    """

    curves: tuple
    ends: tuple
    orient: tuple

    def __post_init__(self):
        if len(self.curves) != 3 or len(self.ends) != 3 or len(self.orient) != 3:
            raise ArgumentError("a triple junction needs exactly three members")
        if any(o not in (-1, 1) for o in self.orient):
            raise ArgumentError("junction orientations must be +-1")
        if any(e not in (0, 1) for e in self.ends):
            raise ArgumentError("junction ends must be 0 (first) or 1 (last)")
        if len(set(zip(self.curves, self.ends))) != 3:
            raise ArgumentError("junction members must be distinct curve ends")


@dataclass(frozen=True)
class BoundaryPoint:
    curve: int
    end: int
    wall: str

    @property
    def normal(self):
        return np.array(_WALL_NORMALS[self.wall])

    @property
    def tangent(self):
        """Unit tangent of the wall (counter-clockwise direction)."""
        return rot_cw(-self.normal)


@dataclass(frozen=True)
class RegionTopology:
    """Per region, the bounding curves and their orientation signs.

    ``signs[l][i] = +1`` means the normal of curve ``i`` points out of region
    ``l``; ``-1`` means it points into it.
    """

    signs: tuple

    def __post_init__(self):
        object.__setattr__(
            self, "signs", tuple({int(k): int(v) for k, v in s.items()} for s in self.signs)
        )
        for s in self.signs:
            if any(v not in (-1, 1) for v in s.values()):
                raise ArgumentError("region orientations must be +-1")

    @property
    def n_regions(self) -> int:
        return len(self.signs)

    def sides(self, n_curves):
        """Arrays ``(b_plus, b_minus)``: the regions each normal points into / out of."""
        bp = -np.ones(n_curves, dtype=int)
        bm = -np.ones(n_curves, dtype=int)
        for ell, s in enumerate(self.signs):
            for i, o in s.items():
                target = bm if o == 1 else bp
                if target[i] != -1:
                    raise TopologyError(f"curve {i} is claimed twice on one side")
                target[i] = ell
        if np.any(bp < 0) or np.any(bm < 0):
            missing = np.where((bp < 0) | (bm < 0))[0]
            raise TopologyError(f"curves {missing.tolist()} do not separate two regions")
        if np.any(bp == bm):
            raise TopologyError("a curve has the same region on both sides")
        return bp, bm

    def indicator(self, ell, n_curves):
        """Per-curve weights ``chi_i = o_i`` for curves bounding ``ell``, else 0."""
        chi = np.zeros(n_curves)
        for i, o in self.signs[ell].items():
            chi[i] = o
        return chi


@dataclass(frozen=True, eq=False)
class CurveNetwork:
    curves: tuple
    junctions: tuple = ()
    boundary_points: tuple = ()
    regions: RegionTopology = field(default_factory=lambda: RegionTopology(()))
    domain: Box = Box(-1.0, 1.0, -1.0, 1.0)
    dim: int = 2

    def __post_init__(self):
        if self.dim != 2:
            raise Unsupported("only two-dimensional curve networks are implemented")
        object.__setattr__(self, "curves", tuple(self.curves))
        object.__setattr__(self, "junctions", tuple(self.junctions))
        object.__setattr__(self, "boundary_points", tuple(self.boundary_points))

    # ------------------------------------------------------------------
    # construction
    @classmethod
    def build(cls, curves, junctions=(), boundary_points=(), regions=(), domain=None):
        """Validate a network and snap junction / boundary endpoints exactly.

        ``curves`` may hold arrays (open curves) or PolyCurve objects.
        ``boundary_points`` items are ``(curve, end)`` pairs or BoundaryPoint.
        ``regions`` is a sequence of ``{curve: sign}`` dicts.  Junctions may be
        given as ``(curves, ends)`` pairs, in which case the orientation triple
        is derived from the ends.
        """
        domain = domain or Box(-1.0, 1.0, -1.0, 1.0)
        cl = [c if isinstance(c, PolyCurve) else PolyCurve(np.asarray(c, float)) for c in curves]
        verts = [np.array(c.vertices) for c in cl]
        tol = 1e-12 * domain.diameter * 1e3

        js = []
        for j in junctions:
            if not isinstance(j, TripleJunction):
                if len(j) == 2:
                    cur, ends = j
                    j = TripleJunction(tuple(cur), tuple(ends), junction_orientation(ends))
                else:
                    j = TripleJunction(*j)
            pts = [verts[i][-1 if e else 0] for i, e in zip(j.curves, j.ends)]
            spread = max(np.linalg.norm(p - pts[0]) for p in pts)
            if spread > tol:
                raise TopologyError(f"junction members do not coincide (spread {spread:.3e})")
            anchor = pts[0].copy()
            for i, e in zip(j.curves, j.ends):
                verts[i][-1 if e else 0] = anchor
            js.append(j)

        bps = []
        for b in boundary_points:
            if not isinstance(b, BoundaryPoint):
                i, e = b
                p = verts[i][-1 if e else 0]
                wall = domain.wall_of(p, tol=tol)
                if wall is None:
                    raise TopologyError(f"boundary point of curve {i} is not on the boundary")
                b = BoundaryPoint(int(i), int(e), wall)
            p = verts[b.curve][-1 if b.end else 0]
            verts[b.curve][-1 if b.end else 0] = domain.snap_to_wall(p, b.wall)
            bps.append(b)

        cl = [PolyCurve(v, c.closed) for v, c in zip(verts, cl)]
        rt = regions if isinstance(regions, RegionTopology) else RegionTopology(tuple(regions))
        net = cls(tuple(cl), tuple(js), tuple(bps), rt, domain)
        net.validate()
        return net

    def validate(self):
        """Check topology invariants; raise TopologyError on violation."""
        for c in self.curves:
            seg = self._segment_vectors_of(c)
            if np.any(np.linalg.norm(seg, axis=1) <= 0.0):
                raise DegenerateSegment("curve has a zero-length segment")
        used = {}
        for k, j in enumerate(self.junctions):
            for i, e in zip(j.curves, j.ends):
                if self.curves[i].closed:
                    raise TopologyError("closed curves cannot end at a junction")
                used.setdefault((i, e), []).append(("J", k))
            s = [1 if e else -1 for e in j.ends]
            prod = {o * si for o, si in zip(j.orient, s)}
            if len(prod) != 1:
                raise TopologyError(f"junction {k} orientation {j.orient} is inconsistent with its ends")
        for k, b in enumerate(self.boundary_points):
            used.setdefault((b.curve, b.end), []).append(("B", k))
            p = self.curves[b.curve].vertices[-1 if b.end else 0]
            if self.domain.wall_of(p, tol=1e-12 * self.domain.diameter) is None:
                raise TopologyError(f"boundary point {k} left the domain boundary")
        for i, c in enumerate(self.curves):
            if c.closed:
                continue
            for e in (0, 1):
                n = len(used.get((i, e), []))
                if n != 1:
                    raise TopologyError(f"end {e} of curve {i} is attached {n} times (need exactly 1)")
        if self.regions.n_regions:
            self.regions.sides(len(self.curves))

    def with_positions(self, X):
        """Same topology, new vertex positions (global stacked array)."""
        X = np.asarray(X, dtype=float)
        if X.shape != (self.n_vertices, 2):
            raise ArgumentError("position array does not match the network")
        cl = tuple(
            PolyCurve(X[self.offsets[i] : self.offsets[i + 1]], c.closed)
            for i, c in enumerate(self.curves)
        )
        return CurveNetwork(cl, self.junctions, self.boundary_points, self.regions, self.domain)

    # ------------------------------------------------------------------
    # indexing
    @property
    def n_curves(self) -> int:
        return len(self.curves)

    @property
    def n_regions(self) -> int:
        return self.regions.n_regions

    @cached_property
    def offsets(self):
        return np.concatenate([[0], np.cumsum([c.n_vertices for c in self.curves])]).astype(int)

    @property
    def n_vertices(self) -> int:
        return int(self.offsets[-1])

    @cached_property
    def X(self):
        X = np.vstack([c.vertices for c in self.curves]) if self.curves else np.zeros((0, 2))
        X.setflags(write=False)
        return X

    @cached_property
    def _segments(self):
        a, b, cid = [], [], []
        for i, c in enumerate(self.curves):
            o = self.offsets[i]
            k = c.n_vertices
            ia = np.arange(c.n_segments)
            a.append(o + ia)
            b.append(o + (ia + 1) % k)
            cid.append(np.full(c.n_segments, i))
        if not a:
            z = np.zeros(0, dtype=int)
            return z, z, z
        return np.concatenate(a), np.concatenate(b), np.concatenate(cid)

    @property
    def seg_a(self):
        return self._segments[0]

    @property
    def seg_b(self):
        return self._segments[1]

    @property
    def seg_curve(self):
        return self._segments[2]

    @cached_property
    def vertex_curve(self):
        return np.repeat(np.arange(self.n_curves), np.diff(self.offsets))

    def end_index(self, curve, end):
        """Global vertex index of the first (end=0) or last (end=1) vertex of a curve."""
        return int(self.offsets[curve] if end == 0 else self.offsets[curve + 1] - 1)

    @cached_property
    def junction_vertices(self):
        """(I_T, 3) global indices of the junction member vertices."""
        return np.array(
            [[self.end_index(i, e) for i, e in zip(j.curves, j.ends)] for j in self.junctions],
            dtype=int,
        ).reshape(-1, 3)

    @cached_property
    def boundary_vertices(self):
        return np.array([self.end_index(b.curve, b.end) for b in self.boundary_points], dtype=int)

    @cached_property
    def interior_mask(self):
        """True for vertices in Q_{Gamma_i}^circ (not at junctions or boundary points)."""
        m = np.ones(self.n_vertices, dtype=bool)
        m[self.junction_vertices.ravel()] = False
        m[self.boundary_vertices] = False
        return m

    # ------------------------------------------------------------------
    # geometry
    @staticmethod
    def _segment_vectors_of(c):
        v = c.vertices
        if c.closed:
            return np.roll(v, -1, axis=0) - v
        return np.diff(v, axis=0)

    def segment_vectors(self, X=None):
        X = self.X if X is None else X
        return X[self.seg_b] - X[self.seg_a]

    def segment_lengths(self, X=None):
        return np.linalg.norm(self.segment_vectors(X), axis=1)

    def segment_normals(self, X=None):
        d = self.segment_vectors(X)
        ln = np.linalg.norm(d, axis=1)
        if np.any(ln <= 0.0):
            raise DegenerateSegment("zero-length segment")
        return rot_cw(d) / ln[:, None]

    def vertex_lambda(self):
        """|Lambda(q)|: summed length of the segments incident to each vertex."""
        ln = self.segment_lengths()
        lam = np.zeros(self.n_vertices)
        np.add.at(lam, self.seg_a, ln)
        np.add.at(lam, self.seg_b, ln)
        return lam

    def vertex_normals(self):
        """Length-weighted vertex normals omega (per curve vertex)."""
        d = self.segment_vectors()
        a = rot_cw(d)  # |sigma| * nu
        acc = np.zeros((self.n_vertices, 2))
        np.add.at(acc, self.seg_a, a)
        np.add.at(acc, self.seg_b, a)
        lam = self.vertex_lambda()
        if np.any(lam <= 0.0):
            raise TopologyError("isolated vertex")
        return acc / lam[:, None]

    def curve_lengths(self):
        ln = self.segment_lengths()
        return np.bincount(self.seg_curve, weights=ln, minlength=self.n_curves)

    def region_rings(self, ell, X=None):
        """Closed counter-clockwise-positive rings bounding region ``ell``."""
        X = self.X if X is None else X
        return _region_rings(self, ell, X)

    def region_area(self, ell, X=None):
        return region_area(self, ell, X)

    # ------------------------------------------------------------------
    def to_text(self) -> str:
        return dumps(self)

    @classmethod
    def from_text(cls, text: str) -> "CurveNetwork":
        return loads(text)


def junction_orientation(ends):
    """Orientation triple consistent with the local picture at a junction.

    ``(o_j nu_j, mu_j)`` share orientation iff ``o_j`` times (+1 for a last
    vertex, -1 for a first vertex) is the same for all three members; the
    representative with ``o = +1`` on last vertices is returned.
    """
    return tuple(1 if e else -1 for e in ends)


# ----------------------------------------------------------------------
# module-level operations


def segment_normal(curve: PolyCurve, j: int):
    q0, q1 = curve.segment(j)
    d = q1 - q0
    n = float(np.hypot(d[0], d[1]))
    if n == 0.0:
        raise DegenerateSegment(f"segment {j} has zero length")
    return rot_cw(d) / n


def vertex_normal(net: CurveNetwork, i: int, q: int):
    """Weighted vertex normal of local vertex ``q`` on curve ``i``."""
    c = net.curves[i]
    if not 0 <= q < c.n_vertices:
        raise TopologyError("vertex index out of range")
    segs = []
    if c.closed:
        segs = [(q - 1) % c.n_vertices, q]
    else:
        if q > 0:
            segs.append(q - 1)
        if q < c.n_vertices - 1:
            segs.append(q)
    if not segs:
        raise TopologyError("isolated vertex")
    acc = np.zeros(2)
    lam = 0.0
    for j in segs:
        q0, q1 = c.segment(j)
        d = q1 - q0
        acc += rot_cw(d)
        lam += float(np.hypot(*d))
    if lam <= 0.0:
        raise TopologyError("vertex with zero incident length")
    return acc / lam


def time_weighted_normals(net: CurveNetwork, X_new):
    """Per-segment time-averaged normals for a linear motion to ``X_new``.

    The oriented length vector of a segment moving linearly in time is
    linear in t, so its time average is the mean of both end states.
    """
    X_new = np.asarray(X_new, dtype=float)
    if X_new.shape != net.X.shape:
        raise ArgumentError("displaced positions do not match the network")
    a0 = rot_cw(net.segment_vectors())
    ln0 = np.linalg.norm(a0, axis=1)
    if np.any(ln0 <= 0.0):
        raise DegenerateSegment("zero-length segment in the old network")
    a1 = rot_cw(net.segment_vectors(X_new))
    return 0.5 * (a0 + a1) / ln0[:, None]


def _check_pair(net, u, v):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.shape[0] != net.n_vertices:
        raise ArgumentError("nodal fields must both have one entry per curve vertex")
    if u.ndim == 1:
        return u[:, None], v[:, None]
    return u, v


def lumped_inner(net: CurveNetwork, u, v) -> float:
    u, v = _check_pair(net, u, v)
    ln = net.segment_lengths()
    a, b = net.seg_a, net.seg_b
    uv = np.sum(u * v, axis=1)
    return float(np.sum(0.5 * ln * (uv[a] + uv[b])))


def exact_inner(net: CurveNetwork, u, v) -> float:
    u, v = _check_pair(net, u, v)
    ln = net.segment_lengths()
    a, b = net.seg_a, net.seg_b
    ua, ub, va, vb = u[a], u[b], v[a], v[b]
    s = (
        2 * np.sum(ua * va, axis=1)
        + np.sum(ua * vb, axis=1)
        + np.sum(ub * va, axis=1)
        + 2 * np.sum(ub * vb, axis=1)
    )
    return float(np.sum(ln * s) / 6.0)


def interfacial_energy(net: CurveNetwork, gamma) -> float:
    gamma = np.asarray(gamma, dtype=float).reshape(-1)
    if net.n_curves == 0:
        return 0.0
    if gamma.size == 1:
        gamma = np.full(net.n_curves, float(gamma[0]))
    if gamma.shape[0] != net.n_curves:
        raise ArgumentError("one surface tension per curve is required")
    if np.any(gamma <= 0):
        raise ArgumentError("surface tensions must be positive")
    return float(np.dot(gamma, net.curve_lengths()))


def shoelace(ring) -> float:
    r = np.asarray(ring, dtype=float)
    x, y = r[:, 0], r[:, 1]
    xs, ys = np.roll(x, -1), np.roll(y, -1)
    # shifted to the first vertex for round-off independence of the origin
    x0, y0 = x[0], y[0]
    return 0.5 * float(np.sum((x - x0) * (ys - y0) - (xs - x0) * (y - y0)))


def _region_rings(net: CurveNetwork, ell: int, X):
    signs = net.regions.signs[ell]
    box = net.domain
    rings = []
    pieces = []
    for i, o in sorted(signs.items()):
        pts = X[net.offsets[i] : net.offsets[i + 1]]
        c = net.curves[i]
        if c.closed:
            rings.append(pts if o == 1 else pts[::-1])
            continue
        pieces.append((i, pts if o == 1 else pts[::-1], o))

    # endpoint attachment lookup
    attach = {}
    for k, j in enumerate(net.junctions):
        for i, e in zip(j.curves, j.ends):
            attach[(i, e)] = ("J", k)
    for k, b in enumerate(net.boundary_points):
        attach[(b.curve, b.end)] = ("B", k)

    def start_end(i, o):
        # (start end-id, finish end-id) of the piece as traversed
        return (0, 1) if o == 1 else (1, 0)

    starts = {}
    for idx, (i, pts, o) in enumerate(pieces):
        s, _ = start_end(i, o)
        key = attach.get((i, s))
        if key is None:
            raise TopologyError(f"curve {i} end {s} is not attached")
        if key in starts:
            raise TopologyError(f"region {ell} has two pieces leaving {key}")
        starts[key] = idx

    bstarts = sorted(
        (box.boundary_coordinate(pieces[idx][1][0]), idx) for key, idx in starts.items() if key[0] == "B"
    )
    corners = box.corners()
    corner_s = np.array([0.0, box.width, box.width + box.height, 2 * box.width + box.height])
    per = box.perimeter

    used = set()
    for first in range(len(pieces)):
        if first in used:
            continue
        ring = []
        idx = first
        guard = 0
        while True:
            if idx in used:
                if idx == first:
                    break
                raise TopologyError(f"region {ell} boundary does not close")
            used.add(idx)
            i, pts, o = pieces[idx]
            ring.append(pts[:-1])
            _, f = start_end(i, o)
            key = attach[(i, f)]
            if key[0] == "J":
                if key not in starts:
                    raise TopologyError(f"region {ell} boundary is open at junction {key[1]}")
                idx = starts[key]
            else:
                s0 = box.boundary_coordinate(pts[-1])
                # next boundary start counter-clockwise
                best = None
                for s1, j in bstarts:
                    ds = (s1 - s0) % per
                    if best is None or ds < best[0]:
                        best = (ds, j, s1)
                if best is None:
                    raise TopologyError(f"region {ell} leaves the boundary and never returns")
                ds, j, s1 = best
                walk = [pts[-1]]
                for cs, cp in zip(corner_s, corners):
                    dc = (cs - s0) % per
                    if 0.0 < dc < ds:
                        walk.append((dc, cp))
                tail = sorted(walk[1:], key=lambda t: t[0])
                ring.append(np.vstack([walk[0]] + [cp for _, cp in tail]))
                idx = j
            guard += 1
            if guard > 10 * len(pieces) + 10:
                raise TopologyError("region ring construction did not terminate")
        rings.append(np.vstack(ring))

    total = sum(shoelace(r) for r in rings)
    if total <= 0.0:
        rings.append(corners)
    return rings


def region_area(net: CurveNetwork, ell: int, X=None) -> float:
    X = net.X if X is None else np.asarray(X, dtype=float)
    rings = _region_rings(net, ell, X)
    area = sum(shoelace(r) for r in rings)
    if area < -1e-12 * net.domain.area:
        raise TopologyError(f"region {ell} has negative area {area}")
    return area


def region_areas(net: CurveNetwork, X=None):
    return np.array([region_area(net, ell, X) for ell in range(net.n_regions)])


def point_in_rings(points, rings):
    """Even-odd containment test of many points against a set of rings."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    inside = np.zeros(pts.shape[0], dtype=bool)
    if not rings:
        return inside
    a = np.vstack([r for r in rings])
    b = np.vstack([np.roll(r, -1, axis=0) for r in rings])
    px = pts[:, 0][:, None]
    py = pts[:, 1][:, None]
    ay, by = a[:, 1][None, :], b[:, 1][None, :]
    ax, bx = a[:, 0][None, :], b[:, 0][None, :]
    cond = (ay > py) != (by > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = ax + (py - ay) * (bx - ax) / (by - ay)
    cross = cond & (px < xint)
    inside = (np.count_nonzero(cross, axis=1) % 2) == 1
    return inside


def volume_difference_discrete(net: CurveNetwork, X_new, ell: int) -> float:
    """Lumped displacement flux with time-weighted normals for region ``ell``."""
    X_new = np.asarray(X_new, dtype=float)
    nu_half = time_weighted_normals(net, X_new)
    dX = X_new - net.X
    ln = net.segment_lengths()
    chi = net.regions.indicator(ell, net.n_curves)[net.seg_curve]
    a, b = net.seg_a, net.seg_b
    flux = 0.5 * ln * (np.sum(dX[a] * nu_half, axis=1) + np.sum(dX[b] * nu_half, axis=1))
    return float(np.sum(chi * flux))


def junction_W_vectors(net: CurveNetwork, k: int):
    """The three vectors o_j |Lambda| omega at junction ``k``."""
    j = net.junctions[k]
    lam = net.vertex_lambda()
    om = net.vertex_normals()
    out = []
    for (i, e), o in zip(zip(j.curves, j.ends), j.orient):
        g = net.end_index(i, e)
        out.append(o * lam[g] * om[g])
    return np.array(out)


def connected_components(net: CurveNetwork):
    """Lists of curve indices linked through triple junctions."""
    parent = list(range(net.n_curves))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for j in net.junctions:
        r = find(j.curves[0])
        for c in j.curves[1:]:
            parent[find(c)] = r
    comps = {}
    for i in range(net.n_curves):
        comps.setdefault(find(i), []).append(i)
    return list(comps.values())


@dataclass
class AssumptionReport:
    interior_ok: np.ndarray
    boundary_ok: np.ndarray
    junction_ok: np.ndarray
    component_ok: list

    @property
    def a2(self) -> bool:
        return bool(np.all(self.interior_ok) and np.all(self.boundary_ok) and np.all(self.junction_ok))

    @property
    def a3(self) -> bool:
        return all(self.component_ok)

    @property
    def ok(self) -> bool:
        return self.a2 and self.a3

    def failures(self):
        out = []
        if not self.a2:
            out.append("A2")
        if not self.a3:
            out.append("A3")
        return out


def check_assumptions(net: CurveNetwork, rtol: float = 1e-10) -> AssumptionReport:
    """Local (A2) and global (A3) non-degeneracy checks on the vertex normals.

    The inf-sup condition (A1) is a property of the bulk spaces and is not
    checked here.
    """
    om = net.vertex_normals()
    interior = net.interior_mask
    mag = np.linalg.norm(om, axis=1)
    interior_ok = np.where(interior, mag > rtol, True)

    boundary_ok = np.ones(len(net.boundary_points), dtype=bool)
    for k, b in enumerate(net.boundary_points):
        g = net.end_index(b.curve, b.end)
        n = b.normal
        t = om[g] - np.dot(om[g], n) * n
        boundary_ok[k] = np.linalg.norm(t) > rtol

    junction_ok = np.ones(len(net.junctions), dtype=bool)
    for k in range(len(net.junctions)):
        W = junction_W_vectors(net, k)
        d1, d2 = W[0] - W[2], W[1] - W[2]
        scale = max(np.linalg.norm(d1) * np.linalg.norm(d2), 1e-300)
        det = d1[0] * d2[1] - d1[1] * d2[0]
        junction_ok[k] = abs(det) > rtol * scale and scale > 1e-300

    component_ok = []
    for comp in connected_components(net):
        vecs = [om[g] for i in comp for g in range(net.offsets[i], net.offsets[i + 1]) if interior[g]]
        for b in net.boundary_points:
            if b.curve in comp:
                vecs.append(b.normal)
        if not vecs:
            component_ok.append(False)
            continue
        M = np.array(vecs)
        s = np.linalg.svd(M, compute_uv=False)
        component_ok.append(bool(s.size >= 2 and s[1] > rtol * max(s[0], 1e-300)))
    return AssumptionReport(interior_ok, boundary_ok, junction_ok, component_ok)


# ----------------------------------------------------------------------
# text serialization


def dumps(net: CurveNetwork) -> str:
    d = net.domain
    lines = [f"domain {d.xmin!r} {d.xmax!r} {d.ymin!r} {d.ymax!r}"]
    for i, c in enumerate(net.curves):
        lines.append(f"curve {i + 1}" + (" closed" if c.closed else ""))
        for x, y in c.vertices:
            lines.append(f"{float(x)!r} {float(y)!r}")
    for k, j in enumerate(net.junctions):
        mem = " ".join(f"{i + 1} {e + 1}" for i, e in zip(j.curves, j.ends))
        ori = " ".join(str(o) for o in j.orient)
        lines.append(f"junction {k + 1} {mem} {ori}")
    for k, b in enumerate(net.boundary_points):
        lines.append(f"bpoint {k + 1} {b.curve + 1} {b.end + 1}")
    for ell, s in enumerate(net.regions.signs):
        ids = " ".join(f"{'+' if o > 0 else '-'}{i + 1}" for i, o in sorted(s.items()))
        lines.append(f"region {ell + 1} : {ids}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> CurveNetwork:
    domain = None
    curves, closed = [], []
    junctions, bpoints, regions = [], [], {}
    cur = None
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        head = tok[0]
        if head == "domain":
            domain = Box(*(float(t) for t in tok[1:5]))
            cur = None
        elif head == "curve":
            cid = int(tok[1]) - 1
            if cid != len(curves):
                raise ArgumentError("curve blocks must be numbered consecutively from 1")
            curves.append([])
            closed.append(len(tok) > 2 and tok[2] == "closed")
            cur = curves[-1]
        elif head == "junction":
            v = [int(t) for t in tok[2:]]
            if len(v) != 9:
                raise ArgumentError("junction lines need three (curve, end) pairs and three signs")
            junctions.append(
                TripleJunction(
                    (v[0] - 1, v[2] - 1, v[4] - 1), (v[1] - 1, v[3] - 1, v[5] - 1), tuple(v[6:9])
                )
            )
            cur = None
        elif head == "bpoint":
            bpoints.append((int(tok[2]) - 1, int(tok[3]) - 1))
            cur = None
        elif head == "region":
            ell = int(tok[1]) - 1
            if tok[2] != ":":
                raise ArgumentError("region lines look like 'region l : +i -j'")
            regions[ell] = {abs(int(t)) - 1: (1 if int(t) > 0 else -1) for t in tok[3:]}
            cur = None
        else:
            if cur is None:
                raise ArgumentError(f"unexpected line: {raw!r}")
            cur.append((float(tok[0]), float(tok[1])))
    pcs = [PolyCurve(np.array(c, dtype=float), cl) for c, cl in zip(curves, closed)]
    regs = [regions[k] for k in sorted(regions)]
    return CurveNetwork.build(pcs, junctions, bpoints, regs, domain)


def regular_polygon(center, radius, n, phase=0.0):
    """Counter-clockwise regular n-gon inscribed in a circle."""
    th = phase + 2 * np.pi * np.arange(n) / n
    return np.column_stack([center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)])


def closed_curve_network(vertices, domain=None):
    """Single closed counter-clockwise curve: region 0 outside, region 1 inside."""
    c = PolyCurve(np.asarray(vertices, float), closed=True)
    return CurveNetwork.build([c], regions=[{0: -1}, {0: 1}], domain=domain)


__all__: Sequence[str] = [
    "Box",
    "PolyCurve",
    "TripleJunction",
    "BoundaryPoint",
    "RegionTopology",
    "CurveNetwork",
    "segment_normal",
    "vertex_normal",
    "time_weighted_normals",
    "lumped_inner",
    "exact_inner",
    "interfacial_energy",
    "region_area",
    "region_areas",
    "volume_difference_discrete",
    "junction_W_vectors",
    "check_assumptions",
    "dumps",
    "loads",
]
