"""Cut-cell geometry of an unfitted interface network on a bulk mesh.

The interface is clipped against every element it crosses.  For robust
predicates the interface is translated, for clipping purposes only, by a
generic tiny vector (boundary-point vertices only move along their wall),
so no interface vertex or segment coincides with a mesh vertex or edge.
Surface quadrature afterwards uses the clipping parameters on the
unperturbed segments.

Sub-regions of a cut element are never assembled into explicit polygons.
Instead the oriented boundary of ``R_l n e`` is collected as a soup of
segments (interface pieces plus element-edge pieces) and every integral is
a signed sum over the fan triangles ``(c, p, q)`` with ``c`` the element
centroid, which is exact for polynomial integrands.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ArgumentError, GeometryError
from .mesh import BulkMesh, barycentric
from .network import CurveNetwork, point_in_rings
from .quadrature import TRI7_BARY, TRI7_W, signed_areas, triangle_points

log = logging.getLogger(__name__)

SHIFT_SCALE = 1e-11
SHIFT_ANGLE = 0.3


def perturbed_positions(net: CurveNetwork, H: float):
    """Interface vertices translated by the generic clipping offset."""
    d = SHIFT_SCALE * H * np.array([np.cos(SHIFT_ANGLE), np.sin(SHIFT_ANGLE)])
    shift = np.tile(d, (net.n_vertices, 1))
    for b, g in zip(net.boundary_points, net.boundary_vertices):
        n = b.normal
        shift[g] = d - np.dot(d, n) * n
    return net.X + shift, float(np.linalg.norm(d))


def regions_of_points(net: CurveNetwork, X, pts):
    """Region index of each point for the network with vertex positions X."""
    pts = np.array(np.atleast_2d(pts), dtype=float)
    # points on a wall are ambiguous for the even-odd test: move them inside
    box = net.domain
    eps = 1e-9 * box.min_side
    lo = np.array([box.xmin, box.ymin]) + eps
    hi = np.array([box.xmax, box.ymax]) - eps
    pts = np.clip(pts, lo, hi)
    out = np.full(pts.shape[0], -1, dtype=int)
    for ell in range(net.n_regions):
        rings = net.region_rings(ell, X)
        todo = np.where(out < 0)[0]
        if todo.size == 0:
            break
        for s in range(0, todo.size, 2048):
            idx = todo[s : s + 2048]
            inside = point_in_rings(pts[idx], rings)
            out[idx[inside]] = ell
    if np.any(out < 0):
        raise GeometryError("point not contained in any region")
    return out


@dataclass
class CutGeometry:
    """Clipped interface data on a fixed (mesh, network) pair."""

    mesh: BulkMesh
    net: CurveNetwork
    elem_region: np.ndarray  # region of uncut elements, -1 on cut elements
    incidence: np.ndarray  # (E, I_R) bool
    sub_area: np.ndarray  # (E, I_R)
    fan_pts: np.ndarray  # (M, 3, 2)
    fan_elem: np.ndarray
    fan_region: np.ndarray
    fan_area: np.ndarray  # signed
    piece_seg: np.ndarray
    piece_elem: np.ndarray
    piece_t0: np.ndarray
    piece_t1: np.ndarray
    shift: float

    @property
    def n_regions(self) -> int:
        return self.incidence.shape[1]

    @property
    def cut_elements(self):
        return np.where(self.elem_region < 0)[0]

    def region_areas(self):
        return self.sub_area.sum(axis=0)

    def region_quadrature(self, ell, bary=TRI7_BARY, w=TRI7_W):
        """Quadrature over region ``ell``: (element, points, weights) per point."""
        mesh = self.mesh
        full = np.where(self.elem_region == ell)[0]
        P = triangle_points(mesh.points[mesh.triangles[full]], bary)
        W = mesh.areas[full][:, None] * w[None, :]
        sel = self.fan_region == ell
        Pf = triangle_points(self.fan_pts[sel], bary)
        Wf = self.fan_area[sel][:, None] * w[None, :]
        nq = bary.shape[0]
        el = np.concatenate([np.repeat(full, nq), np.repeat(self.fan_elem[sel], nq)])
        pts = np.vstack([P.reshape(-1, 2), Pf.reshape(-1, 2)])
        wt = np.concatenate([W.ravel(), Wf.ravel()])
        return el, pts, wt

    def piece_points(self, t):
        """Points on the unperturbed segments at local piece parameters ``t`` in [0,1]."""
        net = self.net
        A = net.X[net.seg_a][self.piece_seg]
        B = net.X[net.seg_b][self.piece_seg]
        s = self.piece_t0[:, None] + np.asarray(t)[None, :] * (self.piece_t1 - self.piece_t0)[:, None]
        return A[:, None, :] + s[..., None] * (B - A)[:, None, :], s


def _traverse(mesh: BulkMesh, A, B):
    """Clip segments [A_j, B_j] against the mesh; returns pieces and end data."""
    tri = mesh.points[mesh.triangles]
    cen = mesh.centroids
    tree = cKDTree(cen)
    rmax = float(mesh.diameters.max())
    mid = 0.5 * (A + B)
    half = 0.5 * np.linalg.norm(B - A, axis=1)
    cand = tree.query_ball_point(mid, half + rmax)
    ps = np.concatenate([np.full(len(c), j, dtype=np.int64) for j, c in enumerate(cand)])
    pe = np.concatenate([np.asarray(c, dtype=np.int64) for c in cand])
    if ps.size == 0:
        z = np.zeros(0)
        return np.zeros(0, int), np.zeros(0, int), z, z
    # bounding-box filter
    emin, emax = tri.min(axis=1), tri.max(axis=1)
    smin, smax = np.minimum(A, B), np.maximum(A, B)
    ok = np.all((smin[ps] <= emax[pe]) & (smax[ps] >= emin[pe]), axis=1)
    ps, pe = ps[ok], pe[ok]
    l0 = barycentric(tri[pe], A[ps])
    l1 = barycentric(tri[pe], B[ps])
    d = l1 - l0
    lo = np.zeros(ps.size)
    hi = np.ones(ps.size)
    empty = np.zeros(ps.size, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = -l0 / d
    for k in range(3):
        pos = d[:, k] > 0
        neg = d[:, k] < 0
        zer = d[:, k] == 0
        lo = np.where(pos, np.maximum(lo, r[:, k]), lo)
        hi = np.where(neg, np.minimum(hi, r[:, k]), hi)
        empty |= zer & (l0[:, k] < 0)
    keep = ~empty & (hi - lo > 1e-13)
    return ps[keep], pe[keep], lo[keep], hi[keep]


def clip_elements(mesh: BulkMesh, net: CurveNetwork) -> CutGeometry:
    """Cut geometry of ``net`` on ``mesh``."""
    if net.n_regions == 0:
        raise ArgumentError("network has no region topology")
    R = net.n_regions
    E = mesh.n_elements
    Xp, shift = perturbed_positions(net, mesh.H)
    A = Xp[net.seg_a]
    B = Xp[net.seg_b]
    ps, pe, t0, t1 = _traverse(mesh, A, B)

    # every segment must be covered by its pieces
    order = np.lexsort((t0, ps))
    ps, pe, t0, t1 = ps[order], pe[order], t0[order], t1[order]
    cover = np.bincount(ps, weights=t1 - t0, minlength=A.shape[0])
    if np.any(np.abs(cover - 1.0) > 1e-9):
        bad = int(np.argmax(np.abs(cover - 1.0)))
        raise GeometryError(f"segment {bad} is not covered by the mesh (coverage {cover[bad]:.6g})")

    is_cut = np.zeros(E, dtype=bool)
    is_cut[pe] = True
    cut = np.where(is_cut)[0]

    # region of uncut elements by centroid test
    elem_region = np.full(E, -1, dtype=int)
    unc = np.where(~is_cut)[0]
    if unc.size:
        elem_region[unc] = regions_of_points(net, Xp, mesh.centroids[unc])

    tri = mesh.points[mesh.triangles]
    cen = mesh.centroids

    # interface piece end points and their position on the element boundary
    P = A[ps] + t0[:, None] * (B[ps] - A[ps])
    Q = A[ps] + t1[:, None] * (B[ps] - A[ps])
    cross_e, cross_k, cross_s = [], [], []
    for pts in (P, Q):
        lam = barycentric(tri[pe], pts)
        k = np.argmin(lam, axis=1)
        on = lam[np.arange(k.size), k] <= 1e-9
        cross_e.append(pe[on])
        cross_k.append(k[on])
        cross_s.append(lam[np.arange(k.size), (k + 2) % 3][on])
    # element-edge subdivision
    ce = np.concatenate(cross_e + [np.repeat(cut, 3)] * 2)
    ck = np.concatenate(cross_k + [np.tile([0, 1, 2], cut.size)] * 2)
    cs = np.concatenate(cross_s + [np.zeros(3 * cut.size), np.ones(3 * cut.size)])
    cs = np.clip(cs, 0.0, 1.0)
    o = np.lexsort((cs, ck, ce))
    ce, ck, cs = ce[o], ck[o], cs[o]
    same = (ce[1:] == ce[:-1]) & (ck[1:] == ck[:-1])
    ia = np.where(same & (cs[1:] - cs[:-1] > 1e-14))[0]
    ee, kk, sa, sb = ce[ia], ck[ia], cs[ia], cs[ia + 1]
    va = tri[ee, (kk + 1) % 3]
    vb = tri[ee, (kk + 2) % 3]
    ep = va + sa[:, None] * (vb - va)
    eq = va + sb[:, None] * (vb - va)
    ereg = regions_of_points(net, Xp, 0.5 * (ep + eq)) if ee.size else np.zeros(0, int)

    # fans: element-edge pieces, interface pieces forward (b^-) and reversed (b^+)
    bp, bm = net.regions.sides(net.n_curves)
    cur = net.seg_curve[ps]
    fan_p = np.vstack([ep, P, Q])
    fan_q = np.vstack([eq, Q, P])
    fan_elem = np.concatenate([ee, pe, pe])
    fan_region = np.concatenate([ereg, bm[cur], bp[cur]])
    fan_pts = np.stack([cen[fan_elem], fan_p, fan_q], axis=1)
    fan_area = signed_areas(fan_pts)

    sub_area = np.zeros((E, R))
    unc_mask = elem_region >= 0
    sub_area[np.where(unc_mask)[0], elem_region[unc_mask]] = mesh.areas[unc_mask]
    np.add.at(sub_area, (fan_elem, fan_region), fan_area)

    area = mesh.areas
    err = np.abs(sub_area.sum(axis=1) - area)
    if np.any(err > 1e-10 * area):
        bad = int(np.argmax(err / area))
        raise GeometryError(f"sub-areas of element {bad} do not sum to its area (rel err {err[bad] / area[bad]:.3e})")
    if np.any(sub_area < -1e-10 * area[:, None]):
        raise GeometryError("negative sub-region area; inconsistent region orientation")
    # slivers explained by the clipping offset do not count as incidence
    sliver = 8.0 * shift * mesh.diameters
    incidence = sub_area > np.maximum(1e-14 * area, sliver)[:, None]
    incidence[unc_mask] = False
    incidence[np.where(unc_mask)[0], elem_region[unc_mask]] = True
    if not np.all(incidence.any(axis=1)):
        raise GeometryError("element without region")

    return CutGeometry(
        mesh=mesh,
        net=net,
        elem_region=elem_region,
        incidence=incidence,
        sub_area=sub_area,
        fan_pts=fan_pts,
        fan_elem=fan_elem,
        fan_region=fan_region,
        fan_area=fan_area,
        piece_seg=ps,
        piece_elem=pe,
        piece_t0=t0,
        piece_t1=t1,
        shift=shift,
    )


@dataclass(frozen=True)
class RegionIncidence:
    sets: np.ndarray  # (E, I_R) bool

    def of(self, e):
        return set(np.where(self.sets[e])[0].tolist())


def classify_elements(mesh: BulkMesh, net: CurveNetwork, cut: CutGeometry | None = None) -> RegionIncidence:
    cut = cut if cut is not None else clip_elements(mesh, net)
    return RegionIncidence(cut.incidence.copy())


def phase_average_coefficients(inc, rho, eta):
    """Elementwise arithmetic means of the phase values over I(e)."""
    S = inc.sets if isinstance(inc, RegionIncidence) else np.asarray(inc, dtype=bool)
    rho = np.asarray(rho, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if rho.shape[0] != S.shape[1] or eta.shape[0] != S.shape[1]:
        raise ArgumentError("one density and viscosity per region required")
    if np.any(rho < 0) or np.any(eta <= 0):
        raise ArgumentError("densities must be >= 0 and viscosities > 0")
    n = S.sum(axis=1)
    return (S @ rho) / n, (S @ eta) / n
