"""Discrete spaces: P2 velocity, P1 (+ per-phase enrichment) pressure, surface spaces.

Velocity vectors use a block layout ``[u_x nodes, u_y nodes]`` over the P2
nodes (mesh vertices first, then edge midpoints).  Local P2 node order per
element is ``(v0, v1, v2, e0, e1, e2)`` with edge ``k`` opposite vertex ``k``.

Surface fields live on the per-curve vertices of the network.  Constraints
are encoded by basis matrices whose columns span the constrained spaces:
``EW`` for the curvature space (junction sums ``sum_j o_j chi_j = 0``) and
``EV`` for the displacement space (junction values identified, wall-normal
component removed at boundary points).  Vector surface fields are stored
interleaved, entry ``2 g + c`` for vertex ``g`` and component ``c``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cut import CutGeometry, clip_elements
from .errors import ArgumentError, SpaceError
from .mesh import BulkMesh, barycentric, locate_points
from .network import WALLS, CurveNetwork
from .quadrature import TRI7_BARY, TRI7_W

log = logging.getLogger(__name__)

_WALL_COMPONENT = {"bottom": 1, "top": 1, "left": 0, "right": 0}


# ----------------------------------------------------------------------
# P2 basis


def p2_basis(bary):
    """P2 shape functions at barycentric points, shape (..., 6)."""
    l0, l1, l2 = bary[..., 0], bary[..., 1], bary[..., 2]
    return np.stack(
        [l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1), 4 * l1 * l2, 4 * l2 * l0, 4 * l0 * l1],
        axis=-1,
    )


def bary_gradients(tri_pts):
    """Constant gradients of the barycentric coordinates, shape (E, 3, 2)."""
    p0, p1, p2 = tri_pts[:, 0], tri_pts[:, 1], tri_pts[:, 2]
    det = (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) - (p1[:, 1] - p0[:, 1]) * (p2[:, 0] - p0[:, 0])
    g = np.empty((tri_pts.shape[0], 3, 2))
    # grad l_k = rot(edge opposite k) / det
    for k in range(3):
        a = tri_pts[:, (k + 1) % 3]
        b = tri_pts[:, (k + 2) % 3]
        g[:, k, 0] = (a[:, 1] - b[:, 1]) / det
        g[:, k, 1] = (b[:, 0] - a[:, 0]) / det
    return g


def p2_gradients(bary, G):
    """Gradients of the P2 shape functions.

    ``bary`` has shape (E, Q, 3) and ``G`` (E, 3, 2); returns (E, Q, 6, 2).
    """
    l = bary
    out = np.empty(bary.shape[:2] + (6, 2))
    for k in range(3):
        out[:, :, k, :] = (4 * l[:, :, k] - 1)[..., None] * G[:, None, k, :]
        a, b = (k + 1) % 3, (k + 2) % 3
        out[:, :, 3 + k, :] = 4 * (l[:, :, a, None] * G[:, None, b, :] + l[:, :, b, None] * G[:, None, a, :])
    return out


# ----------------------------------------------------------------------
# velocity


class VelocitySpace:
    def __init__(self, mesh: BulkMesh):
        self.mesh = mesh
        nv, ne = mesh.n_vertices, mesh.n_edges
        self.n_nodes = nv + ne
        self.elem_nodes = np.hstack([mesh.triangles, nv + mesh.tri_edges])
        E = mesh.edges
        self.nodes = np.vstack([mesh.points, 0.5 * (mesh.points[E[:, 0]] + mesh.points[E[:, 1]])])
        fixed = np.zeros((self.n_nodes, 2), dtype=bool)
        walls = mesh.wall_of_points(self.nodes)
        onb = np.zeros(self.n_nodes, dtype=bool)
        be = mesh.boundary_edges
        onb[E[be].ravel()] = True
        onb[nv + be] = True
        for w, name in enumerate(WALLS):
            hit = walls[:, w] & onb
            if name in mesh.noslip:
                fixed[hit, :] = True
            else:
                fixed[hit, _WALL_COMPONENT[name]] = True
        self.fixed = np.concatenate([fixed[:, 0], fixed[:, 1]])
        self.free = np.where(~self.fixed)[0]

    @property
    def dim(self) -> int:
        return 2 * self.n_nodes

    @property
    def n_free(self) -> int:
        return self.free.size

    @cached_property
    def restriction(self):
        """Sparse (n_free, dim) selection of the unconstrained dofs."""
        n = self.free.size
        return sp.csr_matrix((np.ones(n), (np.arange(n), self.free)), shape=(n, self.dim))

    def expand(self, u_free):
        u = np.zeros(self.dim)
        u[self.free] = u_free
        return u

    def component_nodes(self, U):
        U = np.asarray(U)
        return np.column_stack([U[: self.n_nodes], U[self.n_nodes :]])

    def interpolate(self, f):
        """Nodal interpolant of a vector function f(points) -> (n, 2)."""
        v = np.asarray(f(self.nodes), dtype=float)
        return np.concatenate([v[:, 0], v[:, 1]])

    def evaluate(self, U, elem, bary):
        """Field values at points given by (element, barycentric), shape (n, 2)."""
        phi = p2_basis(bary)
        nodes = self.elem_nodes[elem]
        ux = np.sum(phi * U[nodes], axis=1)
        uy = np.sum(phi * U[self.n_nodes + nodes], axis=1)
        return np.column_stack([ux, uy])

    def evaluate_at(self, U, pts):
        el, bary = locate_points(self.mesh, pts)
        return self.evaluate(U, el, bary)


# ----------------------------------------------------------------------
# pressure


class PressureSpace:
    """P1 pressure, optionally enriched by region characteristic functions.

    The constant mode is removed by pinning P1 dof ``pinned``; solutions are
    post-corrected to zero mean.  Enrichment dof ``j`` is the characteristic
    function of region ``enriched[j]``.
    """

    def __init__(self, mesh: BulkMesh, cut: CutGeometry | None, xfem: bool, dep_tol: float = 1e-10):
        self.mesh = mesh
        self.cut = cut
        self.n_p1 = mesh.n_vertices
        self.pinned = 0
        self.enriched: list[int] = []
        self.xfem = bool(xfem)
        if xfem:
            if cut is None:
                raise ArgumentError("enrichment needs the cut geometry")
            areas = cut.region_areas()
            if np.any(areas <= 1e-14 * mesh.box.area):
                raise SpaceError(f"region with zero area: {np.where(areas <= 0)[0].tolist()}")
            cand = list(range(cut.n_regions - 1))
            self.enriched = self._independent(cand, dep_tol)

    def _independent(self, cand, tol):
        if not cand:
            return []
        M = p1_mass(self.mesh)
        Mpe = np.column_stack([self._p1_against_indicator(ell) for ell in cand])
        area = self.cut.region_areas()[cand]
        Mee = np.diag(area)
        lu = _factor(M)
        S = Mee - Mpe.T @ lu(Mpe)
        kept = []
        # greedy pivoting on the Schur complement of the P1 block
        for j in range(len(cand)):
            idx = kept + [j]
            s = np.linalg.eigvalsh(S[np.ix_(idx, idx)])
            if s.min() > tol * area[j]:
                kept.append(j)
            else:
                log.info("dropping linearly dependent enrichment for region %d", cand[j])
        return [cand[j] for j in kept]

    def _p1_against_indicator(self, ell):
        """Vector (phi_i, 1_{R_ell}) over all P1 basis functions."""
        el, pts, w = self.cut.region_quadrature(ell)
        tri = self.mesh.points[self.mesh.triangles[el]]
        lam = barycentric(tri, pts)
        out = np.zeros(self.n_p1)
        np.add.at(out, self.mesh.triangles[el].ravel(), (lam * w[:, None]).ravel())
        return out

    @property
    def n_enrich(self) -> int:
        return len(self.enriched)

    @property
    def dim(self) -> int:
        """Dimension of the spanned pressure space (constants included)."""
        return self.n_p1 + self.n_enrich

    @property
    def n_unknowns(self) -> int:
        return self.dim - 1

    @cached_property
    def free(self):
        return np.setdiff1d(np.arange(self.dim), [self.pinned])

    def expand(self, p_free):
        p = np.zeros(self.dim)
        p[self.free] = p_free
        return p

    def evaluate(self, P, elem, bary, region=None):
        """Pressure at points; ``region`` gives the region of each point for the enrichment."""
        tri = self.mesh.triangles[elem]
        val = np.sum(bary * P[tri], axis=1)
        if self.n_enrich:
            if region is None:
                raise ArgumentError("region labels needed to evaluate an enriched pressure")
            for j, ell in enumerate(self.enriched):
                val = val + P[self.n_p1 + j] * (region == ell)
        return val

    def mass_matrix(self):
        """Full (dim x dim) L2 Gram matrix of the pressure basis."""
        M = p1_mass(self.mesh).tolil()
        if not self.n_enrich:
            return M.tocsr()
        rows = [self._p1_against_indicator(ell) for ell in self.enriched]
        areas = self.cut.region_areas()
        M = sp.bmat(
            [
                [M.tocsr(), sp.csr_matrix(np.column_stack(rows))],
                [sp.csr_matrix(np.vstack(rows)), sp.diags(areas[self.enriched])],
            ]
        )
        return M.tocsr()

    def mean_correction(self, P):
        """Subtract the domain mean so that the pressure integrates to zero."""
        M = self.mass_matrix()
        one = np.zeros(self.dim)
        one[: self.n_p1] = 1.0
        mean = float(one @ (M @ P)) / self.mesh.box.area
        out = P.copy()
        out[: self.n_p1] -= mean
        return out


def _factor(M):
    lu = spla.splu(sp.csc_matrix(M))

    def solve(B):
        return lu.solve(np.asarray(B))

    return solve


def p1_mass(mesh: BulkMesh, weight=None):
    """Consistent P1 mass matrix, optionally with a piecewise-constant weight."""
    A = mesh.areas if weight is None else mesh.areas * np.asarray(weight)
    loc = (np.ones((3, 3)) + np.eye(3)) / 12.0
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    vals = (A[:, None, None] * loc[None]).ravel()
    n = mesh.n_vertices
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


# ----------------------------------------------------------------------
# surface spaces


class SurfaceSpaces:
    def __init__(self, net: CurveNetwork):
        self.net = net
        n = net.n_vertices
        jv = net.junction_vertices
        bv = net.boundary_vertices
        # curvature space: identity off junctions, orthonormal basis of o-perp on triples
        cols_r, cols_c, vals = [], [], []
        c = 0
        special = np.zeros(n, dtype=bool)
        special[jv.ravel()] = True
        for g in np.where(~special)[0]:
            cols_r.append(g)
            cols_c.append(c)
            vals.append(1.0)
            c += 1
        for k, j in enumerate(net.junctions):
            o = np.asarray(j.orient, dtype=float)
            Q = sla.null_space(o[None, :])  # (3, 2) orthonormal
            for col in range(2):
                for m in range(3):
                    if abs(Q[m, col]) > 0:
                        cols_r.append(jv[k, m])
                        cols_c.append(c)
                        vals.append(Q[m, col])
                c += 1
        self.EW = sp.csr_matrix((vals, (cols_r, cols_c)), shape=(n, c))

        # displacement space
        cols_r, cols_c, vals = [], [], []
        c = 0
        spec = np.zeros(n, dtype=bool)
        spec[jv.ravel()] = True
        spec[bv] = True
        for g in np.where(~spec)[0]:
            for d in range(2):
                cols_r.append(2 * g + d)
                cols_c.append(c)
                vals.append(1.0)
                c += 1
        for k in range(len(net.junctions)):
            for d in range(2):
                for m in range(3):
                    cols_r.append(2 * jv[k, m] + d)
                    cols_c.append(c)
                    vals.append(1.0)
                c += 1
        for b, g in zip(net.boundary_points, bv):
            t = b.tangent
            for d in range(2):
                if t[d] != 0.0:
                    cols_r.append(2 * g + d)
                    cols_c.append(c)
                    vals.append(float(t[d]))
            c += 1
        self.EV = sp.csr_matrix((vals, (cols_r, cols_c)), shape=(2 * n, c))

    @property
    def n_w(self) -> int:
        return self.EW.shape[1]

    @property
    def n_v(self) -> int:
        return self.EV.shape[1]

    def project_W(self, values):
        v = np.asarray(values, dtype=float)
        return self.EW @ (self.EW.T @ v)

    def project_Vpartial(self, values):
        v = np.asarray(values, dtype=float)
        shape = v.shape
        flat = v.reshape(-1)
        G = (self.EV.T @ self.EV).diagonal()
        out = self.EV @ ((self.EV.T @ flat) / G)
        return out.reshape(shape)


def project_W(values, net: CurveNetwork):
    return SurfaceSpaces(net).project_W(values)


def project_Vpartial(values, net: CurveNetwork):
    return SurfaceSpaces(net).project_Vpartial(values)


@dataclass
class Spaces:
    velocity: VelocitySpace
    pressure: PressureSpace
    surface: SurfaceSpaces


def build_spaces(mesh: BulkMesh, net: CurveNetwork, xfem: bool, cut: CutGeometry | None = None):
    """(VelocitySpace, PressureSpace, SurfaceSpaces) for a mesh and network."""
    if cut is None and xfem:
        cut = clip_elements(mesh, net)
    return VelocitySpace(mesh), PressureSpace(mesh, cut, xfem), SurfaceSpaces(net)


# ----------------------------------------------------------------------
# transfers


def interpolate_velocity(U_old, V_old, V_new, enforce_bc: bool = True):
    """Nodal interpolation of an old P2 field at the new P2 nodes.

    ``V_old`` and ``V_new`` may be velocity spaces or bulk meshes.  With
    ``enforce_bc`` the essential boundary values of the new space are
    imposed exactly afterwards.
    """
    if isinstance(V_old, BulkMesh):
        V_old = VelocitySpace(V_old)
    if isinstance(V_new, BulkMesh):
        V_new = VelocitySpace(V_new)
    U_old = np.asarray(U_old, dtype=float)
    if U_old.shape[0] != V_old.dim:
        raise ArgumentError("velocity vector does not match the old space")
    el, bary = locate_points(V_old.mesh, V_new.nodes)
    vals = V_old.evaluate(U_old, el, bary)
    U = np.concatenate([vals[:, 0], vals[:, 1]])
    if enforce_bc:
        U[V_new.fixed] = 0.0
    return U


def dof_layout(V: VelocitySpace, Q: PressureSpace | None = None) -> str:
    """Text listing of the velocity and pressure dofs (debugging aid).

    ``u <node> <x> <y> <free_x> <free_y>`` per P2 node, then
    ``p <vertex>`` per P1 dof and ``e <j> <region>`` per enrichment.
    """
    fx = ~V.fixed[: V.n_nodes]
    fy = ~V.fixed[V.n_nodes :]
    lines = [f"u {i} {float(x)!r} {float(y)!r} {int(a)} {int(b)}" for i, ((x, y), a, b) in enumerate(zip(V.nodes, fx, fy))]
    if Q is not None:
        lines += [f"p {i}" + (" pinned" if i == Q.pinned else "") for i in range(Q.n_p1)]
        lines += [f"e {j} {ell}" for j, ell in enumerate(Q.enriched)]
    return "\n".join(lines) + "\n"


def velocity_space_for(mesh):
    return VelocitySpace(mesh)


__all__ = [
    "VelocitySpace",
    "PressureSpace",
    "SurfaceSpaces",
    "build_spaces",
    "project_W",
    "project_Vpartial",
    "interpolate_velocity",
    "dof_layout",
    "p2_basis",
    "p2_gradients",
    "bary_gradients",
    "TRI7_BARY",
    "TRI7_W",
]
