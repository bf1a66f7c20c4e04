"""Bilinear and linear forms of the linear and structure-preserving schemes.

All bulk integrals use the degree-5 seven-point rule, which is exact for
every integrand of the scheme (piecewise-constant coefficients times at
most quintic polynomials).  Surface-to-bulk couplings are integrated with
three-point Gauss rules on each piece of a segment inside one element.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.io
import scipy.sparse as sp

from .cut import CutGeometry
from .errors import ArgumentError, ContextError
from .mesh import BulkMesh, barycentric
from .network import CurveNetwork, rot_cw
from .quadrature import GAUSS3_T, GAUSS3_W, TRI7_BARY, TRI7_W
from .spaces import PressureSpace, SurfaceSpaces, VelocitySpace, bary_gradients, p2_basis, p2_gradients


# ----------------------------------------------------------------------
# element quadrature data


class ElementData:
    """Per-element quadrature data of the P2 basis."""

    def __init__(self, mesh: BulkMesh):
        self.mesh = mesh
        tri = mesh.points[mesh.triangles]
        self.G = bary_gradients(tri)
        E = mesh.n_elements
        self.phi = p2_basis(TRI7_BARY)  # (Q, 6)
        bq = np.broadcast_to(TRI7_BARY, (E,) + TRI7_BARY.shape)
        self.dphi = p2_gradients(bq, self.G)  # (E, Q, 6, 2)
        self.w = mesh.areas[:, None] * TRI7_W[None, :]  # (E, Q)


def element_data(mesh: BulkMesh) -> ElementData:
    ed = getattr(mesh, "_element_data", None)
    if ed is None:
        ed = ElementData(mesh)
        mesh._element_data = ed
    return ed


def _scatter(rows, cols, vals, shape):
    return sp.csr_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=shape)


def _block_pairs(nodes, n_nodes, comp_r, comp_c):
    r = np.broadcast_to(nodes[:, :, None], nodes.shape + (nodes.shape[1],)) + comp_r * n_nodes
    c = np.broadcast_to(nodes[:, None, :], nodes.shape[:1] + (nodes.shape[1], nodes.shape[1])) + comp_c * n_nodes
    return r, c


def p2_scalar_mass(V: VelocitySpace, coef):
    """Scalar P2 mass matrix with a piecewise-constant coefficient (n_nodes square)."""
    ed = element_data(V.mesh)
    loc = np.einsum("eq,qi,qj->eij", ed.w * np.asarray(coef)[:, None], ed.phi, ed.phi)
    r, c = _block_pairs(V.elem_nodes, V.n_nodes, 0, 0)
    return _scatter(r, c, loc, (V.n_nodes, V.n_nodes))


def vector_mass(V: VelocitySpace, coef):
    m = p2_scalar_mass(V, coef)
    return sp.block_diag([m, m]).tocsr()


def viscous_matrix(V: VelocitySpace, eta):
    """Matrix of 2 (eta D(u), D(chi)) on the full P2 vector space."""
    ed = element_data(V.mesh)
    w = ed.w * np.asarray(eta)[:, None]
    lap = np.einsum("eq,eqbk,eqak->eba", w, ed.dphi, ed.dphi)
    n = V.n_nodes
    rows, cols, vals = [], [], []
    for d in range(2):
        for c in range(2):
            loc = np.einsum("eq,eqa,eqb->eba", w, ed.dphi[..., d], ed.dphi[..., c])
            if c == d:
                loc = loc + lap
            r, cc = _block_pairs(V.elem_nodes, n, d, c)
            rows.append(r.ravel())
            cols.append(cc.ravel())
            vals.append(loc.ravel())
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(2 * n, 2 * n)
    )


def field_at_quadrature(V: VelocitySpace, U):
    """Values of a P2 vector field at the element quadrature points, (E, Q, 2)."""
    ed = element_data(V.mesh)
    ux = U[: V.n_nodes][V.elem_nodes]
    uy = U[V.n_nodes :][V.elem_nodes]
    return np.stack([ux @ ed.phi.T, uy @ ed.phi.T], axis=-1)


def advection_matrix(V: VelocitySpace, rho, W):
    """Antisymmetric advection matrix for A(rho, w; u, chi) on the full vector space."""
    ed = element_data(V.mesh)
    wq = field_at_quadrature(V, W)  # (E, Q, 2)
    conv = np.einsum("eqk,eqjk->eqj", wq, ed.dphi)  # w . grad phi_j
    K = np.einsum("eq,qi,eqj->eij", ed.w * np.asarray(rho)[:, None], ed.phi, conv)
    loc = 0.5 * (K - np.transpose(K, (0, 2, 1)))
    r, c = _block_pairs(V.elem_nodes, V.n_nodes, 0, 0)
    k = _scatter(r, c, loc, (V.n_nodes, V.n_nodes))
    return sp.block_diag([k, k]).tocsr()


def advection_form(V: VelocitySpace, rho, v, u, chi) -> float:
    """Scalar value of A(rho, v; u, chi) for P2 vector fields."""
    return float(np.asarray(chi) @ (advection_matrix(V, rho, v) @ np.asarray(u)))


def load_vector(V: VelocitySpace, rho, g):
    """(rho g, chi) for a constant acceleration g."""
    ed = element_data(V.mesh)
    loc = np.einsum("eq,qi->ei", ed.w * np.asarray(rho)[:, None], ed.phi)
    f = np.zeros(2 * V.n_nodes)
    for c in range(2):
        np.add.at(f, V.elem_nodes + c * V.n_nodes, g[c] * loc)
    return f


def divergence_matrix(V: VelocitySpace, Q: PressureSpace, cut: CutGeometry | None):
    """B[q, chi] = (q, div chi) over the full pressure and velocity bases."""
    mesh = V.mesh
    ed = element_data(mesh)
    lamq = TRI7_BARY  # P1 basis at quadrature points
    n = V.n_nodes
    rows, cols, vals = [], [], []
    for c in range(2):
        loc = np.einsum("eq,qk,eqa->eka", ed.w, lamq, ed.dphi[..., c])  # (E, 3, 6)
        r = np.broadcast_to(mesh.triangles[:, :, None], loc.shape)
        cc = np.broadcast_to(V.elem_nodes[:, None, :] + c * n, loc.shape)
        rows.append(r.ravel())
        cols.append(cc.ravel())
        vals.append(loc.ravel())
    B = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(Q.n_p1, 2 * n)
    )
    if Q.n_enrich == 0:
        return B
    extra = []
    for ell in Q.enriched:
        el, pts, w = cut.region_quadrature(ell)
        bary = barycentric(mesh.points[mesh.triangles[el]], pts)
        G = ed.G[el]
        dphi = p2_gradients(bary[:, None, :], G)[:, 0]  # (n, 6, 2)
        row = np.zeros(2 * n)
        for c in range(2):
            np.add.at(row, V.elem_nodes[el] + c * n, w[:, None] * dphi[..., c])
        scale = np.abs(row).max() if row.size else 0.0
        row[np.abs(row) <= 1e-13 * scale] = 0.0
        extra.append(sp.csr_matrix(row))
    return sp.vstack([B] + extra).tocsr()


# ----------------------------------------------------------------------
# surface terms


def coupling_matrix(V: VelocitySpace, cut: CutGeometry):
    """C[(a, c), g] = <phi_g nu_c, phi_a> (exact inner product over Gamma^m)."""
    net = cut.net
    mesh = V.mesh
    pts, s = cut.piece_points(GAUSS3_T)  # (P, 3, 2), s: segment parameter
    seg = cut.piece_seg
    el = cut.piece_elem
    L = net.segment_lengths()[seg]
    nu = net.segment_normals()[seg]
    w = (cut.piece_t1 - cut.piece_t0)[:, None] * L[:, None] * GAUSS3_W[None, :]  # (P, 3)
    tri = mesh.points[mesh.triangles[el]]
    bary = barycentric(np.repeat(tri, 3, axis=0), pts.reshape(-1, 2)).reshape(-1, 3, 3)
    phi = p2_basis(bary)  # (P, 3, 6)
    hats = np.stack([1.0 - s, s], axis=-1)  # (P, 3, 2)
    loc = np.einsum("pq,pqa,pqh->pah", w, phi, hats)  # (P, 6, 2)
    ga = net.seg_a[seg]
    gb = net.seg_b[seg]
    gcol = np.stack([ga, gb], axis=1)  # (P, 2)
    n = V.n_nodes
    rows, cols, vals = [], [], []
    for c in range(2):
        r = np.broadcast_to(V.elem_nodes[el][:, :, None] + c * n, loc.shape)
        cc = np.broadcast_to(gcol[:, None, :], loc.shape)
        rows.append(r.ravel())
        cols.append(cc.ravel())
        vals.append((loc * nu[:, c][:, None, None]).ravel())
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(2 * n, net.n_vertices)
    )


def surface_bulk_coupling(V: VelocitySpace, cut: CutGeometry, weight):
    """Vector <weight nu^m, chi>_{Gamma^m} over all bulk velocity basis functions."""
    weight = np.asarray(weight, dtype=float)
    if weight.shape != (cut.net.n_vertices,):
        raise ArgumentError("one weight per surface vertex required")
    return coupling_matrix(V, cut) @ weight


def normal_mass(net: CurveNetwork, X_new=None):
    """Lumped normal mass N[(g, c), g] = sum over incident segments |sigma| nu_c / 2.

    With ``X_new`` the time-weighted normals of the motion to ``X_new`` are used.
    """
    a = rot_cw(net.segment_vectors())  # |sigma| nu
    if X_new is not None:
        a = 0.5 * (a + rot_cw(net.segment_vectors(X_new)))
    n = net.n_vertices
    acc = np.zeros((n, 2))
    np.add.at(acc, net.seg_a, 0.5 * a)
    np.add.at(acc, net.seg_b, 0.5 * a)
    rows = np.concatenate([2 * np.arange(n), 2 * np.arange(n) + 1])
    cols = np.concatenate([np.arange(n), np.arange(n)])
    return sp.csr_matrix((np.concatenate([acc[:, 0], acc[:, 1]]), (rows, cols)), shape=(2 * n, n))


def surface_stiffness(net: CurveNetwork, gamma):
    """<gamma grad_s X, grad_s zeta> on interleaved vector surface fields."""
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (net.n_curves,))
    L = net.segment_lengths()
    k = gamma[net.seg_curve] / L
    a, b = net.seg_a, net.seg_b
    n = net.n_vertices
    rows, cols, vals = [], [], []
    for c in range(2):
        ia, ib = 2 * a + c, 2 * b + c
        rows += [ia, ib, ia, ib]
        cols += [ia, ib, ib, ia]
        vals += [k, k, -k, -k]
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(2 * n, 2 * n))


# ----------------------------------------------------------------------
# context and system


@dataclass
class FormContext:
    V: VelocitySpace
    Q: PressureSpace
    S: SurfaceSpaces
    cut: CutGeometry
    rho: np.ndarray
    rho_old: np.ndarray
    eta: np.ndarray
    gamma: np.ndarray
    g: np.ndarray
    dt: float
    U_old: np.ndarray | None = None
    X_new: np.ndarray | None = None  # lagged end positions for time-weighted normals

    def __post_init__(self):
        if not self.dt > 0:
            raise ArgumentError("time step must be positive")
        E = self.V.mesh.n_elements
        for name in ("rho", "rho_old", "eta"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (E,):
                raise ContextError(f"coefficient {name} must have one value per element")
            setattr(self, name, v)
        self.gamma = np.broadcast_to(np.asarray(self.gamma, dtype=float), (self.net.n_curves,)).copy()
        self.g = np.asarray(self.g, dtype=float)

    @property
    def net(self) -> CurveNetwork:
        return self.cut.net

    @property
    def mesh(self) -> BulkMesh:
        return self.V.mesh


@dataclass
class MomentumBlocks:
    mass: sp.csr_matrix  # (rho^m + rho_old)/(2 dt) weighted
    advection: sp.csr_matrix
    viscous: sp.csr_matrix
    rhs: np.ndarray
    load: np.ndarray  # (rho^m g, chi)

    @property
    def A(self):
        return (self.mass + self.advection + self.viscous).tocsr()


def assemble_momentum(ctx: FormContext) -> MomentumBlocks:
    if ctx.U_old is None:
        raise ContextError("transferred velocity I_2 U^m is missing")
    V = ctx.V
    U_old = np.asarray(ctx.U_old, dtype=float)
    if U_old.shape != (V.dim,):
        raise ContextError("transferred velocity does not match the velocity space")
    dt = ctx.dt
    mass = vector_mass(V, 0.5 * (ctx.rho + ctx.rho_old) / dt)
    adv = advection_matrix(V, ctx.rho, U_old) if np.any(ctx.rho) else sp.csr_matrix((V.dim, V.dim))
    visc = viscous_matrix(V, ctx.eta)
    load = load_vector(V, ctx.rho, ctx.g) if np.any(ctx.g) else np.zeros(V.dim)
    rhs = load + vector_mass(V, ctx.rho_old / dt) @ U_old if np.any(ctx.rho_old) else load.copy()
    return MomentumBlocks(mass, adv, visc, rhs, load)


def assemble_divergence(ctx: FormContext):
    return divergence_matrix(ctx.V, ctx.Q, ctx.cut)


def assemble_kinematic(ctx: FormContext):
    """(C^T, N): rows <dX/dt . nu, phi>^h = N^T dX / dt, <U . nu^m, phi> = C^T U."""
    C = coupling_matrix(ctx.V, ctx.cut)
    N = normal_mass(ctx.net, ctx.X_new)
    return C.T.tocsr(), N


def assemble_curvature(ctx: FormContext):
    """(N, S): rows <kappa nu, zeta>^h = N kappa and <gamma grad_s X, grad_s zeta> = S X."""
    return normal_mass(ctx.net, ctx.X_new), surface_stiffness(ctx.net, ctx.gamma)


@dataclass
class SaddleSystem:
    """Constrained linear system in the unknowns (U_free, P_free, k, x).

    Block rows::

        [ A     -B^T   -CW      0       ] [U]   [f_u]
        [-B      0      0       0       ] [P] = [ 0 ]
        [-CW^T   0      0       NV^T/dt ] [k]   [ 0 ]
        [ 0      0      NV/dt   SV/dt   ] [x]   [f_x]

    with kappa = EW k and delta X = EV x.
    """

    A: sp.csr_matrix
    B: sp.csr_matrix
    CW: sp.csr_matrix
    NV: sp.csr_matrix
    SV: sp.csr_matrix
    dt: float
    f_u: np.ndarray
    f_x: np.ndarray
    V: VelocitySpace
    Q: PressureSpace
    S: SurfaceSpaces
    mass_u: sp.csr_matrix | None = None  # velocity mass with the inertia weight (for preconditioning)
    eta: np.ndarray | None = None
    pressure_pinned: bool = True
    info: dict = field(default_factory=dict)

    @property
    def sizes(self):
        return (self.A.shape[0], self.B.shape[0], self.CW.shape[1], self.SV.shape[0])

    def matrix(self):
        nu, npr, nk, nx = self.sizes
        dt = self.dt
        return sp.bmat(
            [
                [self.A, -self.B.T, -self.CW, None],
                [-self.B, None, None, None],
                [-self.CW.T, None, None, self.NV.T / dt],
                [None, None, self.NV / dt, self.SV / dt],
            ],
            format="csc",
        )

    def rhs(self):
        nu, npr, nk, nx = self.sizes
        return np.concatenate([self.f_u, np.zeros(npr), np.zeros(nk), self.f_x])

    def split(self, sol):
        nu, npr, nk, nx = self.sizes
        o = np.cumsum([0, nu, npr, nk, nx])
        return sol[o[0] : o[1]], sol[o[1] : o[2]], sol[o[2] : o[3]], sol[o[3] : o[4]]

    def unpack(self, sol):
        """Full-space (U, P, kappa, dX) from a solution vector; P has zero mean."""
        u, p, k, x = self.split(sol)
        U = self.V.expand(u)
        if self.pressure_pinned:
            P = self.Q.mean_correction(self.Q.expand(p))
        else:
            P = p
        kappa = self.S.EW @ k
        dX = (self.S.EV @ x).reshape(-1, 2)
        return U, P, kappa, dX


def assemble_system(ctx: FormContext, pin_pressure: bool = True, blocks: MomentumBlocks | None = None) -> SaddleSystem:
    V, Q, S = ctx.V, ctx.Q, ctx.S
    mb = blocks if blocks is not None else assemble_momentum(ctx)
    R = V.restriction
    A = (R @ mb.A @ R.T).tocsr()
    B = divergence_matrix(V, Q, ctx.cut) @ R.T
    if pin_pressure:
        keep = Q.free
        B = B.tocsr()[keep]
    C = coupling_matrix(V, ctx.cut)
    CW = (R @ C @ S.EW).tocsr()
    N = normal_mass(ctx.net, ctx.X_new)
    NV = (S.EV.T @ N @ S.EW).tocsr()
    Sm = surface_stiffness(ctx.net, ctx.gamma)
    SV = (S.EV.T @ Sm @ S.EV).tocsr()
    f_u = R @ mb.rhs
    f_x = -(S.EV.T @ (Sm @ ctx.net.X.reshape(-1))) / ctx.dt
    mass_u = (R @ mb.mass @ R.T).tocsr()
    return SaddleSystem(
        A=A,
        B=B.tocsr(),
        CW=CW,
        NV=NV,
        SV=SV,
        dt=ctx.dt,
        f_u=f_u,
        f_x=f_x,
        V=V,
        Q=Q,
        S=S,
        mass_u=mass_u,
        eta=ctx.eta,
        pressure_pinned=pin_pressure,
    )


def with_normals(system: SaddleSystem, X_new=None) -> SaddleSystem:
    """Copy of ``system`` whose lumped normal blocks use the motion to ``X_new``."""
    S = system.S
    N = normal_mass(S.net, X_new)
    return replace(system, NV=(S.EV.T @ N @ S.EW).tocsr(), info=dict(system.info))


def dump_blocks(system: SaddleSystem, directory) -> list:
    """Write the constrained blocks in Matrix Market format; returns the file paths."""
    os.makedirs(directory, exist_ok=True)
    out = []
    for name in ("A", "B", "CW", "NV", "SV"):
        path = os.path.join(directory, f"{name}.mtx")
        scipy.io.mmwrite(path, getattr(system, name))
        out.append(path)
    return out
