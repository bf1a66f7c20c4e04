import math

import numpy as np
import pytest
import scipy.io
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import flat_interface, make_context, unit_params
from tripleflow.assembly import (
    FormContext,
    advection_form,
    advection_matrix,
    assemble_curvature,
    assemble_divergence,
    assemble_kinematic,
    assemble_momentum,
    assemble_system,
    coupling_matrix,
    divergence_matrix,
    dump_blocks,
    load_vector,
    normal_mass,
    surface_bulk_coupling,
    surface_stiffness,
    viscous_matrix,
)
from tripleflow.cut import clip_elements, perturbed_positions
from tripleflow.errors import ArgumentError, ContextError
from tripleflow.mesh import build_adapted, locate_points, macro_mesh, uniform_mesh
from tripleflow.network import Box, closed_curve_network, regular_polygon
from tripleflow.quadrature import gauss_legendre01
from tripleflow.shapes import standard_double_bubble
from tripleflow.spaces import PressureSpace, VelocitySpace, p1_mass, p2_basis

UNIT = Box(0.0, 1.0, 0.0, 1.0)
BOX = Box(-1.0, 1.0, -1.0, 1.0)


# ---------------------------------------------------------------- advection


def test_advection_example():
    V = VelocitySpace(uniform_mesh(UNIT, 2))
    rho = np.ones(V.mesh.n_elements)
    v = V.interpolate(lambda p: np.column_stack([np.ones(len(p)), np.zeros(len(p))]))
    u = V.interpolate(lambda p: np.column_stack([p[:, 0], np.zeros(len(p))]))
    chi = V.interpolate(lambda p: np.column_stack([p[:, 1], np.zeros(len(p))]))
    assert advection_form(V, rho, v, u, chi) == pytest.approx(0.25, abs=1e-14)
    const = V.interpolate(lambda p: np.column_stack([np.full(len(p), 2.0), np.full(len(p), -1.0)]))
    assert advection_form(V, rho, v, const, const) == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=25)
@given(st.integers(0, 100_000))
def test_advection_skew_symmetry(seed):
    rng = np.random.default_rng(seed)
    V = VelocitySpace(uniform_mesh(BOX, 2))
    rho = rng.uniform(0, 1000, V.mesh.n_elements)
    v, u, chi = (rng.normal(size=V.dim) for _ in range(3))
    K = advection_matrix(V, rho, v)
    scale = np.abs(K).sum() * np.abs(u).max() ** 2
    assert abs(u @ K @ u) <= 1e-14 * scale
    assert advection_form(V, rho, v, u, chi) == pytest.approx(-advection_form(V, rho, v, chi, u), abs=1e-12 * scale)


# ---------------------------------------------------------------- momentum


def test_momentum_stokes_mode_and_no_gravity():
    net = standard_double_bubble(0.3, 32)
    _, _, ctx = make_context(net, unit_params(rho=0.0), adapt=(3, 2), noslip=("bottom", "right", "top", "left"))
    mb = assemble_momentum(ctx)
    assert mb.mass.nnz == 0 or abs(mb.mass).max() == 0.0
    assert mb.advection.nnz == 0 or abs(mb.advection).max() == 0.0
    assert np.all(mb.load == 0.0) and np.all(mb.rhs == 0.0)


def test_momentum_rhs_is_body_force_at_rest():
    net = flat_interface()
    _, _, ctx = make_context(net, unit_params(rho=(3.0, 3.0), g=(0.0, -0.98)))
    mb = assemble_momentum(ctx)
    np.testing.assert_allclose(mb.rhs, mb.load)
    # (rho g, 1) on the y components integrates rho g_y over the domain
    ny = ctx.V.n_nodes
    assert mb.load[ny:].sum() == pytest.approx(3.0 * -0.98 * UNIT.area, rel=1e-13)
    assert mb.load[:ny].sum() == pytest.approx(0.0, abs=1e-14)


def test_momentum_requires_transfer():
    net = flat_interface()
    _, _, ctx = make_context(net, unit_params())
    ctx.U_old = None
    with pytest.raises(ContextError):
        assemble_momentum(ctx)
    with pytest.raises(ArgumentError):
        FormContext(ctx.V, ctx.Q, ctx.S, ctx.cut, ctx.rho, ctx.rho_old, ctx.eta, ctx.gamma, ctx.g, 0.0)
    with pytest.raises(ContextError):
        FormContext(ctx.V, ctx.Q, ctx.S, ctx.cut, ctx.rho[:-1], ctx.rho_old, ctx.eta, ctx.gamma, ctx.g, 1e-2)


def test_viscous_matrix_korn():
    for noslip in (("bottom", "right", "top", "left"), ("bottom", "top")):
        V = VelocitySpace(uniform_mesh(UNIT, 2, noslip=noslip))
        K = viscous_matrix(V, np.ones(V.mesh.n_elements))
        Kd = K.toarray()
        np.testing.assert_allclose(Kd, Kd.T, atol=1e-13)
        assert np.linalg.eigvalsh(Kd).min() > -1e-12
        R = V.restriction
        Kf = (R @ K @ R.T).toarray()
        assert np.linalg.eigvalsh(Kf).min() > 1e-8


def test_viscous_matrix_rigid_motions_in_kernel():
    V = VelocitySpace(uniform_mesh(UNIT, 2))
    K = viscous_matrix(V, np.full(V.mesh.n_elements, 2.0))
    for f in (
        lambda p: np.column_stack([np.ones(len(p)), np.zeros(len(p))]),
        lambda p: np.column_stack([-p[:, 1], p[:, 0]]),
    ):
        assert np.abs(K @ V.interpolate(f)).max() <= 1e-12


# ---------------------------------------------------------------- divergence


def test_divergence_examples():
    V = VelocitySpace(uniform_mesh(UNIT, 2))
    Q = PressureSpace(V.mesh, None, xfem=False)
    B = divergence_matrix(V, Q, None)
    trans = V.interpolate(lambda p: np.column_stack([np.full(len(p), 0.3), np.full(len(p), -1.2)]))
    assert np.abs(B @ trans).max() <= 1e-14
    radial = V.interpolate(lambda p: p.copy())
    assert (B @ radial).sum() == pytest.approx(2.0 * UNIT.area, rel=1e-13)


def _polygon_moments(ring):
    """Signed integrals of x and y over a polygon (positive when counter-clockwise)."""
    r = np.asarray(ring, dtype=float)
    x, y = r[:, 0], r[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cr = x * yn - xn * y
    return float(np.sum((x + xn) * cr) / 6.0), float(np.sum((y + yn) * cr) / 6.0)


def test_divergence_enrichment_rows():
    net = standard_double_bubble(0.3, 48, center=(0.11, 0.23))
    mesh = build_adapted(macro_mesh(BOX), net, 4, 2)
    cut = clip_elements(mesh, net)
    V = VelocitySpace(mesh)
    Q = PressureSpace(mesh, cut, xfem=True)
    B = divergence_matrix(V, Q, cut)
    # chi = (x^2 + xy, y^2) has divergence 2x + 3y; integrate over the clipped (offset) region polygons
    chi = V.interpolate(lambda p: np.column_stack([p[:, 0] ** 2 + p[:, 0] * p[:, 1], p[:, 1] ** 2]))
    Xp, _ = perturbed_positions(net, mesh.H)
    for j, ell in enumerate(Q.enriched):
        mx, my = np.sum([_polygon_moments(r) for r in net.region_rings(ell, Xp)], axis=0)
        exact = 2.0 * mx + 3.0 * my
        assert abs(exact) > 1e-2
        assert (B[Q.n_p1 + j] @ chi).item() == pytest.approx(exact, abs=1e-12)
    div_free = V.interpolate(lambda p: np.column_stack([p[:, 1] ** 2, p[:, 0] ** 2]))
    assert np.abs(B @ div_free).max() <= 1e-13


def test_inf_sup_does_not_degenerate():
    values = []
    for level in (2, 3):
        V = VelocitySpace(uniform_mesh(UNIT, level))
        Q = PressureSpace(V.mesh, None, xfem=False)
        R = V.restriction
        B = (divergence_matrix(V, Q, None) @ R.T).toarray()
        A = (R @ viscous_matrix(V, np.ones(V.mesh.n_elements)) @ R.T).toarray()
        M = p1_mass(V.mesh).toarray()
        S = B @ np.linalg.solve(A, B.T)
        ev = np.sort(sla.eigh(S, M, eigvals_only=True))
        # one zero eigenvalue (constants); the next one is the inf-sup constant squared
        assert ev[0] < 1e-10
        values.append(ev[1])
    assert values[1] > 0.5 * values[0] > 0


# ---------------------------------------------------------------- surface coupling


def _coupling_oracle(V, net, weight):
    """<weight nu, chi> by ten-point Gauss per piece, elements found by point location."""
    cut = clip_elements(V.mesh, net)
    t, w = gauss_legendre01(10)
    pts, s = cut.piece_points(t)
    L = net.segment_lengths()[cut.piece_seg]
    wts = (cut.piece_t1 - cut.piece_t0)[:, None] * L[:, None] * w[None, :]
    wa = weight[net.seg_a[cut.piece_seg]][:, None]
    wb = weight[net.seg_b[cut.piece_seg]][:, None]
    wq = (1 - s) * wa + s * wb
    nu = net.segment_normals()[cut.piece_seg]
    out = np.zeros(V.dim)
    el, bary = locate_points(V.mesh, pts.reshape(-1, 2))
    phi = p2_basis(bary)  # (n, 6)
    nodes = V.elem_nodes[el]
    f = (wts * wq).ravel()
    for c in range(2):
        vals = phi * (f * np.repeat(nu[:, c], len(t)))[:, None]
        np.add.at(out, nodes + c * V.n_nodes, vals)
    return out


def test_surface_coupling_matches_oracle(rng):
    net = standard_double_bubble(0.3, 40)
    mesh = build_adapted(macro_mesh(BOX), net, 4, 2)
    V = VelocitySpace(mesh)
    cut = clip_elements(mesh, net)
    weight = rng.normal(size=net.n_vertices)
    np.testing.assert_allclose(surface_bulk_coupling(V, cut, weight), _coupling_oracle(V, net, weight), atol=1e-13)
    assert np.all(surface_bulk_coupling(V, cut, np.zeros(net.n_vertices)) == 0.0)


def test_surface_coupling_straight_segment():
    net = flat_interface(y=0.37, n=9)
    mesh = build_adapted(macro_mesh(UNIT), net, 3, 2)
    V = VelocitySpace(mesh)
    cut = clip_elements(mesh, net)
    chi = V.interpolate(lambda p: np.column_stack([np.zeros(len(p)), -np.ones(len(p))]))
    assert surface_bulk_coupling(V, cut, np.ones(net.n_vertices)) @ chi == pytest.approx(1.0, abs=1e-14)


def test_kinematic_rows():
    net = flat_interface(y=0.37, n=9)
    _, _, ctx = make_context(net, unit_params())
    CT, N = assemble_kinematic(ctx)
    np.testing.assert_allclose((CT - coupling_matrix(ctx.V, ctx.cut).T).toarray(), 0.0, atol=1e-13)
    n = net.n_vertices
    assert np.all(N.T @ np.zeros(2 * n) == 0.0)
    h, dt = 0.01, 0.1
    dX = np.tile([0.0, -h], n)  # h times the normal (0, -1)
    assert (np.ones(n) @ (N.T @ dX)) / dt == pytest.approx(h * 1.0 / dt, rel=1e-13)
    tangential = ctx.V.interpolate(lambda p: np.column_stack([np.ones(len(p)), np.zeros(len(p))]))
    assert np.abs(CT @ tangential).max() <= 1e-15


def test_normal_mass_time_weighted():
    net = closed_curve_network(regular_polygon((0, 0), 0.5, 12))
    np.testing.assert_allclose(normal_mass(net, net.X).toarray(), normal_mass(net).toarray(), atol=1e-15)
    shrunk = 0.5 * net.X
    np.testing.assert_allclose(normal_mass(net, shrunk).toarray(), 0.75 * normal_mass(net).toarray(), atol=1e-15)


# ---------------------------------------------------------------- curvature


@pytest.mark.parametrize("n", [6, 17, 64])
def test_regular_polygon_curvature(n):
    r = 0.4
    net = closed_curve_network(regular_polygon((0.05, -0.1), r, n))
    N = normal_mass(net).toarray()
    S = surface_stiffness(net, 1.0).toarray()
    # <kappa nu, zeta>^h + <grad_s X, grad_s zeta> = 0 for all zeta
    kappa, *_ = np.linalg.lstsq(N, -S @ net.X.reshape(-1), rcond=None)
    np.testing.assert_allclose(kappa, -1.0 / (r * math.cos(math.pi / n)), rtol=1e-12)
    assert np.linalg.norm(N @ kappa + S @ net.X.reshape(-1)) <= 1e-12


def test_straight_line_has_zero_stiffness_rows():
    net = flat_interface(n=11)
    S = surface_stiffness(net, 2.0)
    rows = S @ net.X.reshape(-1)
    interior = np.repeat(net.interior_mask, 2)
    assert np.abs(rows[interior]).max() <= 1e-13


def test_stiffness_homogeneous_in_gamma():
    net = standard_double_bubble(0.3, 32)
    _, _, ctx = make_context(net, unit_params(rho=0.0), noslip=("bottom", "right", "top", "left"))
    N1, S1 = assemble_curvature(ctx)
    ctx.gamma = 3.5 * ctx.gamma
    N2, S2 = assemble_curvature(ctx)
    np.testing.assert_allclose(S2.toarray(), 3.5 * S1.toarray(), rtol=1e-14)
    np.testing.assert_allclose(N2.toarray(), N1.toarray())


@settings(max_examples=40)
@given(st.integers(0, 100_000), st.floats(1e-3, 0.2))
def test_stiffness_length_inequality(seed, amp):
    rng = np.random.default_rng(seed)
    net = standard_double_bubble(0.3, 24)
    gamma = np.array([1.5, 2.0, 1.0])
    S = surface_stiffness(net, gamma)
    X0 = net.X.reshape(-1)
    X1 = X0 + amp * rng.normal(size=X0.size) * 0.05
    lhs = X1 @ (S @ (X1 - X0))
    new = net.with_positions(X1.reshape(-1, 2))
    rhs = float(np.dot(gamma, new.curve_lengths() - net.curve_lengths()))
    assert lhs >= rhs - 1e-12
    D = S.toarray()
    np.testing.assert_allclose(D, D.T)
    assert np.linalg.eigvalsh(D).min() > -1e-10


# ---------------------------------------------------------------- full system


def test_system_structure_and_dump(tmp_path):
    net = standard_double_bubble(0.3, 32)
    _, _, ctx = make_context(net, unit_params(rho=0.0), noslip=("bottom", "right", "top", "left"))
    system = assemble_system(ctx)
    nu, npr, nk, nx = system.sizes
    assert npr == ctx.Q.n_unknowns and nk == ctx.S.n_w and nx == ctx.S.n_v
    M = system.matrix()
    assert M.shape == (sum(system.sizes),) * 2
    A = system.A.toarray()
    np.testing.assert_allclose(A, A.T, atol=1e-12)  # Stokes: no advection
    paths = dump_blocks(system, tmp_path / "blocks")
    back = scipy.io.mmread(paths[0])
    np.testing.assert_allclose(back.toarray(), system.A.toarray())
    div = assemble_divergence(ctx)
    assert div.shape[0] == ctx.Q.dim


def test_load_vector_zero_without_gravity():
    V = VelocitySpace(uniform_mesh(UNIT, 1))
    assert np.all(load_vector(V, np.ones(V.mesh.n_elements), np.zeros(2)) == 0.0)
