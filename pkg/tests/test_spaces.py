import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tripleflow.cut import clip_elements, regions_of_points
from tripleflow.errors import ArgumentError
from tripleflow.mesh import build_adapted, macro_mesh, project_density, refine_uniform, uniform_mesh
from tripleflow.network import (
    BoundaryPoint,
    Box,
    CurveNetwork,
    PolyCurve,
    TripleJunction,
    closed_curve_network,
    junction_orientation,
    lumped_inner,
    regular_polygon,
)
from tripleflow.shapes import junction_migration_network, standard_double_bubble, standard_triple_bubble
from tripleflow.spaces import (
    PressureSpace,
    SurfaceSpaces,
    VelocitySpace,
    build_spaces,
    dof_layout,
    interpolate_velocity,
    project_Vpartial,
    project_W,
)

BOX = Box(-1.0, 1.0, -1.0, 1.0)


def fan(ends=(0, 0, 0), wall=None):
    """Three one-segment curves meeting at the origin; optional boundary point on curve 0's free end."""
    curves = []
    for e, a in zip(ends, (90.0, 210.0, 330.0)):
        th = math.radians(a)
        seg = np.array([[0.0, 0.0], [0.5 * math.cos(th), 0.5 * math.sin(th)]])
        curves.append(PolyCurve(seg[::-1] if e else seg))
    j = TripleJunction((0, 1, 2), tuple(ends), junction_orientation(ends))
    bps = ()
    if wall is not None:
        bps = (BoundaryPoint(0, 1 - ends[0], wall),)
    return CurveNetwork(curves=tuple(curves), junctions=(j,), boundary_points=bps, domain=BOX)


# ---------------------------------------------------------------- surface projectors


def test_project_W_examples():
    net = fan()
    g = net.junction_vertices[0]
    v = np.zeros(net.n_vertices)
    v[g] = (1.0, 1.0, 2.0)
    out = project_W(v, net)
    # o = (-1,-1,-1) is the same constraint as o = (1,1,1)
    np.testing.assert_allclose(out[g], (-1 / 3, -1 / 3, 2 / 3), atol=1e-15)
    np.testing.assert_allclose(project_W(out, net), out, atol=1e-15)
    mixed = fan(ends=(1, 1, 0))
    assert mixed.junctions[0].orient == (1, 1, -1)
    g = mixed.junction_vertices[0]
    v = np.zeros(mixed.n_vertices)
    v[g] = (1.0, 1.0, 2.0)
    np.testing.assert_allclose(project_W(v, mixed)[g], (1.0, 1.0, 2.0), atol=1e-15)


def test_project_W_identity_without_junctions():
    net = closed_curve_network(regular_polygon((0, 0), 0.5, 10))
    S = SurfaceSpaces(net)
    assert S.n_w == net.n_vertices
    v = np.random.default_rng(0).normal(size=net.n_vertices)
    np.testing.assert_array_equal(project_W(v, net), v)


def test_project_W_removes_one_dof_per_junction():
    for net in (standard_double_bubble(0.3, 48), standard_triple_bubble(3 * math.pi / 25, 60)):
        assert SurfaceSpaces(net).n_w == net.n_vertices - len(net.junctions)


def test_project_Vpartial_examples():
    net = fan()
    g = net.junction_vertices[0]
    v = np.zeros((net.n_vertices, 2))
    v[g] = [(1, 0), (0, 1), (-1, -1)]
    np.testing.assert_allclose(project_Vpartial(v, net)[g], 0.0, atol=1e-15)
    v[g] = [(2.0, 3.0)] * 3
    np.testing.assert_allclose(project_Vpartial(v, net)[g], v[g])
    walled = fan(wall="right")
    b = walled.boundary_vertices[0]
    v = np.zeros((walled.n_vertices, 2))
    v[b] = (3.0, 4.0)
    np.testing.assert_allclose(project_Vpartial(v, walled)[b], (0.0, 4.0))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000))
def test_projectors_idempotent_and_orthogonal(seed):
    rng = np.random.default_rng(seed)
    net = junction_migration_network(32)
    S = SurfaceSpaces(net)
    w = rng.normal(size=net.n_vertices)
    pw = S.project_W(w)
    np.testing.assert_allclose(S.project_W(pw), pw, atol=1e-14)
    for k, j in enumerate(net.junctions):
        assert abs(np.dot(j.orient, pw[net.junction_vertices[k]])) <= 1e-14
    v = rng.normal(size=(net.n_vertices, 2))
    pv = S.project_Vpartial(v)
    np.testing.assert_allclose(S.project_Vpartial(pv), pv, atol=1e-14)
    for row in net.junction_vertices:
        np.testing.assert_allclose(pv[row], np.repeat(pv[row[:1]], 3, axis=0), atol=1e-15)
    for bp, g in zip(net.boundary_points, net.boundary_vertices):
        assert abs(pv[g] @ bp.normal) <= 1e-15
    # the residual is orthogonal to the range (Euclidean on the nodal values)
    z = S.project_Vpartial(rng.normal(size=(net.n_vertices, 2)))
    assert abs(np.sum((v - pv) * z)) <= 1e-12
    assert lumped_inner(net, pv, pv) >= 0


# ---------------------------------------------------------------- velocity and pressure spaces


def test_velocity_constraints():
    mesh = uniform_mesh(Box(0.0, 2.0, 0.0, 1.0), 2, noslip=("bottom", "top"))
    V = VelocitySpace(mesh)
    x, y = V.nodes[:, 0], V.nodes[:, 1]
    fx, fy = V.fixed[: V.n_nodes], V.fixed[V.n_nodes :]
    on_tb = np.isclose(y, 0) | np.isclose(y, 1)
    on_lr = (np.isclose(x, 0) | np.isclose(x, 2)) & ~on_tb
    assert np.all(fx[on_tb] & fy[on_tb])
    assert np.all(fx[on_lr] & ~fy[on_lr])
    interior = ~on_tb & ~on_lr
    assert not np.any(fx[interior] | fy[interior])
    U = V.expand(np.random.default_rng(0).normal(size=V.n_free))
    assert np.all(U[V.fixed] == 0.0)
    assert V.dim == 2 * (mesh.n_vertices + mesh.n_edges)


def test_pressure_dimensions():
    net = closed_curve_network(regular_polygon((0.01, 0.02), 0.4, 40))
    mesh = build_adapted(macro_mesh(BOX), net, 4, 2)
    cut = clip_elements(mesh, net)
    Q = PressureSpace(mesh, cut, xfem=True)
    assert Q.dim == mesh.n_vertices + 2 - 1
    assert Q.n_unknowns == Q.dim - 1
    Q0 = PressureSpace(mesh, None, xfem=False)
    assert Q0.dim == mesh.n_vertices
    with pytest.raises(ArgumentError):
        PressureSpace(mesh, None, xfem=True)


def test_enriched_space_contains_indicators():
    net = standard_double_bubble(0.3, 64)
    mesh = build_adapted(macro_mesh(BOX), net, 4, 2)
    V, Q, S = build_spaces(mesh, net, xfem=True)
    assert Q.n_enrich == net.n_regions - 1
    rng = np.random.default_rng(3)
    el = rng.integers(0, mesh.n_elements, 500)
    bary = rng.dirichlet(np.ones(3), 500)
    pts = np.einsum("nk,nkd->nd", bary, mesh.points[mesh.triangles[el]])
    region = regions_of_points(net, net.X, pts)
    for ell in range(net.n_regions):
        P = np.zeros(Q.dim)
        if ell in Q.enriched:
            P[Q.n_p1 + Q.enriched.index(ell)] = 1.0
        else:
            # the remaining indicator is one minus the others
            P[: Q.n_p1] = 1.0
            P[Q.n_p1 :] = -1.0
        np.testing.assert_allclose(Q.evaluate(P, el, bary, region), (region == ell).astype(float), atol=1e-15)


def test_mean_correction_zero_mean():
    net = standard_double_bubble(0.3, 64)
    mesh = build_adapted(macro_mesh(BOX), net, 4, 2)
    _, Q, _ = build_spaces(mesh, net, xfem=True)
    P = Q.mean_correction(np.random.default_rng(1).normal(size=Q.dim))
    one = np.zeros(Q.dim)
    one[: Q.n_p1] = 1.0
    assert abs(one @ (Q.mass_matrix() @ P)) <= 1e-12


def test_dof_layout_dump():
    net = standard_double_bubble(0.3, 32)
    mesh = build_adapted(macro_mesh(BOX), net, 3, 2)
    V, Q, _ = build_spaces(mesh, net, xfem=True)
    text = dof_layout(V, Q)
    lines = text.splitlines()
    assert sum(line.startswith("u ") for line in lines) == V.n_nodes
    assert sum(line.startswith("p ") for line in lines) == Q.n_p1
    assert sum(line.startswith("e ") for line in lines) == Q.n_enrich
    assert text == dof_layout(V, Q)


# ---------------------------------------------------------------- transfers


def _quadratic(p):
    return np.column_stack([p[:, 0] ** 2, p[:, 0] * p[:, 1]])


def test_interpolation_exact_on_quadratics_nested():
    coarse = uniform_mesh(BOX, 2)
    net = standard_double_bubble(0.3, 48)
    fine = build_adapted(macro_mesh(BOX), net, 5, 2)
    Vc, Vf = VelocitySpace(coarse), VelocitySpace(fine)
    U = Vc.interpolate(_quadratic)
    out = interpolate_velocity(U, Vc, Vf, enforce_bc=False)
    np.testing.assert_allclose(out, Vf.interpolate(_quadratic), atol=1e-12)
    # identical meshes
    np.testing.assert_array_equal(interpolate_velocity(U, Vc, VelocitySpace(coarse), enforce_bc=False), U)


def test_interpolation_affine_and_bc():
    coarse = uniform_mesh(BOX, 1)
    fine = uniform_mesh(BOX, 3)
    Vc, Vf = VelocitySpace(coarse), VelocitySpace(fine)
    aff = lambda p: np.column_stack([1 + 2 * p[:, 0] - p[:, 1], 0.5 * p[:, 1] - 3])  # noqa: E731
    out = interpolate_velocity(Vc.interpolate(aff), Vc, Vf, enforce_bc=False)
    np.testing.assert_allclose(out, Vf.interpolate(aff), atol=1e-12)
    out = interpolate_velocity(Vc.interpolate(aff), coarse, fine)
    assert np.all(out[Vf.fixed] == 0.0)
    with pytest.raises(ArgumentError):
        interpolate_velocity(np.zeros(3), Vc, Vf)


def test_density_transfer_examples():
    m0 = macro_mesh(BOX)
    m1 = refine_uniform(m0, 1)
    assert m1.n_elements == 2 * m0.n_elements
    rho = np.array([1.0, 3.0, 1.0, 3.0])
    # children of one parent are consecutive leaves with equal areas
    out = project_density(rho, m1, m0)
    parents = {}
    for e in range(m1.n_elements):
        parents.setdefault(int(m1.macro_id[e]), []).append(rho[e])
    np.testing.assert_allclose(sorted(out), sorted(np.mean(v) for v in parents.values()))
    np.testing.assert_array_equal(project_density(rho, m1, m1), rho)
    np.testing.assert_allclose(project_density(np.full(4, 7.5), m1, uniform_mesh(BOX, 3)), 7.5)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 100_000))
def test_density_transfer_integral_preserving(seed):
    rng = np.random.default_rng(seed)
    net = standard_double_bubble(0.3, 48)
    shift = rng.uniform(-0.2, 0.2, 2)
    a = build_adapted(macro_mesh(BOX), net, int(rng.integers(2, 5)), 1)
    b = build_adapted(macro_mesh(BOX), net.with_positions(net.X + shift), int(rng.integers(2, 5)), 1)
    rho = rng.uniform(0, 1000, a.n_elements)
    assert project_density(rho, a, b) @ b.areas == pytest.approx(rho @ a.areas, rel=1e-12)
