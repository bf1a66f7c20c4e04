import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_context, unit_params
from tripleflow.assembly import assemble_system
from tripleflow.cut import perturbed_positions
from tripleflow.diagnostics import (
    benchmark_quantities,
    csv_header,
    energy_law_slack,
    kinetic_energy,
    max_velocity,
    moving_average,
    read_csv,
    record_state,
    total_energy,
    write_csv,
)
from tripleflow.errors import ArgumentError
from tripleflow.mesh import uniform_mesh
from tripleflow.network import Box, closed_curve_network, interfacial_energy, regular_polygon
from tripleflow.shapes import standard_double_bubble
from tripleflow.solver import solve_direct
from tripleflow.spaces import VelocitySpace
from tripleflow.stepper import SchemeConfig, initial_state

BOX = Box(-1.0, 1.0, -1.0, 1.0)


def test_kinetic_energy_examples():
    V = VelocitySpace(uniform_mesh(BOX, 2))
    U = V.interpolate(lambda p: np.column_stack([np.ones(len(p)), np.full(len(p), 2.0)]))
    rho = np.full(V.mesh.n_elements, 3.0)
    assert kinetic_energy(V, rho, U) == pytest.approx(0.5 * 3.0 * 5.0 * 4.0, rel=1e-13)
    assert kinetic_energy(V, np.zeros(V.mesh.n_elements), U) == 0.0
    # a linear field: 0.5 * int x^2 over the box is 2/3
    U = V.interpolate(lambda p: np.column_stack([p[:, 0], np.zeros(len(p))]))
    assert kinetic_energy(V, np.ones(V.mesh.n_elements), U) == pytest.approx(2 / 3, rel=1e-13)


def test_max_velocity():
    U = np.array([3.0, 0.0, -1.0, 4.0, 0.0, 1.0])
    assert max_velocity(U) == 5.0
    assert max_velocity(np.zeros(0)) == 0.0


def test_total_energy_is_kinetic_plus_interfacial():
    net = standard_double_bubble(0.3, 40)
    params = unit_params(rho=2.0, gamma=(1.0, 2.0, 3.0))
    state, _, _ = make_context(net, params, U0=lambda p: np.column_stack([p[:, 1], -p[:, 0]]))
    ke = kinetic_energy(state.V, state.rho, state.U)
    assert ke > 0
    assert total_energy(state) == pytest.approx(ke + interfacial_energy(net, (1.0, 2.0, 3.0)), rel=1e-14)


def test_benchmark_quantities_on_a_polygon():
    centre = (0.1, 0.23)
    net = closed_curve_network(regular_polygon(centre, 0.3, 36))
    cfg = SchemeConfig(adapt=(4, 2))
    state = initial_state(net, unit_params(), cfg, U0=lambda p: np.column_stack([p[:, 0], 1 + p[:, 0]]))
    Vc, yc, vd = benchmark_quantities(state, 1)
    # region integrals use the clipped geometry, which carries the generic offset
    Xp, _ = perturbed_positions(net, state.mesh.H)
    shift = Xp[0] - net.X[0]
    assert yc == pytest.approx(centre[1] + shift[1], abs=1e-14)
    assert Vc == pytest.approx(1 + centre[0] + shift[0], abs=1e-13)
    assert vd == 0.0
    _, _, vd = benchmark_quantities(state, 1, vol0=2 * net.region_area(1))
    assert vd == pytest.approx(-0.5)


def test_energy_slack_sign():
    net = standard_double_bubble(0.3, 40)
    params = unit_params(rho=(1.0, 2.0, 3.0))
    _, _, ctx = make_context(net, params, U0=lambda p: np.column_stack([np.sin(3 * p[:, 1]), p[:, 0] ** 2]))
    system = assemble_system(ctx)
    U, _, _, dX = system.unpack(solve_direct(system)[0])
    moved = net.with_positions(net.X + dX)
    assert energy_law_slack(ctx, U, moved) >= -1e-12
    # an artificially energetic state violates the inequality
    assert energy_law_slack(ctx, 3 * ctx.U_old, net) < 0
    # staying at rest with no motion releases exactly the old kinetic energy
    ke = kinetic_energy(ctx.V, ctx.rho_old, ctx.U_old)
    assert energy_law_slack(ctx, np.zeros_like(U), net) == pytest.approx(ke, rel=1e-12)


def test_csv_round_trip():
    net = standard_double_bubble(0.3, 40)
    state, _, _ = make_context(net, unit_params(), U0=lambda p: np.column_stack([p[:, 1], -p[:, 0]]))
    recs = [record_state(state, 0), record_state(state, 1, energy_slack=1.5e-17, picard_iters=7)]
    text = write_csv(recs)
    head = text.splitlines()[0].split(",")
    assert head == csv_header(3, 2)
    assert head[:5] == ["step", "t", "E", "energy_slack", "u_max"] and head[-1] == "krylov_iters"
    back = read_csv(text)
    assert math.isnan(back["energy_slack"][0])
    assert back["energy_slack"][1] == 1.5e-17
    assert back["E"][0] == recs[0].E
    np.testing.assert_array_equal(back["picard_iters"], [0, 7])
    buf = io.StringIO()
    write_csv(recs, buf)
    assert buf.getvalue() == text
    with pytest.raises(ArgumentError):
        write_csv([])


def test_moving_average_examples():
    np.testing.assert_allclose(moving_average([1, 2, 3, 4, 5, 6], 5), [3.0, 4.0])
    np.testing.assert_allclose(moving_average([1, 2], 5), [1, 2])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=5, max_size=40))
def test_moving_average_of_increasing_data_increases(xs):
    x = np.cumsum(np.abs(xs) + 1e-3)
    assert np.all(np.diff(moving_average(x, 5)) > 0)
