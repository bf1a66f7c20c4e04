import dataclasses

import numpy as np
import pytest

from conftest import flat_interface, unit_params
from tripleflow.errors import ArgumentError, AssumptionViolated
from tripleflow.network import WALLS, closed_curve_network, region_areas
from tripleflow.shapes import standard_double_bubble
from tripleflow.stepper import (
    SchemeConfig,
    initial_state,
    load_checkpoint,
    prepare_context,
    run,
    save_checkpoint,
    step,
    step_linear,
    step_structure_preserving,
)


def vortex(p):
    x, y = p[:, 0], p[:, 1]
    return np.column_stack([-y * (1 - x**2), x * (1 - y**2)])


@pytest.fixture(scope="module")
def moving():
    net = standard_double_bubble(0.3, 40)
    params = unit_params(rho=(1.0, 2.0, 3.0), eta=(1.0, 0.5, 2.0))
    cfg = SchemeConfig(dt=5e-3, T=2e-2, adapt=(3, 2), picard_tol=1e-11)
    return initial_state(net, params, cfg, noslip=WALLS, U0=vortex), cfg


def test_flat_interface_stays_at_rest():
    net = flat_interface()
    params = unit_params(rho=(1.0, 5.0), eta=(1.0, 3.0))
    cfg = SchemeConfig(dt=1e-2, T=3e-2, adapt=(3, 2))
    res = run(initial_state(net, params, cfg, noslip=("bottom", "top")), cfg)
    assert len(res.records) == 4
    for r in res.records:
        assert r.u_max <= 1e-12
    np.testing.assert_allclose(res.state.net.X, net.X, atol=1e-12)


def test_structure_preserving_run_invariants(moving):
    state, cfg = moving
    res = run(state, cfg)
    assert res.stopped == "T" and res.state.t == pytest.approx(cfg.T)
    E = np.array([r.E for r in res.records])
    for r in res.records[1:]:
        assert r.energy_slack >= -1e-10 * abs(r.E)
        assert np.max(np.abs(r.vdelta)) <= 1e-9
        assert r.picard_iters >= 2
    assert np.all(np.diff(E) <= 1e-12 * E[0])
    assert res.records[-1].u_max > 0


def test_run_is_deterministic(moving):
    state, cfg = moving
    cfg = dataclasses.replace(cfg, max_steps=2)
    a, b = run(state, cfg), run(state, cfg)
    np.testing.assert_array_equal(a.state.U, b.state.U)
    np.testing.assert_array_equal(a.state.net.X, b.state.net.X)
    assert a.stopped == "max_steps"


def test_single_picard_iterate_is_the_linear_scheme(moving):
    state, cfg = moving
    lin = step_linear(state, dataclasses.replace(cfg, scheme="linear", solver="direct"))
    one = step_structure_preserving(state, dataclasses.replace(cfg, picard_max=1, picard_tol=1.0))
    assert one.info.picard_iters == 1
    np.testing.assert_allclose(one.net.X, lin.net.X, atol=1e-12)
    np.testing.assert_allclose(one.U, lin.U, atol=1e-10 * np.max(np.abs(lin.U)))


def test_linear_scheme_is_energy_stable(moving):
    state, cfg = moving
    cfg = dataclasses.replace(cfg, scheme="linear")
    res = run(state, cfg)
    for r in res.records[1:]:
        assert r.energy_slack >= -1e-10 * abs(r.E)
    # the linear scheme only conserves volume approximately
    assert np.max(np.abs(res.records[-1].vdelta)) > 1e-12


def test_zero_final_time(moving):
    state, cfg = moving
    res = run(state, dataclasses.replace(cfg, T=0.0))
    assert len(res.records) == 1 and res.stopped == "T"
    assert res.state is state


def test_assumption_violation_is_reported():
    # a closed curve with a needle: the tip vertex has opposite normals
    ring = np.array([[-0.3, -0.3], [0.3, -0.3], [0.3, 0.3], [0.0, 0.3], [0.0, 0.6], [0.0, 0.3], [-0.3, 0.3]])
    net = closed_curve_network(ring)
    params = unit_params()
    cfg = SchemeConfig(dt=1e-2, adapt=(3, 2))
    state = initial_state(net, params, cfg)
    with pytest.raises(AssumptionViolated) as info:
        step(state, cfg)
    assert "A2" in info.value.which
    # the check can be disabled
    prepare_context(state, dataclasses.replace(cfg, check=False), 1e-2)


def test_checkpoint_round_trip(moving, tmp_path):
    state, cfg = moving
    s1 = step(state, cfg)
    path = tmp_path / "ck.npz"
    save_checkpoint(s1, path, cfg)
    back = load_checkpoint(path)
    assert back.t == s1.t and back.step == s1.step
    np.testing.assert_array_equal(back.net.X, s1.net.X)
    np.testing.assert_array_equal(back.U, s1.U)
    np.testing.assert_array_equal(back.rho, s1.rho)
    np.testing.assert_array_equal(back.mesh.points, s1.mesh.points)
    np.testing.assert_array_equal(back.initial_volumes, region_areas(state.net))
    a, b = step(s1, cfg), step(back, cfg)
    np.testing.assert_array_equal(a.net.X, b.net.X)
    np.testing.assert_array_equal(a.U, b.U)


def test_run_writes_outputs(moving, tmp_path):
    state, cfg = moving
    run(state, dataclasses.replace(cfg, max_steps=2), out_dir=tmp_path, checkpoint_every=1)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == [
        "checkpoint_000001.npz", "checkpoint_000002.npz", "diagnostics.csv", "final_network.txt", "final_state.npz",
    ]


def test_scheme_config():
    assert SchemeConfig.from_adapt(4, 5, 2).dt == pytest.approx(2.5e-4)
    assert SchemeConfig(scheme="sp").scheme == "structure_preserving"
    for bad in (dict(scheme="implicit"), dict(dt=0.0), dict(T=-1.0), dict(picard_tol=0.0), dict(picard_max=0)):
        with pytest.raises(ArgumentError):
            SchemeConfig(**bad)
    cfg = SchemeConfig()
    assert cfg.picard_tolerance(standard_double_bubble(0.3, 16).domain) == pytest.approx(1e-8 * np.sqrt(8))
