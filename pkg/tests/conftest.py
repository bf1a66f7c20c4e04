import numpy as np
import pytest
from hypothesis import settings

from tripleflow.network import Box, CurveNetwork
from tripleflow.stepper import PhaseParams, SchemeConfig, initial_state, prepare_context

settings.register_profile("ci", deadline=None, print_blob=True)
settings.load_profile("ci")


def flat_interface(y=0.37, n=17, box=Box(0.0, 1.0, 0.0, 1.0)):
    """Horizontal interface from the left to the right wall; region 0 above, region 1 below."""
    x = np.linspace(box.xmin, box.xmax, n)
    line = np.column_stack([x, np.full(n, y)])
    # the clockwise normal of a rightward line points down, into region 1
    return CurveNetwork.build([line], boundary_points=[(0, 0), (0, 1)], regions=[{0: 1}, {0: -1}], domain=box)


def make_context(net, params, adapt=(3, 2), xfem=True, noslip=("bottom", "top"), dt=1e-2, U0=None):
    cfg = SchemeConfig(dt=dt, adapt=adapt, xfem=xfem)
    state = initial_state(net, params, cfg, noslip=noslip, U0=U0)
    return state, cfg, prepare_context(state, cfg, dt)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def unit_params(**kw):
    base = dict(rho=1.0, eta=1.0, gamma=1.0, g=(0.0, 0.0))
    base.update(kw)
    return PhaseParams(**base)
