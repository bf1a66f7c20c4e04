"""Scenario presets: the two-dimensional examples at desk-scale resolution."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import ArgumentError
from .network import WALLS, Box, CurveNetwork
from .shapes import (
    gas_liquid_double_bubble,
    junction_migration_network,
    standard_double_bubble,
    standard_triple_bubble,
    trapped_bubble_network,
)
from .stepper import PhaseParams, SchemeConfig, SimState, initial_state

G_EARTH = (0.0, -0.98)
SIDE_WALLS_FREE = ("bottom", "top")  # no-slip walls when the side walls are free-slip


@dataclass
class Scenario:
    name: str
    builder: Callable[[int], CurveNetwork]
    params: PhaseParams
    noslip: tuple = WALLS
    n_vertices: int = 128
    config: SchemeConfig = field(default_factory=SchemeConfig)
    description: str = ""

    @property
    def T(self) -> float:
        return self.config.T

    def network(self, n_vertices: int | None = None) -> CurveNetwork:
        net = self.builder(self.n_vertices if n_vertices is None else n_vertices)
        for b in net.boundary_points:
            if b.wall in self.noslip:
                raise ArgumentError(f"boundary point on the no-slip wall {b.wall!r}")
        return net

    def initial_state(self, cfg: SchemeConfig | None = None, n_vertices: int | None = None) -> SimState:
        return initial_state(self.network(n_vertices), self.params, cfg or self.config, self.noslip)

    def with_config(self, **kw) -> "Scenario":
        return replace(self, config=replace(self.config, **kw))


def _double(radius=0.3):
    return lambda n: standard_double_bubble(radius=radius, n_vertices=n)


def _triple(area, center=(0.0, 0.0), domain=None):
    return lambda n: standard_triple_bubble(area, n_vertices=n, center=center, domain=domain)


def _ex1(name, builder, gamma, desc):
    return Scenario(
        name=name,
        builder=builder,
        params=PhaseParams(rho=0.0, eta=1.0, gamma=gamma, g=(0.0, 0.0)),
        noslip=WALLS,
        n_vertices=128,
        config=SchemeConfig(dt=1e-3, T=5e-3, adapt=(4, 4)),
        description=desc,
    )


def _presets():
    rise_box = Box(0.0, 1.0, 0.0, 2.0)
    out = {}
    out["ex1_double_bubble"] = _ex1(
        "ex1_double_bubble", _double(0.3), 1.0, "Stokes flow, symmetric standard double bubble with radii 0.3"
    )
    out["ex1_triple_bubble"] = _ex1(
        "ex1_triple_bubble",
        _triple(3 * np.pi / 25),
        1.0,
        "Stokes flow, symmetric standard triple bubble with bubble areas 3 pi / 25",
    )
    out["ex1_nonsym_double"] = _ex1(
        "ex1_nonsym_double", _double(0.3), (1.5, 2.0, 1.0), "Stokes flow, double bubble with unequal tensions"
    )
    out["ex1_nonsym_triple"] = _ex1(
        "ex1_nonsym_triple",
        _triple(3 * np.pi / 25),
        (1.4, 1.6, 1.8, 1.0, 1.0, 1.0),
        "Stokes flow, triple bubble with unequal tensions",
    )
    out["ex2_junction_migration"] = Scenario(
        name="ex2_junction_migration",
        builder=lambda n: junction_migration_network(n_vertices=n),
        params=PhaseParams(rho=1.0, eta=1.0, gamma=1.0, g=G_EARTH),
        noslip=("bottom", "top"),
        n_vertices=64,
        config=SchemeConfig(dt=0.02, T=5.0, adapt=(4, 2)),
        description="three curves meeting at a triple junction that migrates to the right",
    )
    out["ex3_trapped_bubble"] = Scenario(
        name="ex3_trapped_bubble",
        builder=lambda n: trapped_bubble_network(n_vertices=n),
        params=PhaseParams(rho=(1000.0, 1200.0, 1.0), eta=(0.1, 0.15, 1e-4), gamma=5.0, g=G_EARTH),
        noslip=SIDE_WALLS_FREE,
        n_vertices=128,
        config=SchemeConfig(dt=5e-3, T=3.0, adapt=(5, 2), picard_tol=1e-10),
        description="light bubble rising through the interface between two liquids",
    )
    out["ex4_gas_liquid_double"] = Scenario(
        name="ex4_gas_liquid_double",
        builder=lambda n: gas_liquid_double_bubble(n_vertices=n),
        params=PhaseParams(rho=(1000.0, 1.0, 1100.0), eta=(10.0, 0.1, 10.0), gamma=24.5, g=G_EARTH),
        noslip=SIDE_WALLS_FREE,
        n_vertices=96,
        config=SchemeConfig(dt=1e-2, T=1.0, adapt=(5, 2), picard_tol=1e-10),
        description="gas semi-disk pulling up a heavier liquid semi-ellipse",
    )
    out["ex5_triple_rise_a"] = Scenario(
        name="ex5_triple_rise_a",
        builder=_triple(3 * np.pi / 400, center=(0.5, 0.5), domain=rise_box),
        params=PhaseParams(rho=(1000.0, 100.0, 100.0, 100.0), eta=1.0, gamma=24.5, g=G_EARTH),
        noslip=SIDE_WALLS_FREE,
        n_vertices=96,
        config=SchemeConfig(dt=1e-2, T=3.0, adapt=(5, 2), picard_tol=1e-10),
        description="rising standard triple bubble, high tension",
    )
    out["ex5_triple_rise_b"] = Scenario(
        name="ex5_triple_rise_b",
        builder=_triple(3 * np.pi / 400, center=(0.5, 0.5), domain=rise_box),
        params=PhaseParams(rho=(1000.0, 1.0, 1.0, 1.0), eta=(10.0, 0.1, 0.1, 0.1), gamma=1.96, g=G_EARTH),
        noslip=SIDE_WALLS_FREE,
        n_vertices=96,
        config=SchemeConfig(dt=1e-2, T=3.0, adapt=(5, 2), picard_tol=1e-10),
        description="rising standard triple bubble, low tension and large density contrast",
    )
    return out


PRESET_NAMES = (
    "ex1_double_bubble",
    "ex1_triple_bubble",
    "ex1_nonsym_double",
    "ex1_nonsym_triple",
    "ex2_junction_migration",
    "ex3_trapped_bubble",
    "ex4_gas_liquid_double",
    "ex5_triple_rise_a",
    "ex5_triple_rise_b",
)


def preset(name: str) -> Scenario:
    """Fully populated scenario for a preset name."""
    table = _presets()
    if name not in table:
        raise ArgumentError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    return table[name]
