"""Flat ``key = value`` run configuration.

Schema (every key optional except ``preset``; ``none`` leaves the preset default)::

    preset           preset name
    scheme           linear | structure_preserving
    xfem             true | false
    dt               time step
    T                final time
    adapt_n          n of "n adapt_{k,l}" (sets dt = 1e-3 / n)
    adapt_k          fine bisection level near the interface
    adapt_l          coarse bisection level
    n_vertices       interface vertex count
    picard_tol       Picard displacement tolerance
    picard_max       Picard iteration cap
    solver           schur | direct
    solver_tol       relative residual of the linear solves
    max_steps        step cap
    wall_clock       wall-clock cap in seconds
    checkpoint_every checkpoint interval in steps (0 disables)
    out              output directory

Lines starting with ``#`` are comments.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .errors import ArgumentError
from .scenarios import Scenario, preset
from .stepper import SchemeConfig

_TYPES = {
    "preset": str,
    "scheme": str,
    "xfem": bool,
    "dt": float,
    "T": float,
    "adapt_n": int,
    "adapt_k": int,
    "adapt_l": int,
    "n_vertices": int,
    "picard_tol": float,
    "picard_max": int,
    "solver": str,
    "solver_tol": float,
    "max_steps": int,
    "wall_clock": float,
    "checkpoint_every": int,
    "out": str,
}


@dataclass
class RunConfig:
    preset: str
    scheme: str | None = None
    xfem: bool | None = None
    dt: float | None = None
    T: float | None = None
    adapt_n: int | None = None
    adapt_k: int | None = None
    adapt_l: int | None = None
    n_vertices: int | None = None
    picard_tol: float | None = None
    picard_max: int | None = None
    solver: str | None = None
    solver_tol: float | None = None
    max_steps: int | None = None
    wall_clock: float | None = None
    checkpoint_every: int | None = None
    out: str | None = None

    def scenario(self) -> Scenario:
        """The preset with this configuration's overrides applied."""
        sc = preset(self.preset)
        c = sc.config
        kw = {}
        for key in ("scheme", "xfem", "dt", "T", "picard_tol", "picard_max", "solver", "solver_tol", "max_steps", "wall_clock"):
            v = getattr(self, key)
            if v is not None:
                kw[key] = v
        if self.adapt_k is not None or self.adapt_l is not None:
            k = self.adapt_k if self.adapt_k is not None else c.adapt[0]
            l = self.adapt_l if self.adapt_l is not None else c.adapt[1]
            kw["adapt"] = (k, l)
        if self.adapt_n is not None:
            kw["adapt_n"] = self.adapt_n
        cfg = replace(c, **kw)
        if self.n_vertices is not None:
            sc = replace(sc, n_vertices=self.n_vertices)
        return replace(sc, config=cfg)


def _format(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(key: str, text: str):
    t = text.strip()
    if t.lower() == "none":
        return None
    typ = _TYPES[key]
    if typ is bool:
        low = t.lower()
        if low in ("true", "on", "yes", "1"):
            return True
        if low in ("false", "off", "no", "0"):
            return False
        raise ArgumentError(f"{key}: expected a boolean, got {t!r}")
    try:
        return typ(t)
    except ValueError as exc:
        raise ArgumentError(f"{key}: cannot parse {t!r}") from exc


def serialize(cfg: RunConfig) -> str:
    return "".join(f"{f.name} = {_format(getattr(cfg, f.name))}\n" for f in fields(cfg))


def parse(text: str) -> RunConfig:
    vals = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ArgumentError(f"line {n}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ArgumentError(f"line {n}: unknown key {key!r}")
        vals[key] = _parse_value(key, val)
    if vals.get("preset") is None:
        raise ArgumentError("the configuration must name a preset")
    return RunConfig(**vals)


def load(path) -> RunConfig:
    with open(path) as fh:
        return parse(fh.read())


def scheme_config(cfg: RunConfig) -> SchemeConfig:
    return cfg.scenario().config
