"""Command-line interface: ``run``, ``check`` and ``info``.

Exit codes: 0 on success, 2 when an invariant is violated, 1 on errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from .config import RunConfig, load, serialize
from .errors import TripleFlowError
from .network import check_assumptions, interfacial_energy
from .scenarios import PRESET_NAMES, preset
from .stepper import run

OUT_ENV = "TRIPLEFLOW_OUT"

log = logging.getLogger("tripleflow")


@dataclass
class Check:
    name: str
    ok: bool
    detail: str


class _GeometryAudit:
    """Per-step geometric invariants collected through the run callback."""

    def __init__(self):
        self.worst_wall = 0.0
        self.worst_junction = 0.0
        self.assumptions_ok = True
        self.max_step_dvol = 0.0
        self.dvol_bound = 0.0
        self._prev = None

    def __call__(self, state, rec):
        net = state.net
        box = net.domain
        for b, g in zip(net.boundary_points, net.boundary_vertices):
            x = net.X[g]
            d = {"bottom": x[1] - box.ymin, "top": box.ymax - x[1], "left": x[0] - box.xmin, "right": box.xmax - x[0]}
            self.worst_wall = max(self.worst_wall, abs(d[b.wall]))
        for row in net.junction_vertices:
            P = net.X[row]
            self.worst_junction = max(self.worst_junction, float(np.max(np.abs(P - P[0]))))
        self.assumptions_ok &= check_assumptions(net).ok
        if self._prev is not None:
            self.max_step_dvol = max(self.max_step_dvol, float(np.max(np.abs(rec.vol - self._prev))))
        self._prev = rec.vol.copy()


def invariant_checks(result, cfg, audit: _GeometryAudit, scenario):
    recs = result.records
    net = result.state.net
    area = net.domain.area
    out = []
    slack = [r.energy_slack for r in recs[1:]]
    E = max(abs(r.E) for r in recs)
    worst = min(slack) if slack else 0.0
    out.append(Check("energy law", worst >= -1e-10 * E, f"min slack {worst:.3e} (|E| = {E:.6g})"))
    part = max(abs(r.vol.sum() - area) for r in recs) / area
    out.append(Check("partition", part <= 1e-12, f"max relative deviation {part:.2e}"))
    out.append(Check("boundary points on walls", audit.worst_wall == 0.0, f"max distance {audit.worst_wall:.2e}"))
    out.append(Check("junction coincidence", audit.worst_junction == 0.0, f"max spread {audit.worst_junction:.2e}"))
    out.append(Check("assumptions A2/A3", audit.assumptions_ok, "checked every step"))
    if cfg.scheme == "structure_preserving" and cfg.xfem:
        tol = cfg.picard_tolerance(net.domain)
        length = max(interfacial_energy(net, 1.0), 1e-300)
        bound = max(10 * tol * length, 10 * cfg.solver_tol)
        out.append(
            Check("volume preservation", audit.max_step_dvol <= bound, f"max step change {audit.max_step_dvol:.2e} <= {bound:.2e}")
        )
    return out


def _output_dir(name, arg):
    if arg:
        return arg
    root = os.environ.get(OUT_ENV, os.path.join(os.getcwd(), "tripleflow_runs"))
    return os.path.join(root, name)


def _run_config(args) -> RunConfig:
    if getattr(args, "config", None):
        rc = load(args.config)
        if args.preset and args.preset != rc.preset:
            rc = replace(rc, preset=args.preset)
    else:
        if not args.preset:
            raise TripleFlowError("a preset is required (--preset NAME)")
        rc = RunConfig(preset=args.preset)
    kw = {}
    if args.scheme:
        kw["scheme"] = "structure_preserving" if args.scheme in ("sp", "structure_preserving") else args.scheme
    if args.xfem:
        kw["xfem"] = args.xfem == "on"
    if args.adapt:
        parts = [int(p) for p in args.adapt.split(",")]
        if len(parts) != 3:
            raise TripleFlowError("--adapt expects n,k,l")
        kw.update(adapt_n=parts[0], adapt_k=parts[1], adapt_l=parts[2])
    for key in ("T", "dt", "vertices", "steps", "out"):
        v = getattr(args, key, None)
        if v is not None:
            kw[{"vertices": "n_vertices", "steps": "max_steps"}.get(key, key)] = v
    return replace(rc, **kw)


def _execute(rc: RunConfig, out_dir, checkpoint_every=0):
    sc = rc.scenario()
    cfg = sc.config
    audit = _GeometryAudit()
    result = run(sc.initial_state(cfg), cfg, out_dir=out_dir, checkpoint_every=checkpoint_every, callback=audit)
    return sc, cfg, result, invariant_checks(result, cfg, audit, sc)


def _report(checks):
    for c in checks:
        print(f"{'PASS' if c.ok else 'FAIL'}  {c.name}: {c.detail}")
    return 0 if all(c.ok for c in checks) else 2


def cmd_run(args) -> int:
    rc = _run_config(args)
    out = _output_dir(rc.preset, rc.out)
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.txt"), "w") as fh:
        fh.write(serialize(rc))
    sc, cfg, result, checks = _execute(rc, out, rc.checkpoint_every or 0)
    r = result.records[-1]
    print(f"{sc.name}: {len(result.records) - 1} steps to t = {r.t:.6g} ({result.stopped}); output in {out}")
    return _report(checks)


def cmd_check(args) -> int:
    rc = _run_config(args)
    if rc.max_steps is None:
        rc = replace(rc, max_steps=3)
    sc, cfg, result, checks = _execute(rc, None)
    print(f"{sc.name}: {len(result.records) - 1} steps")
    return _report(checks)


def cmd_info(args) -> int:
    print(f"tripleflow {__version__}")
    print("presets:")
    for name in PRESET_NAMES:
        sc = preset(name)
        c = sc.config
        print(f"  {name:24s} dt={c.dt:g} T={c.T:g} adapt={c.adapt} vertices={sc.n_vertices}  {sc.description}")
    print(f"output root: ${OUT_ENV} (default ./tripleflow_runs)")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="tripleflow", description="Multiphase Navier-Stokes flow with triple junctions")
    p.add_argument("-v", "--verbose", action="store_true", help="log every step")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "run a preset and write diagnostics"), ("check", "run a few steps and audit invariants")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--preset", choices=PRESET_NAMES, metavar="NAME")
        s.add_argument("--config", help="key = value configuration file")
        s.add_argument("--scheme", choices=("linear", "sp", "structure_preserving"))
        s.add_argument("--xfem", choices=("on", "off"))
        s.add_argument("--adapt", help="n,k,l for n adapt_{k,l} (dt = 1e-3/n)")
        s.add_argument("--T", type=float)
        s.add_argument("--dt", type=float)
        s.add_argument("--vertices", type=int)
        s.add_argument("--steps", type=int, help="maximum number of steps")
        if name == "run":
            s.add_argument("--out", help="output directory")
    sub.add_parser("info", help="list presets and settings")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "check":
            return cmd_check(args)
        return cmd_info(args)
    except (TripleFlowError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
