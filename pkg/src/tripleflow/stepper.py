"""Time stepping: linear scheme, structure-preserving scheme with Picard iteration, run loop."""

from __future__ import annotations

import hashlib
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np

from .assembly import FormContext, assemble_momentum, assemble_system, with_normals
from .cut import CutGeometry, clip_elements, phase_average_coefficients
from .diagnostics import StepRecord, csv_header, energy_law_slack, record_state, write_csv
from .errors import ArgumentError, AssumptionViolated, PicardDiverged, TripleFlowError
from .mesh import BulkMesh, build_adapted, macro_mesh, project_density
from .network import WALLS, CurveNetwork, check_assumptions, region_areas
from .solver import ReusedFactorization, solve_saddle
from .spaces import PressureSpace, SurfaceSpaces, VelocitySpace, interpolate_velocity

log = logging.getLogger(__name__)

SCHEMES = ("linear", "structure_preserving")


@dataclass
class PhaseParams:
    """Per-region density and viscosity, per-curve tension, body acceleration."""

    rho: np.ndarray
    eta: np.ndarray
    gamma: np.ndarray
    g: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        self.rho = np.atleast_1d(np.asarray(self.rho, dtype=float))
        self.eta = np.atleast_1d(np.asarray(self.eta, dtype=float))
        self.gamma = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        self.g = np.asarray(self.g, dtype=float).reshape(2)
        if np.any(self.rho < 0) or np.any(self.eta <= 0) or np.any(self.gamma <= 0):
            raise ArgumentError("need rho >= 0, eta > 0 and gamma > 0")

    def for_network(self, net: CurveNetwork) -> "PhaseParams":
        R, S = net.n_regions, net.n_curves
        rho = np.broadcast_to(self.rho, (R,)) if self.rho.size in (1, R) else None
        eta = np.broadcast_to(self.eta, (R,)) if self.eta.size in (1, R) else None
        gam = np.broadcast_to(self.gamma, (S,)) if self.gamma.size in (1, S) else None
        if rho is None or eta is None or gam is None:
            raise ArgumentError("phase parameters do not match the network's regions and curves")
        return PhaseParams(rho.copy(), eta.copy(), gam.copy(), self.g.copy())


@dataclass
class SchemeConfig:
    scheme: str = "structure_preserving"
    dt: float = 1e-3
    T: float = 0.0
    xfem: bool = True
    picard_tol: float | None = None  # default 1e-8 times the domain diameter
    picard_max: int = 50
    adapt: tuple = (4, 2)  # (k, l): fine and coarse bisection levels
    adapt_n: int | None = None
    band: float = 1.0
    solver: str = "schur"
    solver_tol: float = 1e-10
    max_halvings: int = 3
    max_steps: int | None = None
    wall_clock: float | None = None
    check: bool = True

    def __post_init__(self):
        if self.scheme in ("sp", "structure-preserving"):
            self.scheme = "structure_preserving"
        if self.scheme not in SCHEMES:
            raise ArgumentError(f"unknown scheme {self.scheme!r}")
        if self.adapt_n is not None:
            self.dt = 1e-3 / self.adapt_n
        if not self.dt > 0 or self.T < 0:
            raise ArgumentError("need dt > 0 and T >= 0")
        if self.picard_tol is not None and not self.picard_tol > 0:
            raise ArgumentError("picard_tol must be positive")
        if self.picard_max < 1:
            raise ArgumentError("picard_max must be at least 1")
        k, l = self.adapt
        self.adapt = (int(k), int(l))

    @classmethod
    def from_adapt(cls, n: int, k: int, l: int, **kw) -> "SchemeConfig":
        """Configuration for the notation ``n adapt_{k,l}``: dt = 1e-3 / n."""
        return cls(adapt=(k, l), adapt_n=n, **kw)

    def picard_tolerance(self, domain) -> float:
        return self.picard_tol if self.picard_tol is not None else 1e-8 * domain.diameter


@dataclass
class StepInfo:
    dt: float
    slack: float
    picard_iters: int
    krylov_iters: int
    halvings: int = 0


@dataclass(eq=False)
class SimState:
    """Discrete state (U^m, P^m, Gamma^m) with the mesh the fields live on."""

    t: float
    step: int
    net: CurveNetwork
    mesh: BulkMesh
    base: BulkMesh
    params: PhaseParams
    U: np.ndarray
    rho: np.ndarray  # density paired with U (lagged density of the next step)
    eta: np.ndarray
    P: np.ndarray | None = None
    Q: PressureSpace | None = None
    pressure_cut: CutGeometry | None = None
    kappa: np.ndarray | None = None
    initial_volumes: np.ndarray | None = None
    info: StepInfo | None = None

    @cached_property
    def V(self) -> VelocitySpace:
        return VelocitySpace(self.mesh)

    @cached_property
    def geometry_cut(self) -> CutGeometry:
        return clip_elements(self.mesh, self.net)


def initial_state(net: CurveNetwork, params: PhaseParams, cfg: SchemeConfig, noslip=WALLS, U0=None) -> SimState:
    """State at t = 0 on a mesh adapted to the initial network; U0 is a vector function or None."""
    params = params.for_network(net)
    base = macro_mesh(net.domain, noslip)
    mesh = build_adapted(base, net, *cfg.adapt, band=cfg.band)
    cut = clip_elements(mesh, net)
    rho, eta = phase_average_coefficients(cut.incidence, params.rho, params.eta)
    V = VelocitySpace(mesh)
    U = np.zeros(V.dim) if U0 is None else V.interpolate(U0)
    U[V.fixed] = 0.0
    st = SimState(
        t=0.0, step=0, net=net, mesh=mesh, base=base, params=params, U=U, rho=rho, eta=eta,
        initial_volumes=region_areas(net),
    )
    st.__dict__["V"] = V
    st.__dict__["geometry_cut"] = cut
    return st


def _check(net: CurveNetwork):
    rep = check_assumptions(net)
    if not rep.ok:
        which = rep.failures()
        raise AssumptionViolated(f"assumption(s) {', '.join(which)} violated by the current interface", which)


def prepare_context(state: SimState, cfg: SchemeConfig, dt: float) -> FormContext:
    """Adapt, classify, build spaces and transfer the lagged fields for one step."""
    net = state.net
    if cfg.check:
        _check(net)
    p = state.params
    mesh = build_adapted(state.base, net, *cfg.adapt, band=cfg.band)
    cut = clip_elements(mesh, net)
    rho, eta = phase_average_coefficients(cut.incidence, p.rho, p.eta)
    rho_old = project_density(state.rho, state.mesh, mesh)
    V = VelocitySpace(mesh)
    Q = PressureSpace(mesh, cut, cfg.xfem)
    S = SurfaceSpaces(net)
    U_old = interpolate_velocity(state.U, state.V, V)
    return FormContext(V, Q, S, cut, rho, rho_old, eta, p.gamma, p.g, dt, U_old=U_old)


def _finish(state: SimState, ctx: FormContext, system, sol, picard, krylov) -> SimState:
    U, P, kappa, dX = system.unpack(sol)
    net_new = ctx.net.with_positions(ctx.net.X + dX)
    slack = energy_law_slack(ctx, U, net_new)
    new = SimState(
        t=state.t + ctx.dt, step=state.step + 1, net=net_new, mesh=ctx.mesh, base=state.base,
        params=state.params, U=U, rho=ctx.rho, eta=ctx.eta, P=P, Q=ctx.Q, pressure_cut=ctx.cut,
        kappa=kappa, initial_volumes=state.initial_volumes,
        info=StepInfo(ctx.dt, slack, picard, krylov),
    )
    new.__dict__["V"] = ctx.V
    return new


def step_linear(state: SimState, cfg: SchemeConfig, dt: float | None = None) -> SimState:
    ctx = prepare_context(state, cfg, cfg.dt if dt is None else dt)
    system = assemble_system(ctx)
    sol, info = solve_saddle(system, cfg.solver, tol=cfg.solver_tol)
    return _finish(state, ctx, system, sol, 1, info.iterations)


def picard_solve(ctx: FormContext, cfg: SchemeConfig, tol: float):
    """Lagged Picard iteration for the time-weighted normals; returns (system, sol, iters, krylov).

    The first iterate uses the normals of Gamma^m and is solved with a
    sparse factorization that then preconditions all later iterates.
    """
    net = ctx.net
    X0 = net.X
    base = assemble_system(ctx, blocks=assemble_momentum(ctx))
    fact = ReusedFactorization(base)
    X_lag = X0
    sol = None
    krylov = 0
    for it in range(1, cfg.picard_max + 1):
        system = base if it == 1 else with_normals(base, X_lag)
        sol, info = fact.solve(system, x0=sol, tol=cfg.solver_tol)
        krylov += info.iterations
        dX = system.unpack(sol)[3]
        X_next = X0 + dX
        change = float(np.max(np.abs(X_next - X_lag))) if X0.size else 0.0
        X_lag = X_next
        if change <= tol:
            return system, sol, it, krylov
    raise PicardDiverged(f"Picard iteration did not reach {tol:.2e} within {cfg.picard_max} iterations")


def step_structure_preserving(state: SimState, cfg: SchemeConfig, dt: float | None = None) -> SimState:
    """One step of the volume-preserving scheme, halving dt on Picard failure."""
    dt = cfg.dt if dt is None else dt
    tol = cfg.picard_tolerance(state.net.domain)
    for halving in range(cfg.max_halvings + 1):
        ctx = prepare_context(state, cfg, dt)
        try:
            system, sol, it, kry = picard_solve(ctx, cfg, tol)
        except PicardDiverged:
            if halving == cfg.max_halvings:
                raise
            log.warning("step %d: Picard iteration failed, retrying with dt = %g", state.step, dt / 2)
            dt = dt / 2
            continue
        new = _finish(state, ctx, system, sol, it, kry)
        new.info.halvings = halving
        return new
    raise AssertionError("unreachable")


def step(state: SimState, cfg: SchemeConfig, dt: float | None = None) -> SimState:
    if cfg.scheme == "linear":
        return step_linear(state, cfg, dt)
    return step_structure_preserving(state, cfg, dt)


@dataclass
class RunResult:
    records: list
    state: SimState
    stopped: str = "T"

    def column(self, name):
        r0 = self.records[0]
        head = csv_header(len(r0.vol), len(r0.junctions))
        i = head.index(name)
        return np.array([r.row()[i] for r in self.records], dtype=float)


def config_hash(cfg: SchemeConfig) -> str:
    return hashlib.sha256(repr(sorted(asdict(cfg).items())).encode()).hexdigest()[:16]


def save_checkpoint(state: SimState, path, cfg: SchemeConfig | None = None):
    """Network text, mesh, velocity and density of a state (resumable)."""
    m = state.mesh
    np.savez(
        path,
        t=state.t,
        step=state.step,
        net=state.net.to_text(),
        points=m.points,
        triangles=m.triangles,
        macro_id=m.macro_id,
        heap=m.heap,
        noslip=np.array(sorted(m.noslip), dtype=str),
        U=state.U,
        rho=state.rho,
        eta=state.eta,
        params=np.concatenate([state.params.rho, state.params.eta, state.params.gamma, state.params.g]),
        initial_volumes=state.initial_volumes,
        config=config_hash(cfg) if cfg is not None else "",
    )


def load_checkpoint(path) -> SimState:
    d = np.load(path, allow_pickle=False)
    net = CurveNetwork.from_text(str(d["net"]))
    noslip = tuple(str(s) for s in d["noslip"])
    base = macro_mesh(net.domain, noslip)
    mesh = BulkMesh(base.macro, d["points"], d["triangles"], d["macro_id"], d["heap"], noslip)
    R, S = net.n_regions, net.n_curves
    pv = d["params"]
    params = PhaseParams(pv[:R], pv[R : 2 * R], pv[2 * R : 2 * R + S], pv[2 * R + S :])
    return SimState(
        t=float(d["t"]), step=int(d["step"]), net=net, mesh=mesh, base=base, params=params,
        U=d["U"], rho=d["rho"], eta=d["eta"], initial_volumes=d["initial_volumes"],
    )


def run(initial: SimState, cfg: SchemeConfig, out_dir=None, checkpoint_every: int = 0, callback=None) -> RunResult:
    """Advance to cfg.T recording diagnostics; honors max_steps and wall_clock caps."""
    state = initial
    records: list[StepRecord] = [record_state(state, state.step)]
    if callback is not None:
        callback(state, records[-1])
    start = time.perf_counter()
    stopped = "T"
    eps = 1e-9 * cfg.dt
    n = 0
    while state.t < cfg.T - eps:
        if cfg.max_steps is not None and n >= cfg.max_steps:
            stopped = "max_steps"
            break
        if cfg.wall_clock is not None and time.perf_counter() - start > cfg.wall_clock:
            stopped = "wall_clock"
            break
        dt = min(cfg.dt, cfg.T - state.t)
        try:
            state = step(state, cfg, dt)
        except TripleFlowError as exc:
            exc.step = state.step
            if exc.args:
                exc.args = (f"step {state.step}: {exc.args[0]}",) + exc.args[1:]
            raise
        n += 1
        info = state.info
        rec = record_state(state, state.step, info.slack, info.picard_iters, info.krylov_iters)
        records.append(rec)
        log.info(
            "step %d t=%.6g E=%.10g slack=%.3e umax=%.3e picard=%d",
            state.step, state.t, rec.E, rec.energy_slack, rec.u_max, info.picard_iters,
        )
        if callback is not None:
            callback(state, rec)
        if out_dir and checkpoint_every and state.step % checkpoint_every == 0:
            save_checkpoint(state, os.path.join(out_dir, f"checkpoint_{state.step:06d}.npz"), cfg)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "diagnostics.csv"), "w") as fh:
            write_csv(records, fh)
        with open(os.path.join(out_dir, "final_network.txt"), "w") as fh:
            fh.write(state.net.to_text())
        save_checkpoint(state, os.path.join(out_dir, "final_state.npz"), cfg)
    return RunResult(records, state, stopped)
