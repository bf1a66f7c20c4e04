"""Observables of a simulation: energies, volumes, benchmark quantities, CSV output."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import FormContext, load_vector, vector_mass, viscous_matrix
from .cut import CutGeometry
from .errors import ArgumentError
from .mesh import barycentric
from .network import CurveNetwork, interfacial_energy, region_areas
from .spaces import PressureSpace, VelocitySpace


def kinetic_energy(V: VelocitySpace, rho, U) -> float:
    """0.5 * int rho |U|^2 with exact quadrature."""
    rho = np.asarray(rho, dtype=float)
    if not np.any(rho):
        return 0.0
    U = np.asarray(U, dtype=float)
    return 0.5 * float(U @ (vector_mass(V, rho) @ U))


def total_energy(state) -> float:
    """Kinetic plus interfacial energy of a simulation state."""
    return kinetic_energy(state.V, state.rho, state.U) + interfacial_energy(state.net, state.params.gamma)


def energy_law_slack(ctx: FormContext, U_new, net_new: CurveNetwork) -> float:
    """Right minus left side of the discrete energy inequality for one step.

    ``ctx`` is the step's form context (lagged density and transferred
    velocity on the step mesh); ``U_new`` and ``net_new`` are the solution.
    """
    V = ctx.V
    U_new = np.asarray(U_new, dtype=float)
    before = kinetic_energy(V, ctx.rho_old, ctx.U_old) + interfacial_energy(ctx.net, ctx.gamma)
    after = kinetic_energy(V, ctx.rho, U_new) + interfacial_energy(net_new, ctx.gamma)
    dissipation = float(U_new @ (viscous_matrix(V, ctx.eta) @ U_new))
    work = float(load_vector(V, ctx.rho, ctx.g) @ U_new) if np.any(ctx.g) else 0.0
    return before + ctx.dt * work - after - ctx.dt * dissipation


def max_velocity(U, V: VelocitySpace | None = None) -> float:
    """Maximum nodal Euclidean velocity."""
    U = np.asarray(U, dtype=float)
    if U.size == 0:
        return 0.0
    n = U.size // 2
    return float(np.max(np.hypot(U[:n], U[n:])))


def _region_points(cut: CutGeometry, ell: int):
    el, pts, w = cut.region_quadrature(ell)
    mesh = cut.mesh
    bary = barycentric(mesh.points[mesh.triangles[el]], pts)
    return el, pts, bary, w


def region_integrals(cut: CutGeometry, V: VelocitySpace, U, ell: int):
    """(area, int U_y, int y) over region ``ell`` of the clipped geometry."""
    el, pts, bary, w = _region_points(cut, ell)
    uy = V.evaluate(U, el, bary)[:, 1] if U is not None else np.zeros(len(w))
    return float(w.sum()), float(w @ uy), float(w @ pts[:, 1])


def benchmark_quantities(state, ell: int, vol0: float | None = None):
    """(V_c, y_c, v_delta) of region ``ell``: rise velocity, centre of mass, relative volume change."""
    cut = state.geometry_cut
    area, iu, iy = region_integrals(cut, state.V, state.U, ell)
    if area <= 0:
        raise ArgumentError(f"region {ell} has no area")
    vol = state.net.region_area(ell)
    v0 = state.initial_volumes[ell] if vol0 is None else vol0
    return iu / area, iy / area, (vol - v0) / v0


def region_pressure_stats(state, ell: int) -> float:
    """Area-weighted mean pressure over region ``ell``."""
    if state.P is None or state.Q is None:
        return 0.0
    return region_mean_pressure(state.pressure_cut, state.Q, state.P, ell)


def region_mean_pressure(cut: CutGeometry, Q: PressureSpace, P, ell: int) -> float:
    el, pts, bary, w = _region_points(cut, ell)
    vals = Q.evaluate(np.asarray(P, dtype=float), el, bary, region=np.full(len(w), ell))
    return float(w @ vals) / float(w.sum())


@dataclass
class StepRecord:
    step: int
    t: float
    E: float
    energy_slack: float
    u_max: float
    vol: np.ndarray
    vdelta: np.ndarray
    Vc: np.ndarray
    yc: np.ndarray
    pmean: np.ndarray
    junctions: np.ndarray  # (I_T, 2)
    picard_iters: int = 0
    krylov_iters: int = 0
    extra: dict = field(default_factory=dict)

    def row(self):
        out = [self.step, self.t, self.E, self.energy_slack, self.u_max]
        for ell in range(len(self.vol)):
            out += [self.vol[ell], self.vdelta[ell], self.Vc[ell], self.yc[ell], self.pmean[ell]]
        for x, y in self.junctions:
            out += [x, y]
        out += [self.picard_iters, self.krylov_iters]
        return out


def record_state(state, step: int, energy_slack: float = math.nan, picard_iters: int = 0, krylov_iters: int = 0):
    """Diagnostics of a state after ``step`` steps."""
    R = state.net.n_regions
    vol = region_areas(state.net)
    Vc, yc, pm = np.zeros(R), np.zeros(R), np.zeros(R)
    for ell in range(R):
        Vc[ell], yc[ell], _ = benchmark_quantities(state, ell)
        pm[ell] = region_pressure_stats(state, ell)
    v0 = np.asarray(state.initial_volumes)
    jv = state.net.junction_vertices
    J = state.net.X[jv[:, 0]] if jv.size else np.zeros((0, 2))
    return StepRecord(
        step=step,
        t=state.t,
        E=total_energy(state),
        energy_slack=energy_slack,
        u_max=max_velocity(state.U),
        vol=vol,
        vdelta=(vol - v0) / v0,
        Vc=Vc,
        yc=yc,
        pmean=pm,
        junctions=J,
        picard_iters=picard_iters,
        krylov_iters=krylov_iters,
    )


def csv_header(n_regions: int, n_junctions: int):
    cols = ["step", "t", "E", "energy_slack", "u_max"]
    for ell in range(n_regions):
        cols += [f"vol_{ell}", f"vdelta_{ell}", f"Vc_{ell}", f"yc_{ell}", f"pmean_{ell}"]
    for k in range(n_junctions):
        cols += [f"junction_{k}_x", f"junction_{k}_y"]
    return cols + ["picard_iters", "krylov_iters"]


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv(records, fh=None) -> str:
    """Write records in the fixed column order; returns the text if no file handle is given."""
    if not records:
        raise ArgumentError("no records to write")
    r0 = records[0]
    own = fh is None
    fh = io.StringIO() if own else fh
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(csv_header(len(r0.vol), len(r0.junctions)))
    for r in records:
        w.writerow([_fmt(v) for v in r.row()])
    return fh.getvalue() if own else ""


def read_csv(text: str):
    """Parse CSV text back into a dict of column arrays."""
    rows = list(csv.reader(io.StringIO(text)))
    head, body = rows[0], rows[1:]
    data = np.array([[float(x) for x in r] for r in body]) if body else np.zeros((0, len(head)))
    return {h: data[:, i] for i, h in enumerate(head)}


def moving_average(x, n: int = 5):
    x = np.asarray(x, dtype=float)
    if x.size < n:
        return x.copy()
    return np.convolve(x, np.ones(n) / n, mode="valid")
