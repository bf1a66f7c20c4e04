"""Linear solvers for the coupled saddle-point system.

The surface unknowns (curvature and displacement) are few, so their block
is factorized densely and eliminated.  This leaves a velocity-pressure
system ``[[F, -B^T], [-B, 0]]`` where ``F`` is the momentum matrix plus a
low-rank surface tension term.  It is solved by preconditioned GMRES with
a block upper-triangular preconditioner; the pressure Schur complement is
approximated by the inverse-viscosity pressure mass plus a discrete
Laplacian with the inertia weight.  A sparse direct solve of the whole
system is available as a fallback and as a reference.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import SaddleSystem
from .errors import ArgumentError, SingularSystem, SolverError
from .spaces import p1_mass

log = logging.getLogger(__name__)

METHODS = ("schur", "direct")


@dataclass
class SolveInfo:
    method: str
    iterations: int
    residual: float


def _check_pressure_kernel(system: SaddleSystem):
    """Raise when constant pressures are not removed from the unknowns."""
    if system.pressure_pinned:
        return
    Q = system.Q
    one = np.zeros(system.B.shape[0])
    one[: Q.n_p1] = 1.0
    r = system.B.T @ one
    scale = max(abs(system.B).max(), 1e-300) * np.sqrt(system.B.shape[1])
    if np.linalg.norm(r) <= 1e-10 * scale:
        raise SingularSystem("constant pressures lie in the kernel; remove the mean before solving")


def _surface_block(system: SaddleSystem):
    dt = system.dt
    NV = system.NV.toarray() / dt
    SV = system.SV.toarray() / dt
    nk, nx = NV.shape[1], NV.shape[0]
    T = np.zeros((nk + nx, nk + nx))
    T[:nk, nk:] = NV.T
    T[nk:, :nk] = NV
    T[nk:, nk:] = SV
    return T


def solve_direct(system: SaddleSystem):
    K = system.matrix()
    rhs = system.rhs()
    try:
        lu = spla.splu(K, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SingularSystem(f"sparse factorization failed: {exc}") from exc
    sol = lu.solve(rhs)
    if not np.all(np.isfinite(sol)):
        raise SingularSystem("non-finite solution from the direct solver")
    res = np.linalg.norm(K @ sol - rhs) / max(np.linalg.norm(rhs), 1e-300)
    return sol, SolveInfo("direct", 1, float(res))


class _SchurOperator:
    """Velocity-pressure operator after elimination of the surface unknowns."""

    def __init__(self, system: SaddleSystem):
        self.system = system
        T = _surface_block(system)
        try:
            self.T_lu = sla.lu_factor(T, check_finite=True)
        except (ValueError, sla.LinAlgError) as exc:
            raise SingularSystem(f"surface block is singular: {exc}") from exc
        if np.min(np.abs(np.diag(self.T_lu[0]))) <= 1e-14 * np.max(np.abs(np.diag(self.T_lu[0]))):
            raise SingularSystem("surface block is singular")
        self.nk = system.NV.shape[1]
        nk = self.nk
        # G = (T^{-1})_{kk}: eliminating (k, x) adds CW (-G) CW^T to the velocity block
        E = np.zeros((T.shape[0], nk))
        E[:nk] = np.eye(nk)
        self.G = sla.lu_solve(self.T_lu, E)[:nk]
        self.CW = system.CW.tocsc()
        self.nu, self.np = system.A.shape[0], system.B.shape[0]

    def surface_solve(self, rk, rx):
        return sla.lu_solve(self.T_lu, np.concatenate([rk, rx]))

    def F_matvec(self, u):
        s = self.system
        return s.A @ u - self.CW @ (self.G @ (self.CW.T @ u))

    def matvec(self, z):
        u, p = z[: self.nu], z[self.nu :]
        s = self.system
        return np.concatenate([self.F_matvec(u) - s.B.T @ p, -(s.B @ u)])

    def F_sparse(self):
        """Assembled F; the surface term only couples dofs touched by the interface."""
        rows = np.unique(self.CW.nonzero()[0])
        CWr = self.CW[rows].toarray()
        dense = -(CWr @ self.G @ CWr.T)
        r, c = np.meshgrid(rows, rows, indexing="ij")
        low = sp.csr_matrix((dense.ravel(), (r.ravel(), c.ravel())), shape=self.system.A.shape)
        return (self.system.A + low).tocsc()


def _pressure_schur_inverse(system: SaddleSystem):
    """Approximate inverse of B F^{-1} B^T on the pressure unknowns."""
    Q = system.Q
    mesh = Q.mesh
    B = system.B.tocsr()
    keep = Q.free if system.pressure_pinned else np.arange(Q.dim)
    # viscous part: pressure mass with weight 1/eta
    eta = system.eta if system.eta is not None else np.ones(mesh.n_elements)
    Mp = p1_mass(mesh, 1.0 / eta)
    if Q.n_enrich:
        # enrichment rows keep the unweighted Gram entries
        full = Q.mass_matrix().tolil()
        full[: Q.n_p1, : Q.n_p1] = Mp
        Mp = full.tocsr()
    Mp = Mp[keep][:, keep].tocsc()
    visc = spla.splu(Mp)
    # inertial part: B D^{-1} B^T with the diagonal of the weighted velocity mass
    # (P2 row sums vanish at vertices, so lumping is not an option)
    solvers = [visc.solve]
    if system.mass_u is not None and system.mass_u.nnz:
        d = system.mass_u.diagonal()
        if np.all(d > 0):
            Lp = (B @ sp.diags(1.0 / d) @ B.T).tocsc()
            try:
                lp = spla.splu(Lp)
                solvers.append(lp.solve)
            except RuntimeError:
                log.debug("inertial Schur approximation is singular; using the viscous part only")

    def apply(r):
        out = solvers[0](r)
        for s in solvers[1:]:
            out = out + s(r)
        return out

    return apply


def solve_schur(system: SaddleSystem, tol: float = 1e-10, maxiter: int = 400, cache: dict | None = None):
    """Preconditioned GMRES on the velocity-pressure system.

    ``cache`` (a dict) keeps the preconditioner factorizations so that a
    sequence of nearby systems, such as the Picard iterates of one step,
    factorizes only once.
    """
    op = _SchurOperator(system)
    nu, npr = op.nu, op.np
    nk = op.nk
    s = system
    # right-hand side after elimination
    zk = np.zeros(nk)
    w = op.surface_solve(zk, s.f_x)  # T^{-1} [0; f_x]
    k_part = w[:nk]
    f_u = s.f_u + op.CW @ k_part
    rhs = np.concatenate([f_u, np.zeros(npr)])
    if cache is not None and "F_lu" in cache:
        F_lu, S_inv = cache["F_lu"], cache["S_inv"]
    else:
        try:
            F_lu = spla.splu(op.F_sparse(), permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SingularSystem(f"velocity block is singular: {exc}") from exc
        S_inv = _pressure_schur_inverse(system)
        if cache is not None:
            cache.update(F_lu=F_lu, S_inv=S_inv)

    def prec(z):
        ru, rp = z[:nu], z[nu:]
        p = -S_inv(rp)
        u = F_lu.solve(ru + s.B.T @ p)
        return np.concatenate([u, p])

    N = nu + npr
    K = spla.LinearOperator((N, N), matvec=op.matvec)
    M = spla.LinearOperator((N, N), matvec=prec)
    it = [0]

    def cb(_):
        it[0] += 1

    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        z = np.zeros(N)
    else:
        z, flag = spla.gmres(
            K, rhs, M=M, rtol=tol, atol=0.0, restart=min(200, N), maxiter=maxiter, callback=cb,
            callback_type="pr_norm",
        )
        res = np.linalg.norm(op.matvec(z) - rhs) / bnorm
        if flag != 0 or not np.isfinite(res) or res > 10 * tol:
            raise SolverError(f"GMRES did not converge (flag {flag}, residual {res:.2e})")
    u, p = z[:nu], z[nu:]
    kx = op.surface_solve(s.CW.T @ u, s.f_x)
    sol = np.concatenate([u, p, kx])
    full_res = np.linalg.norm(system.matrix() @ sol - system.rhs()) / max(np.linalg.norm(system.rhs()), 1e-300)
    return sol, SolveInfo("schur", it[0], float(full_res))


def solve_saddle(
    system: SaddleSystem, method: str = "schur", tol: float = 1e-10, fallback: bool = True, cache: dict | None = None
):
    """Solve the coupled system; returns (solution vector, SolveInfo).

    Raises SingularSystem when constant pressures were not removed, and
    falls back to the direct solver when the iterative solve breaks down.
    """
    if method not in METHODS:
        raise ArgumentError(f"unknown solver method {method!r}")
    _check_pressure_kernel(system)
    if method == "direct":
        return solve_direct(system)
    try:
        return solve_schur(system, tol=tol, cache=cache)
    except (SolverError, np.linalg.LinAlgError, RuntimeError) as exc:
        if isinstance(exc, SingularSystem) or not fallback:
            raise
        log.warning("iterative solve failed (%s); falling back to the direct solver", exc)
        return solve_direct(system)


class ReusedFactorization:
    """Sparse LU of one system, reused to solve nearby systems.

    Systems that differ from the factorized one only slightly (the Picard
    iterates of one step change nothing but the lumped normal blocks) are
    solved by GMRES preconditioned with this factorization.
    """

    def __init__(self, system: SaddleSystem):
        _check_pressure_kernel(system)
        self.system = system
        K = system.matrix()
        try:
            self.lu = spla.splu(K, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SingularSystem(f"sparse factorization failed: {exc}") from exc

    def solve(self, system: SaddleSystem | None = None, x0=None, tol: float = 1e-10, maxiter: int = 200):
        system = self.system if system is None else system
        rhs = system.rhs()
        if system is self.system:
            sol = self.lu.solve(rhs)
            if not np.all(np.isfinite(sol)):
                raise SingularSystem("non-finite solution from the direct solver")
            return sol, SolveInfo("direct", 1, 0.0)
        K = system.matrix()
        M = spla.LinearOperator(K.shape, matvec=self.lu.solve)
        it = [0]

        def cb(_):
            it[0] += 1

        bnorm = np.linalg.norm(rhs)
        if bnorm == 0.0:
            return np.zeros(K.shape[0]), SolveInfo("reused", 0, 0.0)
        sol, flag = spla.gmres(
            K, rhs, x0=x0, M=M, rtol=tol, atol=0.0, restart=50, maxiter=maxiter, callback=cb,
            callback_type="pr_norm",
        )
        res = np.linalg.norm(K @ sol - rhs) / bnorm
        if flag != 0 or not np.isfinite(res) or res > 10 * tol:
            log.warning("preconditioned solve failed (flag %d, residual %.2e); solving directly", flag, res)
            sol, info = solve_direct(system)
            return sol, SolveInfo("direct", it[0] + 1, info.residual)
        return sol, SolveInfo("reused", it[0], float(res))
