"""Discrete state equations for the coupled profile/bulk system.

Unknowns are the interior trace values of ``G`` and the interior bulk values
of ``Y``. For every interior trace hat ``Xi`` and interior bulk hat ``Z``::

    kappa (G', Xi') + B_Omega[Y + v, Z + E_h Xi; A[G]] = (U, Xi)

where ``E_h Xi`` is the nodal interpolant of ``Xi(x1) * x2``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from fbpcontrol.assembly import (
    assemble_B_Gamma,
    assemble_B_Omega,
    assemble_coupling_blocks,
    assemble_mass_1d,
    lift_matrix,
    stiffness_1d,
)
from fbpcontrol.geometry import DegenerateGeometryError
from fbpcontrol.linsolve import Factorization
from fbpcontrol.mesh import BulkMesh, TraceMesh, build_bulk_mesh, build_trace_mesh

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    """Nonlinear iteration failed; carries the last iterate and history."""

    def __init__(self, message, state=None, history=None):
        super().__init__(message)
        self.state = state
        self.history = history or []


@dataclass
class StatePair:
    G: np.ndarray
    Y: np.ndarray

    def copy(self) -> "StatePair":
        return StatePair(self.G.copy(), self.Y.copy())


class Discretization:
    """Mesh pair, data ``v`` and the state-independent matrices."""

    def __init__(self, mesh: BulkMesh, v: np.ndarray, kappa: float = 1.0):
        self.mesh = mesh
        self.trace: TraceMesh = build_trace_mesh(mesh)
        self.kappa = float(kappa)
        self.v = np.asarray(v, dtype=float)
        if self.v.shape != (mesh.n_nodes,):
            raise ValueError("data v must be a nodal bulk field")
        self.K1 = stiffness_1d(self.trace)
        self.BG = assemble_B_Gamma(self.trace, self.kappa)
        self.M = assemble_mass_1d(self.trace)
        self.E = lift_matrix(mesh)
        self.it = np.arange(1, mesh.n)  # interior trace nodes
        self.ib = mesh.interior
        self.nt = len(self.it)
        self.nb = len(self.ib)
        self.ET = self.E.T.tocsr()
        self.it_bulk = mesh.gamma_nodes[self.it]
        # lift restricted to interior bulk rows; relates the two test bases
        self.E_int = self.E[self.ib][:, self.it].tocsr()

    @classmethod
    def at_level(cls, level: int, v_func, kappa: float = 1.0, n_base: int = 2):
        mesh = build_bulk_mesh(level, n_base)
        x1, x2 = mesh.coords.T
        return cls(mesh, v_func(x1, x2), kappa)

    @property
    def n(self) -> int:
        return self.mesh.n

    @property
    def size(self) -> int:
        return self.nt + self.nb

    def zero_state(self) -> StatePair:
        return StatePair(np.zeros(self.n + 1), np.zeros(self.mesh.n_nodes))

    def pack(self, state: StatePair) -> np.ndarray:
        return np.concatenate([state.G[self.it], state.Y[self.ib]])

    def unpack(self, x: np.ndarray) -> StatePair:
        G = np.zeros(self.n + 1)
        Y = np.zeros(self.mesh.n_nodes)
        G[self.it] = x[: self.nt]
        Y[self.ib] = x[self.nt :]
        return StatePair(G, Y)

    def split(self, x: np.ndarray):
        """Unknown vector -> (trace part, bulk part), both embedded in full length."""
        st = self.unpack(x)
        return st.G, st.Y


def residual(disc: Discretization, state: StatePair, U: np.ndarray) -> np.ndarray:
    """Stacked residual over interior trace and interior bulk test functions."""
    W = state.Y + disc.v
    K = assemble_B_Omega(disc.mesh, state.G)
    rb = K @ W
    rt = disc.BG @ state.G + disc.ET @ rb - disc.M @ np.asarray(U, float)
    return np.concatenate([rt[disc.it], rb[disc.ib]])


def jacobian(disc: Discretization, state: StatePair) -> sp.csc_matrix:
    """Derivative of :func:`residual` with respect to the packed unknowns."""
    W = state.Y + disc.v
    K = assemble_B_Omega(disc.mesh, state.G)
    C1, C2 = assemble_coupling_blocks(disc.mesh, state.G, W)
    C = (C1 + C2).tocsr()
    it, ib = disc.it, disc.ib
    Jtt = disc.BG[it][:, it] + (disc.ET @ C)[it][:, it]
    Jtb = (disc.ET @ K)[it][:, ib]
    Jbt = C[ib][:, it]
    Jbb = K[ib][:, ib]
    return sp.bmat([[Jtt, Jtb], [Jbt, Jbb]], format="csc")


def local_jacobian(disc: Discretization, state: StatePair) -> sp.csc_matrix:
    """Jacobian tested with nodal hats on Gamma instead of lifted trace hats.

    ``jacobian(...) == T @ local_jacobian(...)`` with the unit block
    triangular ``T = [[I, E_int^T], [0, I]]``. The local form keeps the
    stencil sparsity, so it is the one handed to the LU factorization.
    """
    W = state.Y + disc.v
    K = assemble_B_Omega(disc.mesh, state.G)
    C1, C2 = assemble_coupling_blocks(disc.mesh, state.G, W)
    C = (C1 + C2).tocsr()
    it, ib, gt = disc.it, disc.ib, disc.it_bulk
    Ltt = disc.BG[it][:, it] + C[gt][:, it]
    Ltb = K[gt][:, ib]
    Lbt = C[ib][:, it]
    Lbb = K[ib][:, ib]
    return sp.bmat([[Ltt, Ltb], [Lbt, Lbb]], format="csc")


class JacobianFactorization:
    """Solves with the state Jacobian through the LU of its local form."""

    supports_transpose = True

    def __init__(self, disc: Discretization, state: StatePair):
        self.disc = disc
        self.lu = Factorization(local_jacobian(disc, state))
        self.shape = self.lu.shape

    def solve(self, rhs, transpose: bool = False) -> np.ndarray:
        d = self.disc
        b = np.array(rhs, dtype=float)
        if b.shape[0] != self.shape[0]:
            raise ValueError(f"dimension mismatch: rhs has {b.shape[0]} rows, matrix {self.shape[0]}")
        nt = d.nt
        if not transpose:
            b[:nt] -= d.E_int.T @ b[nt:]
            return self.lu.solve(b)
        y = self.lu.solve(b, transpose=True)
        y[nt:] -= d.E_int @ y[:nt]
        return y


@dataclass
class SolveReport:
    iterations: int = 0
    converged: bool = False
    residual_history: list = field(default_factory=list)
    step_history: list = field(default_factory=list)
    damping: list = field(default_factory=list)
    max_slope: float = float("nan")
    #: observed constant C in |d_{k+1}| <= C |d_k|^2 over the last two steps
    quadratic_constant: float = float("nan")


@dataclass
class NewtonConfig:
    tol: float = 1e-11
    max_iter: int = 50
    lambda_min: float = 1.0 / 64.0
    radius: float = float("inf")


def _max_slope(disc: Discretization, G: np.ndarray) -> float:
    return float(np.max(np.abs(np.diff(G)))) * disc.n


def _warn_radius(disc, U, radius):
    if np.isfinite(radius):
        norm = float(np.sqrt(U @ (disc.M @ U)))
        if norm > radius * (1 + 1e-12):
            log.warning("control norm %.4g exceeds admissible radius %.4g", norm, radius)


def solve_newton(
    disc: Discretization,
    U: np.ndarray,
    cfg: NewtonConfig | None = None,
    initial: StatePair | None = None,
):
    """Damped Newton iteration for the state equations.

    Returns ``(state, report, factorization)``; the factorization is of the
    Jacobian at the returned state so that the adjoint can reuse it.
    """
    cfg = cfg or NewtonConfig()
    U = np.asarray(U, float)
    _warn_radius(disc, U, cfg.radius)
    state = (initial or disc.zero_state()).copy()
    x = disc.pack(state)
    rep = SolveReport()
    lam = 1.0
    try:
        F = residual(disc, state, U)
    except DegenerateGeometryError as exc:
        raise ConvergenceError(str(exc), state, []) from exc
    for k in range(cfg.max_iter + 1):
        rnorm = float(np.max(np.abs(F))) if F.size else 0.0
        rep.residual_history.append(rnorm)
        if rnorm <= cfg.tol:
            rep.converged = True
            break
        if k == cfg.max_iter:
            break
        lu = JacobianFactorization(disc, state)
        dx = -lu.solve(F)
        dnorm = float(np.linalg.norm(dx))
        rep.step_history.append(dnorm)
        lam = min(1.0, 2.0 * lam)
        while True:
            trial = disc.unpack(x + lam * dx)
            try:
                F_trial = residual(disc, trial, U)
                # natural monotonicity: simplified Newton correction must shrink
                dbar = lu.solve(-F_trial)
                ok = np.linalg.norm(dbar) <= (1.0 - lam / 4.0) * dnorm or dnorm < 1e-12
            except DegenerateGeometryError:
                ok = False
            if ok or lam <= cfg.lambda_min:
                break
            lam *= 0.5
        if not ok:
            raise ConvergenceError(
                f"damping factor fell below {cfg.lambda_min} at iteration {k}",
                state,
                rep.residual_history,
            )
        rep.damping.append(lam)
        x = x + lam * dx
        state = trial
        F = F_trial
    rep.iterations = len(rep.step_history)
    if not rep.converged:
        raise ConvergenceError(
            f"Newton did not converge in {cfg.max_iter} iterations "
            f"(residual {rep.residual_history[-1]:.3e})",
            state,
            rep.residual_history,
        )
    s = rep.step_history
    if len(s) >= 2 and s[-2] > 0:
        rep.quadratic_constant = s[-1] / s[-2] ** 2
    rep.max_slope = _max_slope(disc, state.G)
    if rep.max_slope > 1.0:
        log.debug("state constraint violated: max |G'| = %.4f", rep.max_slope)
    lu = JacobianFactorization(disc, state)
    if rep.residual_history[-1] > 0:
        # one extra correction with the factorization kept for the adjoint
        # removes the tolerance-level error left by a warm start
        state = disc.unpack(x - lu.solve(F))
        rep.residual_history.append(float(np.max(np.abs(residual(disc, state, U)))))
    return state, rep, lu


@dataclass
class PicardConfig:
    tol: float = 1e-13
    max_iter: int = 500


def solve_picard(
    disc: Discretization,
    U: np.ndarray,
    cfg: PicardConfig | None = None,
    initial: StatePair | None = None,
):
    """Fixed-point iteration: trace solve with frozen bulk, then bulk solve.

    Returns ``(state, report)``. ``report.step_history`` holds the max-norm of
    successive differences, whose ratios estimate the contraction factor.
    """
    cfg = cfg or PicardConfig()
    U = np.asarray(U, float)
    it, ib = disc.it, disc.ib
    trace_lu = Factorization(disc.BG[it][:, it])
    MU = disc.M @ U
    state = (initial or disc.zero_state()).copy()
    rep = SolveReport()
    for k in range(cfg.max_iter):
        K = assemble_B_Omega(disc.mesh, state.G)
        coupling = disc.ET @ (K @ (state.Y + disc.v))
        G = np.zeros_like(state.G)
        G[it] = trace_lu.solve((MU - coupling)[it])
        try:
            K = assemble_B_Omega(disc.mesh, G)
        except DegenerateGeometryError as exc:
            raise ConvergenceError(str(exc), state, rep.step_history) from exc
        Y = np.zeros_like(state.Y)
        Y[ib] = Factorization(K[ib][:, ib]).solve(-(K @ disc.v)[ib])
        diff = max(np.abs(G - state.G).max(), np.abs(Y - state.Y).max())
        rep.step_history.append(float(diff))
        state = StatePair(G, Y)
        if diff <= cfg.tol:
            rep.converged = True
            break
        if not np.isfinite(diff) or (k > 20 and diff > 10 * rep.step_history[0]):
            break
    rep.iterations = len(rep.step_history)
    if not rep.converged:
        raise ConvergenceError(
            f"fixed-point iteration did not converge in {rep.iterations} iterations "
            f"(last difference {rep.step_history[-1]:.3e})",
            state,
            rep.step_history,
        )
    rep.residual_history.append(float(np.max(np.abs(residual(disc, state, U)))) if disc.size else 0.0)
    rep.max_slope = _max_slope(disc, state.G)
    return state, rep
