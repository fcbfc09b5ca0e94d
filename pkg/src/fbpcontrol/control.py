"""Reduced cost, adjoint gradient and the projected-gradient optimizer.

Controls live in the full P1 space on [0, 1] (end points included) and the
admissible set is the ball ``{U : U^T M U <= radius^2}`` for the 1D mass
matrix ``M``. Gradients are returned as L^2 Riesz representatives, i.e. the
nodal vector ``lam*U + S``; their coefficient form is ``M @ (lam*U + S)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla
from scipy.optimize import brentq

from fbpcontrol.adjoint import AdjointPair, adjoint_rhs, solve_adjoint
from fbpcontrol.assembly import CellGeometry, integrate_bulk
from fbpcontrol.geometry import DegenerateGeometryError
from fbpcontrol.state import (
    ConvergenceError,
    Discretization,
    NewtonConfig,
    SolveReport,
    StatePair,
    solve_newton,
)

log = logging.getLogger(__name__)


@dataclass
class ControlConfig:
    lam: float
    mu: float = 0.0
    kappa: float = 1.0
    radius: float = math.inf
    grad_tol: float = 1e-9
    max_opt_iter: int = 20000
    level: int | None = None
    newton_tol: float = 1e-11

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"Tikhonov weight must be positive, got {self.lam}")
        if self.mu < 0:
            raise ValueError("mu must be nonnegative")
        if not self.radius > 0:
            raise ValueError("radius must be positive")


@dataclass
class ProblemData:
    """Discretization plus targets. Remembers the last state for warm starts."""

    disc: Discretization
    gamma_d: np.ndarray
    y_d: np.ndarray | None = None
    _last: StatePair | None = field(default=None, repr=False)

    @property
    def M(self):
        return self.disc.M


def l2_norm(data: ProblemData, U: np.ndarray) -> float:
    return math.sqrt(max(float(U @ (data.M @ U)), 0.0))


def _inner(data: ProblemData, a: np.ndarray, b: np.ndarray) -> float:
    return float(a @ (data.M @ b))


def solve_state(U: np.ndarray, cfg: ControlConfig, data: ProblemData):
    ncfg = NewtonConfig(tol=cfg.newton_tol, radius=cfg.radius)
    try:
        out = solve_newton(data.disc, U, ncfg, initial=data._last)
    except ConvergenceError:
        if data._last is None:
            raise
        # a stale warm start can sit outside the Newton basin; retry from zero
        out = solve_newton(data.disc, U, ncfg)
    data._last = out[0]
    return out


def cost_at_state(U, state: StatePair, cfg: ControlConfig, data: ProblemData) -> float:
    dG = state.G - data.gamma_d
    J = 0.5 * float(dG @ (data.M @ dG)) + 0.5 * cfg.lam * float(U @ (data.M @ U))
    if cfg.mu:
        disc = data.disc
        geo = CellGeometry.of(disc.mesh)
        yd = 0.0 if data.y_d is None else data.y_d
        dYq = geo.values(state.Y + disc.v - yd)
        Gq, _ = geo.profile(state.G)
        J += 0.5 * cfg.mu * integrate_bulk(disc.mesh, dYq**2 * (1.0 + Gq))
    return J


def reduced_cost(U: np.ndarray, cfg: ControlConfig, data: ProblemData) -> float:
    U = np.asarray(U, float)
    state, _, _ = solve_state(U, cfg, data)
    return cost_at_state(U, state, cfg, data)


@dataclass
class Evaluation:
    U: np.ndarray
    cost: float
    gradient: np.ndarray  # Riesz representative lam*U + S
    state: StatePair
    adjoint: AdjointPair
    report: SolveReport
    factorization: object = field(default=None, repr=False)


def evaluate(U: np.ndarray, cfg: ControlConfig, data: ProblemData) -> Evaluation:
    """State solve, cost, adjoint solve and gradient in one pass."""
    U = np.asarray(U, float)
    state, rep, lu = solve_state(U, cfg, data)
    J = cost_at_state(U, state, cfg, data)
    rhs = adjoint_rhs(data.disc, state, data.gamma_d, data.y_d, cfg.mu)
    adj = solve_adjoint(data.disc, state, rhs, lu)
    return Evaluation(U, J, cfg.lam * U + adj.S, state, adj, rep, lu)


def reduced_gradient(U: np.ndarray, cfg: ControlConfig, data: ProblemData) -> np.ndarray:
    return evaluate(U, cfg, data).gradient


def project_ball(U: np.ndarray, radius: float, M) -> np.ndarray:
    """Metric projection onto ``{U : U^T M U <= radius^2}``."""
    U = np.asarray(U, float)
    if not radius > 0:
        raise ValueError("radius must be positive")
    if math.isinf(radius):
        return U.copy()
    norm = math.sqrt(max(float(U @ (M @ U)), 0.0))
    if norm <= radius:
        return U.copy()
    return U * (radius / norm)


@dataclass
class OptimizationTrace:
    cost: list = field(default_factory=list)
    grad_map_norm: list = field(default_factory=list)
    control_norm: list = field(default_factory=list)
    step: list = field(default_factory=list)
    newton_iterations: list = field(default_factory=list)
    line_search_evals: int = 0

    @property
    def iterations(self) -> int:
        return max(len(self.cost) - 1, 0)


@dataclass
class OptimizeResult:
    U: np.ndarray
    state: StatePair
    adjoint: AdjointPair
    trace: OptimizationTrace
    cost: float
    gradient: np.ndarray
    grad_map_norm: float
    control_norm: float


class OptimizationError(RuntimeError):
    def __init__(self, message, trace=None, last=None):
        super().__init__(message)
        self.trace = trace
        self.last = last


def gradient_map_norm(data: ProblemData, U, g, radius) -> float:
    return l2_norm(data, U - project_ball(U - g, radius, data.M))


def gauss_newton_hessian(ev: Evaluation, cfg: ControlConfig, data: ProblemData) -> np.ndarray:
    """``lam*M + dG^T M dG`` with ``dG`` the sensitivity of the profile to the control.

    Only the boundary tracking term is linearized; for ``mu > 0`` the bulk term
    is left out, which keeps the matrix positive definite but less sharp.
    """
    disc = data.disc
    M = data.M
    B = np.zeros((disc.size, disc.n + 1))
    B[: disc.nt] = M[disc.it].toarray()
    X = ev.factorization.solve(B)
    dG = np.zeros((disc.n + 1, disc.n + 1))
    dG[disc.it] = X[: disc.nt]
    return cfg.lam * M.toarray() + dG.T @ (M @ dG)


class _ScaledBall:
    """Projection onto the ``M``-ball measured in the metric of ``H``."""

    def __init__(self, H, M, radius):
        self.p, self.V = sla.eigh(0.5 * (H + H.T), M.toarray())
        if self.p[0] <= 0:
            raise np.linalg.LinAlgError("metric is not positive definite")
        self.M = M
        self.radius = radius

    def newton_point(self, U, g_coef):
        """Projection of ``U - H^{-1} g`` onto the ball, in the ``H`` metric."""
        uh = self.V.T @ (self.M @ U)
        zh = uh - (self.V.T @ g_coef) / self.p
        nz = float(np.linalg.norm(zh))
        if math.isinf(self.radius) or nz <= self.radius:
            return self.V @ zh
        p = self.p

        def excess(nu):
            return float(np.linalg.norm(p * zh / (p + nu))) - self.radius

        hi = p.max() * nz / self.radius
        nu = brentq(excess, 0.0, hi, xtol=1e-14 * hi, rtol=1e-15, maxiter=500)
        xh = p * zh / (p + nu)
        xh *= self.radius / np.linalg.norm(xh)  # land exactly on the sphere
        return self.V @ xh


def optimize(
    cfg: ControlConfig,
    data: ProblemData,
    U0: np.ndarray | None = None,
    metric: str = "gauss-newton",
    armijo: float = 1e-4,
    max_backtracks: int = 40,
    stall_window: int = 5,
    stall_step: float = 1e-6,
) -> OptimizeResult:
    """Projected gradient iteration with Armijo backtracking.

    ``metric="l2"`` is the plain method ``U+ = P(U - tau*g)`` with
    Barzilai-Borwein ``tau``. ``metric="gauss-newton"`` measures the step and
    the projection in the Gauss-Newton Hessian instead, which removes the
    ``1/lam`` conditioning for small Tikhonov weights. Either way the
    iteration stops once ``||U - P(U - g)||_{L2} <= cfg.grad_tol``. It gives
    up (``OptimizationError``) when ``stall_window`` consecutive accepted
    steps are shorter than ``stall_step``, which happens when the minimizer
    is pushed toward a collapsed domain.
    """
    if metric not in ("l2", "gauss-newton"):
        raise ValueError(f"unknown metric {metric!r}")
    M = data.M
    U = project_ball(np.zeros(data.disc.n + 1) if U0 is None else U0, cfg.radius, M)
    ev = evaluate(U, cfg, data)
    tr = OptimizationTrace()
    tau = 1.0
    scaled = None
    while True:
        gmn = gradient_map_norm(data, ev.U, ev.gradient, cfg.radius)
        tr.cost.append(ev.cost)
        tr.grad_map_norm.append(gmn)
        tr.control_norm.append(l2_norm(data, ev.U))
        tr.newton_iterations.append(ev.report.iterations)
        if gmn <= cfg.grad_tol:
            break
        if tr.iterations >= cfg.max_opt_iter:
            raise OptimizationError(
                f"no convergence in {cfg.max_opt_iter} iterations (gradient map {gmn:.3e})", tr, ev
            )
        if metric == "l2":
            d = project_ball(ev.U - tau * ev.gradient, cfg.radius, M) - ev.U
        else:
            # refresh the metric unless the last step contracted well
            if scaled is None or len(tr.grad_map_norm) < 2 or gmn > 0.1 * tr.grad_map_norm[-2]:
                scaled = _ScaledBall(gauss_newton_hessian(ev, cfg, data), M, cfg.radius)
            d = scaled.newton_point(ev.U, M @ ev.gradient) - ev.U
        slope = _inner(data, ev.gradient, d)
        if slope >= 0:
            raise OptimizationError(f"non-descent direction (gradient map {gmn:.3e})", tr, ev)
        t = 1.0
        for _ in range(max_backtracks):
            tr.line_search_evals += 1
            try:
                trial = evaluate(ev.U + t * d, cfg, data)
            except (ConvergenceError, DegenerateGeometryError):
                trial = None
            # allow roundoff in the comparison of two nearly equal costs
            noise = 8 * np.finfo(float).eps * abs(ev.cost)
            if trial is not None and trial.cost <= ev.cost + armijo * t * slope + noise:
                break
            t *= 0.5
        else:
            raise OptimizationError(f"line search failed (gradient map {gmn:.3e})", tr, ev)
        s = trial.U - ev.U
        y = trial.gradient - ev.gradient
        sy = _inner(data, s, y)
        ss = _inner(data, s, s)
        tau = min(max(ss / sy if sy > 0 else 10 * tau, 1e-12), 1e12)
        tr.step.append(t)
        if len(tr.step) >= stall_window and max(tr.step[-stall_window:]) < stall_step:
            raise OptimizationError(
                f"stagnated: {stall_window} steps below {stall_step:g} (gradient map {gmn:.3e})", tr, trial
            )
        ev = trial
    if ev.report.max_slope > 1.0:
        log.warning("optimal state violates |G'| < 1 (max %.4f)", ev.report.max_slope)
    return OptimizeResult(
        U=ev.U,
        state=ev.state,
        adjoint=ev.adjoint,
        trace=tr,
        cost=ev.cost,
        gradient=ev.gradient,
        grad_map_norm=tr.grad_map_norm[-1],
        control_norm=tr.control_norm[-1],
    )


@dataclass
class VIReport:
    pairings: np.ndarray
    min_pairing: float
    tol: float

    @property
    def ok(self) -> bool:
        return bool(self.min_pairing >= -self.tol)


def random_admissible(data: ProblemData, radius: float, count: int, rng) -> list:
    """Random P1 controls inside the ball (norm uniform in [0, radius])."""
    out = []
    n = data.disc.n + 1
    r = radius if math.isfinite(radius) else 1.0
    for _ in range(count):
        w = rng.standard_normal(n)
        w *= rng.uniform(0.0, r) / l2_norm(data, w)
        out.append(w)
    return out


def check_variational_inequality(
    result: OptimizeResult, samples, cfg: ControlConfig, data: ProblemData, tol: float = 1e-8
) -> VIReport:
    """Evaluate ``(lam*U + S, U_s - U)_{L2}`` for every admissible sample."""
    g = result.gradient
    vals = np.array([_inner(data, g, np.asarray(s, float) - result.U) for s in samples])
    return VIReport(vals, float(vals.min()) if len(vals) else 0.0, tol)


def fd_hessian(grad_coef, U: np.ndarray, eps: float) -> np.ndarray:
    """Dense Hessian from central differences of a coefficient-space gradient."""
    n = len(U)
    H = np.empty((n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = eps
        H[:, k] = (grad_coef(U + e) - grad_coef(U - e)) / (2 * eps)
    return H


@dataclass
class HessianReport:
    min_eig: float
    asymmetry: float
    noise_floor: float
    method: str


def hessian_min_eig(
    U: np.ndarray,
    cfg: ControlConfig,
    data: ProblemData,
    eps: float = 1e-4,
    grad_coef=None,
    dense_max: int = 129,
) -> HessianReport:
    """Smallest eigenvalue of the reduced Hessian in the L^2 metric.

    Solves ``H v = sigma M v`` where ``H`` is built from central differences of
    the coefficient gradient ``M @ (lam*U + S)``.
    """
    M = data.M
    if grad_coef is None:

        def grad_coef(W):
            return M @ reduced_gradient(W, cfg, data)

    U = np.asarray(U, float)
    n = len(U)
    if n <= dense_max:
        H = fd_hessian(grad_coef, U, eps)
        asym = np.linalg.norm(H - H.T) / max(np.linalg.norm(H), 1e-300)
        Hs = 0.5 * (H + H.T)
        sig = sla.eigh(Hs, M.toarray(), eigvals_only=True)
        smallest = float(sig[0])
        # compare against half the step along the worst direction
        noise = float(np.linalg.norm(fd_hessian(grad_coef, U, eps / 2)[:, :1] - H[:, :1]))
        method = "dense"
    else:
        g0 = grad_coef(U)

        def hv(x):
            x = np.ravel(x)
            return (grad_coef(U + eps * x) - grad_coef(U - eps * x)) / (2 * eps)

        Minv = spla.factorized(M.tocsc())
        op = spla.LinearOperator((n, n), matvec=hv, dtype=float)
        vals = spla.eigsh(op, k=1, M=M, Minv=spla.LinearOperator((n, n), matvec=Minv), which="SA",
                          return_eigenvectors=False, tol=1e-6)
        smallest = float(vals[0])
        asym = float("nan")
        noise = float(np.linalg.norm(g0)) * np.finfo(float).eps / eps
        method = "lanczos"
    if noise > 1e-3 * abs(smallest) * np.linalg.norm(M.diagonal()):
        log.warning("finite-difference noise %.2e may dominate eigenvalue %.2e", noise, smallest)
    return HessianReport(smallest, float(asym), noise, method)
