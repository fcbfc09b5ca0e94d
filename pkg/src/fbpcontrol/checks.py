"""Invariant suite: cheap runtime checks of the discrete identities and solvers."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from fbpcontrol.assembly import assemble_B_Omega
from fbpcontrol.control import (
    ControlConfig,
    ProblemData,
    _inner,
    check_variational_inequality,
    evaluate,
    hessian_min_eig,
    optimize,
    random_admissible,
    reduced_cost,
)
from fbpcontrol.experiments import dirichlet_data, sine_target
from fbpcontrol.geometry import eval_A
from fbpcontrol.mesh import build_bulk_mesh
from fbpcontrol.state import Discretization, JacobianFactorization, jacobian, solve_newton, solve_picard

# local stiffness of the bilinear element on a square, nodes counter-clockwise
Q1_LAPLACE = np.array(
    [
        [4.0, -1.0, -2.0, -1.0],
        [-1.0, 4.0, -1.0, -2.0],
        [-2.0, -1.0, 4.0, -1.0],
        [-1.0, -2.0, -1.0, 4.0],
    ]
) / 6.0


@dataclass
class CheckResult:
    name: str
    value: float
    tol: float
    ok: bool
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.ok else "FAIL"
        return f"{tag} {self.name}: {self.value:.3e} (tol {self.tol:.1e}) {self.detail}".rstrip()


def example_data(level: int, kappa: float = 1.0) -> ProblemData:
    disc = Discretization.at_level(level, dirichlet_data, kappa)
    return ProblemData(disc, sine_target(disc.trace.nodes))


def det_identity(points: int = 10) -> float:
    """Max ``|det A - 1|`` over a grid of gamma, gamma' and x2."""
    g = np.linspace(-0.9, 2.0, points)
    dg = np.linspace(-3.0, 3.0, points)
    x2 = np.linspace(0.0, 1.0, points)
    G, D, X = np.meshgrid(g, dg, x2, indexing="ij")
    A = eval_A(G, D, X)
    det = A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
    return float(np.abs(det - 1.0).max())


def laplace_local_matrix_error() -> float:
    mesh = build_bulk_mesh(0, n_base=1)
    K = assemble_B_Omega(mesh, np.zeros(2)).toarray()
    ccw = mesh.cells[0]
    K = K[np.ix_(ccw, ccw)]
    return float(np.abs(K - Q1_LAPLACE).max())


def transpose_duality(level: int = 2, seed: int = 0) -> float:
    """``|(J^-1 b, c) - (b, J^-T c)|`` relative, at a nonzero state."""
    rng = np.random.default_rng(seed)
    data = example_data(level)
    disc = data.disc
    state, _, _ = solve_newton(disc, 0.5 * rng.standard_normal(disc.n + 1))
    lu = JacobianFactorization(disc, state)
    b, c = rng.standard_normal((2, disc.size))
    x = lu.solve(b)
    y = lu.solve(c, transpose=True)
    # also against the assembled Jacobian
    Jm = jacobian(disc, state)
    res = np.abs(Jm @ x - b).max() / np.abs(b).max()
    return float(max(abs(x @ c - b @ y) / (abs(x @ c) + 1e-300), res))


def newton_vs_picard(level: int, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    data = example_data(level)
    disc = data.disc
    U = random_admissible(data, 0.9, 1, rng)[0]
    a, _, _ = solve_newton(disc, U)
    b, _ = solve_picard(disc, U)
    return float(max(np.abs(a.G - b.G).max(), np.abs(a.Y - b.Y).max()))


@dataclass
class GradientCheck:
    eps: np.ndarray
    rel_error: np.ndarray

    @property
    def best(self) -> float:
        return float(np.min(self.rel_error))

    @property
    def order(self) -> float:
        """Observed order from the two largest steps (truncation-dominated)."""
        e = self.rel_error
        return math.log(e[0] / e[1]) / math.log(self.eps[0] / self.eps[1])


def gradient_check(U, h, cfg: ControlConfig, data: ProblemData, eps=None) -> GradientCheck:
    """Compare ``(J'(U), h)_{L2}`` with central differences over a step sweep."""
    eps = np.logspace(-1, -6, 11) if eps is None else np.asarray(eps, float)
    exact = _inner(data, evaluate(U, cfg, data).gradient, h)
    errs = []
    for e in eps:
        fd = (reduced_cost(U + e * h, cfg, data) - reduced_cost(U - e * h, cfg, data)) / (2 * e)
        errs.append(abs(fd - exact) / max(abs(exact), 1e-300))
    return GradientCheck(eps, np.array(errs))


def run_checks(level: int = 3, seed: int = 0, lam: float = 1e-3) -> list[CheckResult]:
    out = []
    v = det_identity()
    out.append(CheckResult("det A = 1", v, 1e-12, v <= 1e-12))
    v = laplace_local_matrix_error()
    out.append(CheckResult("B_Omega(0) local matrix", v, 1e-14, v <= 1e-14))
    v = transpose_duality(min(level, 3), seed)
    out.append(CheckResult("transpose duality", v, 1e-10, v <= 1e-10))
    for lv in range(1, min(level, 3) + 1):
        v = newton_vs_picard(lv, seed)
        out.append(CheckResult(f"Newton vs Picard level {lv}", v, 1e-10, v <= 1e-10))

    rng = np.random.default_rng(seed)
    data = example_data(level)
    cfg = ControlConfig(lam=lam, radius=0.9, level=level)
    worst = 0.0
    for U in random_admissible(data, 0.9, 3, rng):
        h = rng.standard_normal(len(U))
        worst = max(worst, gradient_check(U, h, cfg, data).best)
    out.append(CheckResult("gradient vs central differences", worst, 1e-6, worst <= 1e-6))

    res = optimize(cfg, data)
    out.append(CheckResult("gradient map norm", res.grad_map_norm, 1e-9, res.grad_map_norm <= 1e-9))
    vi = check_variational_inequality(res, random_admissible(data, 0.9, 100, rng), cfg, data)
    out.append(CheckResult("VI pairing (min, negated)", -vi.min_pairing, 1e-8, vi.ok))
    hcfg = ControlConfig(lam=1.0, radius=0.9, level=level)
    hres = optimize(hcfg, data)
    sig = hessian_min_eig(hres.U, hcfg, data).min_eig
    ok = sig > 0 and 1 / 3 <= sig <= 3
    out.append(CheckResult("Hessian min eigenvalue (lambda=1)", sig, 3.0, ok, "expect within factor 3 of 1"))
    return out
