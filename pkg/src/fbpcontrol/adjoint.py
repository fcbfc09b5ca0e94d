"""Discrete adjoint of the state equations.

The adjoint matrix is the transpose of the state Jacobian, so the adjoint
pair comes out of a single transpose solve with the factorization Newton
already built at the converged state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fbpcontrol.assembly import CellGeometry, load_bulk, load_trace_from_bulk
from fbpcontrol.state import Discretization, JacobianFactorization, StatePair


@dataclass
class AdjointPair:
    S: np.ndarray
    R: np.ndarray  # full bulk field, R = R0 + E_h S
    R0: np.ndarray


def adjoint_rhs(
    disc: Discretization,
    state: StatePair,
    gamma_d: np.ndarray,
    y_d: np.ndarray | None = None,
    mu: float = 0.0,
) -> np.ndarray:
    """Partial derivative of the tracking terms with respect to the packed state.

    Trace rows: ``(G - gamma_d, Xi) + mu/2 int |dY|^2 Xi(x1) dx``.
    Bulk rows: ``mu int dY (1 + G) Z dx`` with ``dY = Y + v - y_d``.
    """
    dG = state.G - np.asarray(gamma_d, float)
    rt = disc.M @ dG
    rb = np.zeros(disc.mesh.n_nodes)
    if mu != 0.0:
        geo = CellGeometry.of(disc.mesh)
        yd = np.zeros(disc.mesh.n_nodes) if y_d is None else np.asarray(y_d, float)
        dYq = geo.values(state.Y + disc.v - yd)
        Gq, _ = geo.profile(state.G)
        rt = rt + 0.5 * mu * load_trace_from_bulk(disc.mesh, dYq**2)
        rb = mu * load_bulk(disc.mesh, dYq * (1.0 + Gq))
    return np.concatenate([rt[disc.it], rb[disc.ib]])


def solve_adjoint(
    disc: Discretization,
    state: StatePair,
    rhs: np.ndarray,
    factorization: JacobianFactorization | None = None,
) -> AdjointPair:
    """Solve ``J^T w = rhs`` and unpack ``w`` into ``(S, R0)``."""
    lu = factorization or JacobianFactorization(disc, state)
    w = lu.solve(rhs, transpose=True)
    S, R0 = disc.split(w)
    R = R0 + disc.E @ S
    return AdjointPair(S=S, R=R, R0=R0)
