"""Assembly of the discrete bilinear forms.

Bulk integrals use the tensor 2x2 Gauss rule on every cell, trace integrals
the 2-point Gauss rule on every interval. Matrices are returned as
``scipy.sparse.csr_matrix`` over *all* nodes; Dirichlet rows and columns are
removed by the callers through index restriction.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from fbpcontrol.geometry import eval_A, eval_A1, eval_A2
from fbpcontrol.mesh import BulkMesh, TraceMesh

_g = 0.5 / np.sqrt(3.0)
GAUSS_1D = np.array([0.5 - _g, 0.5 + _g])
# quadrature points on the reference cell [0,1]^2, weight 1/4 each
QS = np.array([GAUSS_1D[0], GAUSS_1D[1], GAUSS_1D[0], GAUSS_1D[1]])
QT = np.array([GAUSS_1D[0], GAUSS_1D[0], GAUSS_1D[1], GAUSS_1D[1]])
QW = np.full(4, 0.25)


def _q1_basis(s, t):
    phi = np.stack([(1 - s) * (1 - t), s * (1 - t), s * t, (1 - s) * t], axis=-1)
    ds = np.stack([-(1 - t), (1 - t), t, -t], axis=-1)
    dt = np.stack([-(1 - s), -s, s, (1 - s)], axis=-1)
    return phi, np.stack([ds, dt], axis=-1)


#: PHI[q, a] and reference gradients DPHI[q, a, :] at the four Gauss points
PHI, DPHI = _q1_basis(QS, QT)


class CellGeometry:
    """Per-cell quadrature data of a :class:`BulkMesh` (cached by mesh size)."""

    _cache: dict[int, "CellGeometry"] = {}

    def __init__(self, mesh: BulkMesh):
        n = mesh.n
        self.n = n
        self.h = 1.0 / n
        ci, cj = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
        self.ci = ci.ravel()
        self.cj = cj.ravel()
        self.cells = mesh.cells
        # physical quadrature coordinates, shape (ncells, 4)
        self.x1 = (self.ci[:, None] + QS[None, :]) * self.h
        self.x2 = (self.cj[:, None] + QT[None, :]) * self.h
        self.rows = np.repeat(self.cells, 4, axis=1).ravel()
        self.cols = np.tile(self.cells, (1, 4)).ravel()
        # trace columns touched by each cell: left and right node of its column
        self.tcols = np.column_stack([self.ci, self.ci + 1])

    @classmethod
    def of(cls, mesh: BulkMesh) -> "CellGeometry":
        geo = cls._cache.get(mesh.n)
        if geo is None:
            geo = cls._cache[mesh.n] = cls(mesh)
        return geo

    def profile(self, G: np.ndarray):
        """Profile value and slope at every quadrature point."""
        G = np.asarray(G, float)
        gl, gr = G[self.ci], G[self.ci + 1]
        val = gl[:, None] * (1 - QS)[None, :] + gr[:, None] * QS[None, :]
        slope = np.broadcast_to(((gr - gl) / self.h)[:, None], val.shape)
        return val, slope

    def values(self, u: np.ndarray) -> np.ndarray:
        """Bulk field values at quadrature points, shape (ncells, 4)."""
        return np.asarray(u, float)[self.cells] @ PHI.T

    def gradients(self, u: np.ndarray) -> np.ndarray:
        """Physical gradients at quadrature points, shape (ncells, 4, 2)."""
        loc = np.asarray(u, float)[self.cells]
        return np.einsum("cb,qbi->cqi", loc, DPHI) / self.h

    def coefficient(self, G):
        val, slope = self.profile(G)
        return eval_A(val, slope, self.x2)


def stiffness_1d(trace: TraceMesh) -> sp.csr_matrix:
    """Matrix of ``int phi_i' phi_j'`` over [0, 1]."""
    n = trace.n
    h = np.diff(trace.nodes)
    i = np.arange(n)
    rows = np.concatenate([i, i, i + 1, i + 1])
    cols = np.concatenate([i, i + 1, i, i + 1])
    vals = np.concatenate([1 / h, -1 / h, -1 / h, 1 / h])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n + 1, n + 1))


def assemble_B_Gamma(trace: TraceMesh, kappa: float) -> sp.csr_matrix:
    if kappa <= 0:
        raise ValueError("surface tension coefficient must be positive")
    return (kappa * stiffness_1d(trace)).tocsr()


def assemble_mass_1d(trace: TraceMesh) -> sp.csr_matrix:
    n = trace.n
    h = np.diff(trace.nodes)
    i = np.arange(n)
    rows = np.concatenate([i, i, i + 1, i + 1])
    cols = np.concatenate([i, i + 1, i, i + 1])
    vals = np.concatenate([h / 3, h / 6, h / 6, h / 3])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n + 1, n + 1))


def assemble_B_Omega(mesh: BulkMesh, G: np.ndarray) -> sp.csr_matrix:
    """Stiffness matrix of ``int A[G] grad y . grad z``."""
    geo = CellGeometry.of(mesh)
    A = geo.coefficient(G)
    # h^2 from the cell area cancels the 1/h^2 of the two gradients
    loc = np.einsum("q,qai,cqij,qbj->cab", QW, DPHI, A, DPHI, optimize=True)
    N = mesh.n_nodes
    return sp.csr_matrix((loc.ravel(), (geo.rows, geo.cols)), shape=(N, N))


def assemble_coupling_blocks(mesh: BulkMesh, G: np.ndarray, W: np.ndarray):
    """Blocks ``C1, C2`` with ``C1[i, k] = int A1[G] Phi_k grad W . grad phi_i`` and
    ``C2[i, k] = int A2[G] Phi_k' grad W . grad phi_i``.

    Their sum is the derivative of ``B_Omega[W, phi_i; A[G]]`` with respect to
    the nodal value ``G_k``.
    """
    geo = CellGeometry.of(mesh)
    val, slope = geo.profile(G)
    A1 = eval_A1(val, slope, geo.x2)
    A2 = eval_A2(val, slope, geo.x2)
    gW = np.einsum("cb,qbi->cqi", np.asarray(W, float)[geo.cells], DPHI)  # reference gradient
    # t[c, q, a] = dphi_a . A_k grad W  (reference scaling, h's cancel)
    t1 = np.einsum("qai,cqij,cqj->cqa", DPHI, A1, gW, optimize=True)
    t2 = np.einsum("qai,cqij,cqj->cqa", DPHI, A2, gW, optimize=True)
    tphi = np.stack([1 - QS, QS], axis=-1)  # Phi_m at quad points, (q, m)
    tdphi = np.array([-1.0, 1.0]) / geo.h  # Phi_m'
    loc1 = np.einsum("q,cqa,qm->cam", QW, t1, tphi)
    loc2 = np.einsum("q,cqa,m->cam", QW, t2, tdphi)
    rows = np.repeat(geo.cells, 2, axis=1).ravel()
    cols = np.tile(geo.tcols, (1, 4)).ravel()
    shape = (mesh.n_nodes, mesh.n + 1)
    C1 = sp.csr_matrix((loc1.ravel(), (rows, cols)), shape=shape)
    C2 = sp.csr_matrix((loc2.ravel(), (rows, cols)), shape=shape)
    return C1, C2


def lift_matrix(mesh: BulkMesh) -> sp.csr_matrix:
    """Matrix of the discrete extension: trace values -> nodal values of ``xi(x1)*x2``."""
    n = mesh.n
    i, j = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="xy")
    rows = (j * (n + 1) + i).ravel()
    vals = (j * mesh.h).ravel()
    keep = vals != 0.0
    return sp.csr_matrix((vals[keep], (rows[keep], i.ravel()[keep])), shape=(mesh.n_nodes, n + 1))


def lift_boundary(xi: np.ndarray, mesh: BulkMesh) -> np.ndarray:
    xi = np.asarray(xi, float)
    if xi.shape != (mesh.n + 1,):
        raise ValueError(f"trace field has length {len(xi)}, expected {mesh.n + 1}")
    tol = 1e-14 * max(1.0, float(np.abs(xi).max()))
    if abs(xi[0]) > tol or abs(xi[-1]) > tol:
        raise ValueError("extension requires a field vanishing at both end points")
    return lift_matrix(mesh) @ xi


def load_bulk(mesh: BulkMesh, fq: np.ndarray) -> np.ndarray:
    """``int f phi_i`` for ``f`` given at quadrature points, shape (ncells, 4)."""
    geo = CellGeometry.of(mesh)
    loc = (fq * QW[None, :]) @ PHI * geo.h**2
    return np.bincount(geo.cells.ravel(), weights=loc.ravel(), minlength=mesh.n_nodes)


def load_trace_from_bulk(mesh: BulkMesh, fq: np.ndarray) -> np.ndarray:
    """``int_Omega f(x) Phi_k(x1) dx`` for ``f`` given at bulk quadrature points."""
    geo = CellGeometry.of(mesh)
    tphi = np.stack([1 - QS, QS], axis=-1)
    loc = (fq * QW[None, :]) @ tphi * geo.h**2
    return np.bincount(geo.tcols.ravel(), weights=loc.ravel(), minlength=mesh.n + 1)


def integrate_bulk(mesh: BulkMesh, fq: np.ndarray) -> float:
    geo = CellGeometry.of(mesh)
    return float(np.sum(fq * QW[None, :]) * geo.h**2)
