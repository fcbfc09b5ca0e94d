"""Uniform quadrilateral meshes of the unit square and of its top edge.

Nodes are numbered lexicographically by (x2, x1), so node ``(i, j)`` with
``x1 = i*h`` and ``x2 = j*h`` has index ``j*(n+1) + i``. The top row (the
free boundary Gamma) is therefore the last contiguous block of ``n+1`` nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

INTERIOR = 0
SIGMA = 1
GAMMA = 2


@dataclass(frozen=True)
class BulkMesh:
    """Tensor-product Q1 mesh of (0,1)^2 with ``n`` cells per side."""

    n: int
    coords: np.ndarray = field(repr=False)
    cells: np.ndarray = field(repr=False)
    markers: np.ndarray = field(repr=False)

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def n_nodes(self) -> int:
        return (self.n + 1) ** 2

    @property
    def n_cells(self) -> int:
        return self.n * self.n

    @cached_property
    def interior(self) -> np.ndarray:
        """Indices of nodes not on the boundary, in increasing order."""
        return np.flatnonzero(self.markers == INTERIOR)

    @cached_property
    def gamma_nodes(self) -> np.ndarray:
        """Bulk indices of the top-row nodes ordered by x1."""
        return np.arange(self.n * (self.n + 1), (self.n + 1) ** 2)

    def node(self, i: int, j: int) -> int:
        return j * (self.n + 1) + i


@dataclass(frozen=True)
class TraceMesh:
    """Partition of [0, 1] matching the top row of a :class:`BulkMesh`."""

    nodes: np.ndarray = field(repr=False)
    parent: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.nodes) - 1

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)


def build_bulk_mesh(levels: int, n_base: int = 2) -> BulkMesh:
    """Mesh of the unit square after ``levels`` uniform refinements of an
    ``n_base x n_base`` grid."""
    if levels < 0 or n_base < 1:
        raise ValueError(f"invalid mesh request: levels={levels}, n_base={n_base}")
    n = n_base * 2**levels
    t = np.linspace(0.0, 1.0, n + 1)
    x1, x2 = np.meshgrid(t, t, indexing="xy")
    coords = np.column_stack([x1.ravel(), x2.ravel()])

    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    base = (jj * (n + 1) + ii).ravel()
    # counter-clockwise: (i,j), (i+1,j), (i+1,j+1), (i,j+1)
    cells = np.column_stack([base, base + 1, base + n + 2, base + n + 1])

    markers = np.full((n + 1) ** 2, INTERIOR, dtype=np.int8)
    iidx, jidx = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="xy")
    iidx, jidx = iidx.ravel(), jidx.ravel()
    markers[(jidx == 0) | (iidx == 0) | (iidx == n)] = SIGMA
    markers[jidx == n] = GAMMA

    for arr in (coords, cells, markers):
        arr.setflags(write=False)
    return BulkMesh(n=n, coords=coords, cells=cells, markers=markers)


def build_trace_mesh(mesh: BulkMesh) -> TraceMesh:
    parent = mesh.gamma_nodes.copy()
    nodes = mesh.coords[parent, 0].copy()
    nodes.setflags(write=False)
    parent.setflags(write=False)
    return TraceMesh(nodes=nodes, parent=parent)


def _prolong_1d(values: np.ndarray) -> np.ndarray:
    fine = np.empty(2 * len(values) - 1, dtype=float)
    fine[::2] = values
    fine[1::2] = 0.5 * (values[:-1] + values[1:])
    return fine


def prolong(coarse: BulkMesh | TraceMesh, values: np.ndarray) -> np.ndarray:
    """Nodal values of the (bi)linear interpolant on the once-refined mesh."""
    values = np.asarray(values, dtype=float)
    if isinstance(coarse, TraceMesh):
        if values.shape != (coarse.n_nodes,):
            raise ValueError(
                f"dimension mismatch: trace field of length {values.shape} on mesh with {coarse.n_nodes} nodes"
            )
        return _prolong_1d(values)
    if values.shape != (coarse.n_nodes,):
        raise ValueError(
            f"dimension mismatch: bulk field of length {values.shape} on mesh with {coarse.n_nodes} nodes"
        )
    m = coarse.n + 1
    grid = values.reshape(m, m)  # rows are x2, columns x1
    rows = np.array([_prolong_1d(r) for r in grid])
    fine = np.array([_prolong_1d(c) for c in rows.T]).T
    return fine.ravel()


def prolong_to(coarse: BulkMesh | TraceMesh, values: np.ndarray, n_fine: int) -> np.ndarray:
    """Repeated :func:`prolong` from ``coarse`` up to ``n_fine`` cells per side."""
    n = coarse.n
    if n_fine < n or n_fine % n or (n_fine // n) & (n_fine // n - 1):
        raise ValueError(f"meshes are not nested: n={n} -> n={n_fine}")
    out = np.asarray(values, dtype=float)
    while n < n_fine:
        out = prolong(_shape_only(coarse, n), out)
        n *= 2
    return out


def _shape_only(like: BulkMesh | TraceMesh, n: int) -> BulkMesh | TraceMesh:
    # prolong() only needs sizes, so a light stand-in avoids rebuilding coordinates
    if isinstance(like, TraceMesh):
        return TraceMesh(nodes=np.linspace(0.0, 1.0, n + 1), parent=np.arange(n + 1))
    return BulkMesh(n=n, coords=np.empty((0, 2)), cells=np.empty((0, 4), int), markers=np.empty(0))
