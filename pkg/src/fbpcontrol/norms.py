"""Discrete norms, errors against a fine reference and rate slopes."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from fbpcontrol.assembly import CellGeometry, QW, assemble_mass_1d
from fbpcontrol.mesh import BulkMesh, TraceMesh, build_bulk_mesh, prolong_to

P_DEFAULT = 2.1


def _uniform_trace(n: int) -> TraceMesh:
    return TraceMesh(nodes=np.linspace(0.0, 1.0, n + 1), parent=np.arange(n + 1))


def norm_trace(values: np.ndarray, kind: str = "L2", trace: TraceMesh | None = None) -> float:
    """Norms of a P1 function on [0, 1].

    ``W1inf`` and ``W11`` are the derivative seminorms ``|f'|_{L^inf}`` and
    ``|f'|_{L^1}``, which are the norms on the zero-trace space.
    """
    f = np.asarray(values, float)
    trace = trace or _uniform_trace(len(f) - 1)
    h = np.diff(trace.nodes)
    if kind == "L2":
        return math.sqrt(max(float(f @ (assemble_mass_1d(trace) @ f)), 0.0))
    if kind == "L1":
        a, b = f[:-1], f[1:]
        same = a * b >= 0
        out = np.where(same, 0.5 * h * np.abs(a + b), 0.0)
        # linear piece crossing zero: two triangles
        with np.errstate(divide="ignore", invalid="ignore"):
            cross = 0.5 * h * (a * a + b * b) / (np.abs(a) + np.abs(b))
        out = np.where(same, out, cross)
        return float(out.sum())
    slope = np.abs(np.diff(f)) / h
    if kind == "W1inf":
        return float(slope.max()) if len(slope) else 0.0
    if kind == "W11":
        return float(np.sum(slope * h))
    raise ValueError(f"unknown trace norm {kind!r}")


def norm_bulk(values: np.ndarray, kind: str = "L2", p: float = P_DEFAULT, mesh: BulkMesh | None = None) -> float:
    """``L2`` norm or ``W1p`` seminorm ``(int |grad f|^p)^(1/p)`` by 2x2 Gauss quadrature."""
    f = np.asarray(values, float)
    if mesh is None:
        mesh = build_bulk_mesh(0, int(round(math.sqrt(len(f)))) - 1)
    geo = CellGeometry.of(mesh)
    area = geo.h**2
    if kind == "L2":
        return math.sqrt(float(np.sum(geo.values(f) ** 2 * QW) * area))
    if kind == "W1p":
        if not 1 < p < math.inf:
            raise ValueError("p must lie in (1, inf)")
        mag = np.linalg.norm(geo.gradients(f), axis=-1)
        return float(np.sum(mag**p * QW) * area) ** (1.0 / p)
    raise ValueError(f"unknown bulk norm {kind!r}")


@dataclass
class SolutionBundle:
    """Optimal triple plus adjoint on one mesh level, as full nodal vectors."""

    level: int
    n: int
    U: np.ndarray
    G: np.ndarray
    Y: np.ndarray
    S: np.ndarray
    R: np.ndarray
    cost: float = float("nan")
    control_norm: float = float("nan")


ERROR_KEYS = ("e_gamma_W1inf", "e_y_W1p", "e_s_W11", "e_r_W1q", "e_u_L2")


def error_vs_reference(coarse: SolutionBundle, ref: SolutionBundle, p: float = P_DEFAULT) -> dict:
    """Errors of ``coarse`` measured on the reference mesh after prolongation."""
    if ref.n <= coarse.n:
        raise ValueError(f"reference (n={ref.n}) must be strictly finer than n={coarse.n}")
    q = p / (p - 1.0)
    tr_c = _uniform_trace(coarse.n)
    mesh_c = BulkMesh(n=coarse.n, coords=np.empty((0, 2)), cells=np.empty((0, 4), int), markers=np.empty(0))
    up_t = lambda f: prolong_to(tr_c, f, ref.n)  # noqa: E731
    up_b = lambda f: prolong_to(mesh_c, f, ref.n)  # noqa: E731
    fine = build_bulk_mesh(0, ref.n)
    return {
        "e_gamma_W1inf": norm_trace(up_t(coarse.G) - ref.G, "W1inf"),
        "e_y_W1p": norm_bulk(up_b(coarse.Y) - ref.Y, "W1p", p, fine),
        "e_s_W11": norm_trace(up_t(coarse.S) - ref.S, "W11"),
        "e_r_W1q": norm_bulk(up_b(coarse.R) - ref.R, "W1p", q, fine),
        "e_u_L2": norm_trace(up_t(coarse.U) - ref.U, "L2"),
    }


def slope(e_coarse: float, e_fine: float, h_coarse: float, h_fine: float) -> float:
    """Observed order between two levels; NaN when either error is not positive."""
    if not (e_coarse > 0 and e_fine > 0):
        return float("nan")
    return math.log(e_coarse / e_fine) / math.log(h_coarse / h_fine)


def fitted_slope(h, errors) -> float:
    """Least-squares slope of ``log e`` against ``log h``.

    Missing (NaN) entries from failed cells are skipped; NaN is returned when
    fewer than two remain or any remaining error is not positive.
    """
    h = np.asarray(h, float)
    e = np.asarray(errors, float)
    keep = np.isfinite(e) & np.isfinite(h)
    h, e = h[keep], e[keep]
    if len(h) < 2 or np.any(e <= 0):
        return float("nan")
    return float(np.polyfit(np.log(h), np.log(e), 1)[0])


COLUMNS = (
    "lam",
    "radius",
    "level",
    "h",
    "dofs",
    *ERROR_KEYS,
    "J",
    "norm_U",
    *(f"slope_{k[2:]}" for k in ERROR_KEYS),
)


@dataclass
class RateTable:
    rows: list = field(default_factory=list)

    def add(self, **row):
        self.rows.append({k: row.get(k, float("nan")) for k in COLUMNS})

    def groups(self):
        """Rows grouped by (lam, radius), each sorted by level."""
        out: dict = {}
        for r in self.rows:
            out.setdefault((r["lam"], r["radius"]), []).append(r)
        return {k: sorted(v, key=lambda r: r["level"]) for k, v in out.items()}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in COLUMNS])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "RateTable":
        rd = csv.reader(io.StringIO(text))
        header = next(rd)
        if tuple(header) != COLUMNS:
            raise ValueError(f"unexpected columns {header}")
        t = cls()
        for row in rd:
            vals = {}
            for c, s in zip(header, row):
                vals[c] = int(s) if c in ("level", "dofs") else float(s)
            t.rows.append(vals)
        return t

    def to_json(self) -> str:
        return json.dumps([{c: _jsonable(r[c]) for c in COLUMNS} for r in self.rows], indent=2)


def compute_slopes(table: RateTable) -> RateTable:
    """Fill the ``slope_*`` columns between consecutive levels of each group."""
    out = RateTable([dict(r) for r in table.rows])
    for rows in out.groups().values():
        rows[0].update({f"slope_{k[2:]}": float("nan") for k in ERROR_KEYS})
        for a, b in zip(rows[:-1], rows[1:]):
            for k in ERROR_KEYS:
                b[f"slope_{k[2:]}"] = slope(a[k], b[k], a["h"], b["h"])
    return out


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _jsonable(x):
    if isinstance(x, (int, np.integer)):
        return int(x)
    x = float(x)
    return x if math.isfinite(x) else str(x)
