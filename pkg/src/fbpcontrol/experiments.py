"""Experiment driver: lambda sweeps, nested refinement and reference errors."""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from fbpcontrol.control import (
    ControlConfig,
    OptimizationError,
    ProblemData,
    check_variational_inequality,
    hessian_min_eig,
    optimize,
    random_admissible,
)
from fbpcontrol.mesh import prolong
from fbpcontrol.norms import (
    ERROR_KEYS,
    RateTable,
    SolutionBundle,
    compute_slopes,
    error_vs_reference,
    fitted_slope,
)
from fbpcontrol.state import ConvergenceError, Discretization, StatePair

log = logging.getLogger(__name__)

SWEEP_LAMBDAS = (1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)


def sine_target(x1):
    x1 = np.asarray(x1, float)
    return (
        np.sin(2 * np.pi * x1) / (16 * np.pi)
        - np.sin(4 * np.pi * x1) / (16 * np.pi)
        + np.sin(6 * np.pi * x1) / (32 * np.pi)
    )


def inverted_hat(depth: float):
    def f(x1):
        x1 = np.asarray(x1, float)
        return -depth * (1.0 - np.abs(2.0 * x1 - 1.0))

    return f


def dirichlet_data(x1, x2):
    return x2 * (1.0 - x2) * (1.0 - 2.0 * x1)


def builtin_gamma_d(example: int, hat_depth: float = 0.5):
    """Target profile as a function of x1 for examples 1-3."""
    if example in (1, 2):
        return sine_target
    if example == 3:
        return inverted_hat(hat_depth)
    raise ValueError(f"unknown example id {example!r}")


def load_profile(path) -> callable:
    """Two-column (x1, value) text file, linearly interpolated."""
    xy = np.loadtxt(path, ndmin=2)
    order = np.argsort(xy[:, 0])
    xs, ys = xy[order, 0], xy[order, 1]
    return lambda x1: np.interp(x1, xs, ys)


@dataclass
class ExperimentSpec:
    example: int = 1
    gamma_d: str = "builtin"
    v: str = "builtin"
    kappa: float = 1.0
    lambdas: tuple = (1e-2, 1e-3, 1e-4)
    radius: float = 0.9
    levels: tuple = (1, 2, 3, 4)
    ref_level: int | None = None
    mu: float = 0.0
    out: str = "results"
    seed: int = 0
    n_base: int = 2
    hat_depth: float = 0.5
    hessian: bool = False
    snapshots: bool = True
    plots: bool = True
    workers: int = 1
    grad_tol: float = 1e-9
    max_opt_iter: int = 1000

    def __post_init__(self):
        self.lambdas = tuple(float(x) for x in self.lambdas)
        self.levels = tuple(sorted(int(x) for x in self.levels))
        if any(not lam > 0 for lam in self.lambdas):
            raise ValueError("lambda values must be positive")
        if self.ref_level is None and self.levels:
            # finest level + 3, but no more than 7 refinements
            self.ref_level = min(max(self.levels) + 3, 7)
        if self.levels and self.ref_level is not None and self.ref_level <= max(self.levels):
            raise ValueError("reference level must be finer than every experiment level")
        if self.example not in (1, 2, 3) and self.gamma_d == "builtin":
            raise ValueError("custom examples need a gamma_d file")

    def target(self):
        if self.gamma_d == "builtin":
            return builtin_gamma_d(self.example, self.hat_depth)
        return load_profile(self.gamma_d)

    def dirichlet(self):
        if self.v == "builtin":
            return dirichlet_data
        if self.v == "zero":
            return lambda x1, x2: np.zeros_like(x1)
        raise ValueError(f"unknown v descriptor {self.v!r} (builtin|zero)")


def example_spec(example: int, **overrides) -> ExperimentSpec:
    """Standard setups: example 1 is constrained to the 0.9 ball, 2 and 3 are not."""
    kw = dict(example=example, radius=0.9 if example == 1 else math.inf)
    kw.update(overrides)
    return ExperimentSpec(**kw)


# -- config files -----------------------------------------------------------

_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentSpec)}


def _parse_value(key: str, text: str):
    text = text.strip()
    kind = _FIELD_TYPES[key]
    if key in ("lambdas", "levels"):
        parts = [p for p in text.replace(",", " ").split() if p]
        return tuple(float(p) if key == "lambdas" else int(p) for p in parts)
    if key == "ref_level":
        return None if text.lower() in ("", "none", "auto") else int(text)
    if kind == "bool":
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {text!r}")
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)  # accepts "inf"
    return text


def parse_config(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment. Unknown keys are errors."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        out[key] = _parse_value(key, val)
    return out


def load_config(path) -> dict:
    return parse_config(Path(path).read_text())


# -- solving ----------------------------------------------------------------


@dataclass
class CellResult:
    lam: float
    radius: float
    level: int
    ok: bool
    error: str = ""
    bundle: SolutionBundle | None = None
    iterations: int = 0
    grad_map_norm: float = float("nan")
    vi_min: float = float("nan")
    hessian_min_eig: float = float("nan")
    max_slope: float = float("nan")
    # kept for snapshots and plots; never serialized
    data: ProblemData | None = field(default=None, repr=False)
    result: object = field(default=None, repr=False)


def problem_data(spec: ExperimentSpec, level: int) -> ProblemData:
    """Discretization at ``level`` with the target interpolated onto its trace."""
    disc = Discretization.at_level(level, spec.dirichlet(), spec.kappa, spec.n_base)
    return ProblemData(disc, spec.target()(disc.trace.nodes))


def solve_chain(spec: ExperimentSpec, lam: float, levels, rng=None, hessian_level=None) -> dict:
    """Optimize on each level in increasing order, prolonging the previous optimum."""
    rng = rng or np.random.default_rng(spec.seed)
    cfg = ControlConfig(lam=lam, mu=spec.mu, kappa=spec.kappa, radius=spec.radius,
                        grad_tol=spec.grad_tol, max_opt_iter=spec.max_opt_iter)
    out = {}
    prev = prev_disc = None
    for level in sorted(levels):
        data = problem_data(spec, level)
        cfg.level = level
        U0 = None
        if prev is not None and prev.ok and prev.bundle.n * 2 == data.disc.n:
            pb = prev.bundle
            U0 = prolong(prev_disc.trace, pb.U)
            data._last = StatePair(prolong(prev_disc.trace, pb.G), prolong(prev_disc.mesh, pb.Y))
        cell = CellResult(lam=lam, radius=spec.radius, level=level, ok=False)
        try:
            res = optimize(cfg, data, U0=U0)
        except (OptimizationError, ConvergenceError) as exc:
            cell.error = str(exc)
            log.error("lambda=%g level=%d failed: %s", lam, level, exc)
            out[level] = prev = cell
            continue
        d = data.disc
        cell.ok = True
        cell.bundle = SolutionBundle(
            level=level,
            n=d.n,
            U=res.U,
            G=res.state.G,
            Y=res.state.Y,
            S=res.adjoint.S,
            R=res.adjoint.R,
            cost=res.cost,
            control_norm=res.control_norm,
        )
        cell.iterations = res.trace.iterations
        cell.grad_map_norm = res.grad_map_norm
        cell.max_slope = float(np.max(np.abs(np.diff(res.state.G)))) * d.n
        samples = random_admissible(data, spec.radius, 100, rng)
        cell.vi_min = check_variational_inequality(res, samples, cfg, data).min_pairing
        if spec.hessian and level == hessian_level:
            cell.hessian_min_eig = hessian_min_eig(res.U, cfg, data).min_eig
        cell.data, cell.result = data, res
        out[level] = prev = cell
        prev_disc = d
    return out


def _run_lambda(args):
    spec, lam = args
    levels = set(spec.levels)
    if spec.ref_level is not None:
        levels |= set(range(min(spec.levels), spec.ref_level + 1))
    hess_level = max(spec.levels) if spec.levels else None
    rng = np.random.default_rng([spec.seed, int(round(-math.log10(lam) * 1000)) & 0xFFFF])
    cells = solve_chain(spec, lam, levels, rng, hessian_level=hess_level)
    return lam, cells


def run_experiment(spec: ExperimentSpec, write: bool = True):
    """Run every (lambda, level) cell and write tables, snapshots and plots.

    Returns ``(table, summary)``. Failed cells are recorded and skipped.
    """
    table = RateTable()
    summary = {"spec": _spec_dict(spec), "lambdas": []}
    if not spec.lambdas:
        if write:
            _write_outputs(spec, table, summary, {})
        return table, summary
    jobs = [(spec, lam) for lam in spec.lambdas]
    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers) as ex:
            results = list(ex.map(_run_lambda, jobs))
    else:
        results = [_run_lambda(j) for j in jobs]

    all_cells = {}
    for lam, cells in results:
        all_cells[lam] = cells
        ref = cells.get(spec.ref_level)
        entry = {"lam": lam, "radius": _jsonnum(spec.radius), "levels": []}
        for level in spec.levels:
            cell = cells[level]
            row = dict(lam=lam, radius=spec.radius, level=level)
            rec = {"level": level, "ok": cell.ok}
            if cell.ok:
                b = cell.bundle
                n = b.n
                row.update(h=1.0 / n, dofs=(n - 1) + (n - 1) ** 2, J=b.cost, norm_U=b.control_norm)
                if ref is not None and ref.ok:
                    row.update(error_vs_reference(b, ref.bundle))
                rec.update(
                    J=b.cost,
                    norm_U=b.control_norm,
                    iterations=cell.iterations,
                    grad_map_norm=cell.grad_map_norm,
                    vi_min=cell.vi_min,
                    max_slope_G=cell.max_slope,
                )
                if spec.hessian and not math.isnan(cell.hessian_min_eig):
                    rec["hessian_min_eig"] = cell.hessian_min_eig
            else:
                rec["error"] = cell.error
            table.add(**row)
            entry["levels"].append({k: _jsonnum(v) for k, v in rec.items()})
        if ref is not None:
            entry["reference"] = {
                "level": spec.ref_level,
                "ok": ref.ok,
                **({"J": ref.bundle.cost, "norm_U": ref.bundle.control_norm} if ref.ok else {"error": ref.error}),
            }
        summary["lambdas"].append(entry)
    table = compute_slopes(table)
    for entry, (key, rows) in zip(summary["lambdas"], table.groups().items()):
        h = [r["h"] for r in rows]
        entry["fitted_slopes"] = {k: _jsonnum(fitted_slope(h, [r[k] for r in rows])) for k in ERROR_KEYS}
    if write:
        _write_outputs(spec, table, summary, all_cells)
    return table, summary


def _spec_dict(spec: ExperimentSpec) -> dict:
    d = asdict(spec)
    # location and parallelism do not affect results; keep outputs relocatable
    del d["out"], d["workers"]
    d["lambdas"] = list(d["lambdas"])
    d["levels"] = list(d["levels"])
    return {k: _jsonnum(v) if isinstance(v, float) else v for k, v in d.items()}


def _jsonnum(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def _write_outputs(spec, table: RateTable, summary: dict, cells: dict):
    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "rate_table.csv").write_text(table.to_csv())
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for (lam, _radius), rows in table.groups().items():
        lines = ["# dofs " + " ".join(ERROR_KEYS)]
        for r in rows:
            lines.append(" ".join([str(r["dofs"])] + [repr(float(r[k])) for k in ERROR_KEYS]))
        (out / f"rates_lam{lam:.0e}.dat").write_text("\n".join(lines) + "\n")
    if spec.snapshots:
        for lam, by_level in cells.items():
            finest = max(spec.levels) if spec.levels else None
            cell = by_level.get(finest)
            if cell is None or not cell.ok:
                continue
            data, res = cell.data, cell.result
            tag = f"lam{lam:.0e}_level{finest}"
            emit_field_snapshot(data.disc, res.state.G, res.state.Y, out / f"state_{tag}")
            emit_field_snapshot(data.disc, res.adjoint.S, res.adjoint.R, out / f"adjoint_{tag}")
            np.savetxt(out / f"control_{tag}.txt", np.column_stack([data.disc.trace.nodes, res.U]), fmt="%.17g")
    if spec.plots and table.rows:
        from fbpcontrol import plotting

        plotting.rate_figure(table, out / "rates.png", title=f"Example {spec.example}")
        profiles = {}
        for lam, by_level in cells.items():
            cell = by_level.get(max(spec.levels))
            if cell is not None and cell.ok:
                profiles[lam] = (cell.data.disc.trace.nodes, cell.bundle.G, cell.bundle.U)
        if profiles:
            x = np.linspace(0, 1, 401)
            plotting.profile_figure(profiles, (x, spec.target()(x)), out / "profiles.png")


# -- snapshots --------------------------------------------------------------


def emit_field_snapshot(disc: Discretization, trace_values, bulk_values, path):
    """Write ``<path>_bulk.txt`` and ``<path>_trace.txt``.

    Bulk format: first line ``n``, then ``n+1`` rows of ``n+1`` nodal values
    (row ``j`` holds ``x2 = j/n``, columns ordered by ``x1``). Trace format:
    two columns ``x1 value``. Values are written with 17 significant digits.
    """
    path = Path(path)
    n = disc.n
    grid = np.asarray(bulk_values, float).reshape(n + 1, n + 1)
    with open(f"{path}_bulk.txt", "w") as fh:
        fh.write(f"{n}\n")
        np.savetxt(fh, grid, fmt="%.17g")
    np.savetxt(f"{path}_trace.txt", np.column_stack([disc.trace.nodes, trace_values]), fmt="%.17g")
    return Path(f"{path}_bulk.txt"), Path(f"{path}_trace.txt")


def read_field_snapshot(path):
    """Inverse of :func:`emit_field_snapshot`: returns ``(x1, trace, bulk)``."""
    path = Path(path)
    with open(f"{path}_bulk.txt") as fh:
        n = int(fh.readline())
        bulk = np.loadtxt(fh, ndmin=2).reshape(-1)
    if bulk.size != (n + 1) ** 2:
        raise ValueError(f"bulk payload has {bulk.size} values, expected {(n + 1) ** 2}")
    tr = np.loadtxt(f"{path}_trace.txt", ndmin=2)
    return tr[:, 0], tr[:, 1], bulk


def default_workers() -> int:
    return max(1, min(4, os.cpu_count() or 1))
