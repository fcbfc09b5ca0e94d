"""Command-line entry point: ``fbpcontrol {run,rates,check}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from fbpcontrol import experiments
from fbpcontrol.norms import RateTable, compute_slopes


def _floats(text: str) -> tuple:
    return tuple(float(t) for t in text.replace(",", " ").split())


def _ints(text: str) -> tuple:
    return tuple(int(t) for t in text.replace(",", " ").split())


def _common(p: argparse.ArgumentParser):
    p.add_argument("--example", type=int, choices=(1, 2, 3))
    p.add_argument("--lambda", dest="lambdas", type=_floats, metavar="LIST", help="e.g. 1e-2,1e-3")
    p.add_argument("--levels", type=_ints, metavar="LIST", help="e.g. 1,2,3,4")
    p.add_argument("--radius", type=float, help="ball radius, or inf")
    p.add_argument("--mu", type=float)
    p.add_argument("--kappa", type=float)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--ref-level", dest="ref_level", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fbpcontrol", description=__doc__)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a config file")
    run.add_argument("config", nargs="?", help="flat key = value file; flags override it")
    _common(run)
    run.add_argument("--workers", type=int)
    run.add_argument("--hessian", action="store_true", default=None, help="Hessian eigenvalue at the finest level")
    run.add_argument("--no-plots", dest="plots", action="store_false", default=None)

    rates = sub.add_parser("rates", help="recompute slopes and figures from a stored rate_table.csv")
    rates.add_argument("--out", default="results")

    chk = sub.add_parser("check", help="run the invariant suite")
    chk.add_argument("--level", type=int, default=3)
    chk.add_argument("--seed", type=int, default=0)
    chk.add_argument("--lambda", dest="lam", type=float, default=1e-3)
    return ap


def spec_from_args(args) -> experiments.ExperimentSpec:
    cfg = experiments.load_config(args.config) if args.config else {}
    for key in ("example", "lambdas", "levels", "radius", "mu", "kappa", "out", "seed", "ref_level",
                "workers", "hessian", "plots"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    example = cfg.pop("example", 1)
    return experiments.example_spec(example, **cfg)


def cmd_run(args) -> int:
    spec = spec_from_args(args)
    table, summary = experiments.run_experiment(spec)
    failed = [
        (e["lam"], lv["level"]) for e in summary["lambdas"] for lv in e["levels"] if not lv["ok"]
    ]
    print(table.to_csv(), end="")
    print(f"wrote {spec.out}/rate_table.csv and {spec.out}/summary.json")
    for lam, level in failed:
        print(f"failed cell: lambda={lam:g} level={level}", file=sys.stderr)
    return 1 if failed else 0


def cmd_rates(args) -> int:
    path = Path(args.out) / "rate_table.csv"
    table = compute_slopes(RateTable.from_csv(path.read_text()))
    path.write_text(table.to_csv())
    if table.rows:
        from fbpcontrol import plotting

        plotting.rate_figure(table, path.with_name("rates.png"))
    print(table.to_csv(), end="")
    return 0


def cmd_check(args) -> int:
    from fbpcontrol.checks import run_checks

    results = run_checks(args.level, args.seed, args.lam)
    for r in results:
        print(r.line())
    return 0 if all(r.ok for r in results) else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return {"run": cmd_run, "rates": cmd_rates, "check": cmd_check}[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
