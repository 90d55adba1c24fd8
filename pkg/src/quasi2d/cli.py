"""Command-line entry point.

Exit codes: 0 success, 2 invalid configuration, 3 failed oracle assertion,
4 memory budget exceeded.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import EXPERIMENTS, SimulationConfig, ValidationError, expand_sweeps, parse_config
from .experiments import RunOutput, assess, execute, plan
from .junction import BudgetError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_ORACLE = 3
EXIT_BUDGET = 4

log = logging.getLogger("quasi2d")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="quasi2d",
        description="Emitter dynamics under a phonon bath and time-delayed feedback.",
    )
    p.add_argument("--config", required=True, type=Path, help="run configuration (INI with unit suffixes)")
    p.add_argument("--experiment", choices=EXPERIMENTS, help="override experiment.name from the file")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory (default: current)")
    p.add_argument("--assert-oracle", action="store_true", help="exit 3 if any reference check fails")
    p.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="replace a config value, e.g. feedback.phi=1.17 or 'numerics.dt=0.3 ps' (repeatable)",
    )
    p.add_argument("--budget-override", action="store_true", help="allow n_c + n_d above the memory budget")
    p.add_argument("--jobs", type=int, default=1, help="sweep entries run concurrently (default 1)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _csv_name(cfg: SimulationConfig) -> str:
    stem = cfg.experiment
    if cfg.label:
        stem += "_" + cfg.label.replace("=", "-")
    return stem + ".csv"


def _run_summary(out: RunOutput, csv_path: Path) -> dict:
    ts = out.series
    final = ts.rho[-1]
    return {
        "label": out.label,
        "csv": csv_path.name,
        "steps": len(ts) - 1,
        "dt_ps": ts.dt,
        "final": {
            "rho00": float(final[0, 0].real),
            "rho11": float(final[1, 1].real),
            "re_rho01": float(final[0, 1].real),
            "im_rho01": float(final[0, 1].imag),
        },
        "max_trace_defect": float(ts.trace_defect.max()),
        "peak_link_dim": int(ts.link_dim.max()),
        "peak_max_bond": int(ts.max_bond.max()),
        "wall_time_s": out.wall_time,
        "checks": [c.as_dict() for c in out.checks],
        "parameters": out.cfg.flat(),
    }


def _write(out: RunOutput, directory: Path) -> Path:
    path = directory / _csv_name(out.cfg)
    out.series.to_csv(path, reference=out.reference)
    if "link_half" in out.series.extras:
        _append_column(path, "link_dim_half_step", out.series.extras["link_half"])
    return path


def _append_column(path: Path, name: str, values) -> None:
    lines = path.read_text().splitlines()
    values = np.asarray(values)
    lines[0] += "," + name
    for k in range(1, len(lines)):
        lines[k] += "," + str(int(values[k - 1]))
    path.write_text("\n".join(lines) + "\n")


def run(args) -> int:
    try:
        overrides = list(args.override)
        if args.experiment:
            overrides.append(f"experiment.name={args.experiment}")
        cfg = parse_config(args.config, overrides)
        configs = expand_sweeps(cfg)
    except ValidationError as exc:
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        tasks = plan(configs, args.budget_override)
    except BudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET

    args.out.mkdir(parents=True, exist_ok=True)
    log.info("%s: %d run(s)", cfg.experiment, len(tasks))
    if args.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outputs = list(pool.map(execute, tasks))
    else:
        outputs = [execute(t) for t in tasks]

    runs = []
    for o in outputs:
        path = _write(o, args.out)
        runs.append(_run_summary(o, path))
        log.info("%s written (%.1f s)", path, o.wall_time)
    cross = assess(cfg.experiment, outputs)
    checks = [c for o in outputs for c in o.checks] + cross
    passed = all(c.passed for c in checks)
    summary = {
        "experiment": cfg.experiment,
        "config": str(args.config),
        "overrides": list(args.override),
        "runs": runs,
        "checks": [c.as_dict() for c in cross],
        "all_checks_passed": passed,
    }
    (args.out / f"{cfg.experiment}_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    for c in checks:
        status = "ok" if c.passed else "FAILED"
        tol = "" if c.tolerance is None else f" (limit {c.tolerance:.3g})"
        print(f"{status:6s} {c.name}: {c.value:.3g}{tol} {c.detail}".rstrip())
    if args.assert_oracle and not passed:
        return EXIT_ORACLE
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
