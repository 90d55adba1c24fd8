"""Experiment registry: turns a validated configuration into runs and checks.

``plan`` expands a configuration into independent tasks, ``execute`` runs
one task (module level so it can be shipped to worker processes) and
``assess`` derives the cross-run checks such as convergence deviations.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import feedback as fb
from . import junction as jn
from . import oracles, tempo
from .bath import EtaTable, eta_coefficients
from .config import EXPERIMENTS, FEEDBACK_ONLY, PATH_INTEGRAL_ONLY, SimulationConfig
from .timeseries import TimeSeries

__all__ = [
    "Check",
    "Task",
    "RunOutput",
    "CONVERGENCE",
    "engine_for",
    "plan",
    "execute",
    "assess",
    "simulate",
]

# sweep key and default values of each convergence study
CONVERGENCE = {
    "convergence-nc": ("bath.n_c", (2, 3, 4, 5)),
    "convergence-dcut": ("numerics.d_cut", (1e-8, 1e-12, 1e-14)),
    "convergence-dt": ("feedback.n_d", (4, 5)),
    "convergence-order": ("feedback.order", (8, 9, 10)),
}
LINDBLAD_GRID = {"feedback.phi": (1.0, 1.17), "feedback.gamma": (0.0, 0.001)}

IBM_TOL = 1e-3
PATH_SUM_TOL = 1e-10
PATH_SUM_STEPS = 6
FEEDBACK_TOL = 1e-2
CALIBRATION_TOL = 1e-8
REDUCTION_TOL = 1e-8
TRACE_TOL = 1e-5
HERMITICITY_TOL = 1e-8
DCUT_TOL = 1e-6
DT_TOL = 2e-2
DT_WINDOW = 10.0
ORDER_TOL = 1e-6


@dataclass
class Check:
    name: str
    value: float
    tolerance: float | None
    passed: bool
    detail: str = ""

    def as_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "tolerance": self.tolerance, "passed": self.passed, "detail": self.detail}


@dataclass
class Task:
    label: str
    cfg: SimulationConfig
    budget_override: bool = False


@dataclass
class RunOutput:
    label: str
    cfg: SimulationConfig
    series: TimeSeries
    reference: dict | None = None
    checks: list[Check] = field(default_factory=list)
    wall_time: float = 0.0


def engine_for(name: str) -> str:
    if name in PATH_INTEGRAL_ONLY:
        return "tempo"
    if name in FEEDBACK_ONLY:
        return "feedback"
    return "quasi2d"


def _set(cfg: SimulationConfig, dotted: str, value, label: str) -> SimulationConfig:
    section, key = dotted.split(".", 1)
    values = {s: dict(v) for s, v in cfg.values.items()}
    values[section][key] = value
    return replace(cfg, values=values, label=label)


def _variants(cfg: SimulationConfig, key: str, values) -> list[SimulationConfig]:
    out = []
    for v in values:
        label = "_".join(x for x in (cfg.label, f"{key.split('.', 1)[1]}={v:g}") if x)
        c = _set(cfg, key, v, label)
        if key == "feedback.n_d":
            c = _set(c, "numerics.dt", c.get("feedback.tau") / v, label)
            # keep the grid commensurate: trim to a whole number of steps
            total = c.get("experiment.total_time")
            c = _set(c, "experiment.total_time", c.dt * math.floor(total / c.dt + 1e-9), label)
        out.append(c)
    return out


def plan(configs: list[SimulationConfig], budget_override: bool = False) -> list[Task]:
    """Expand already sweep-expanded configurations into runnable tasks.

    Convergence studies and the dephasing grid add their own parameter
    lists unless the configuration swept that key explicitly.  Raises
    :class:`BudgetError` before anything runs.
    """
    tasks = []
    for cfg in configs:
        name = cfg.experiment
        variants = [cfg]
        if name in CONVERGENCE:
            key, defaults = CONVERGENCE[name]
            # an explicit sweep over the studied key replaces the default list
            if key.split(".", 1)[1] + "=" not in cfg.label:
                variants = _variants(cfg, key, defaults)
        elif name == "lindblad-sweep" and not cfg.label:
            variants = []
            for phi in LINDBLAD_GRID["feedback.phi"]:
                for gamma in LINDBLAD_GRID["feedback.gamma"]:
                    label = f"phi={phi:g}_gamma={gamma:g}"
                    variants.append(_set(_set(cfg, "feedback.phi", phi, label), "feedback.gamma", gamma, label))
        for v in variants:
            if engine_for(name) == "quasi2d":
                jn.check_budget(v.get("bath.n_c"), v.get("feedback.n_d"), override=budget_override)
            tasks.append(Task(v.label, v, budget_override))
    return tasks


def _table(cfg: SimulationConfig) -> EtaTable:
    kernel = cfg.kernel()
    n_c = cfg.get("bath.n_c")
    if kernel is None:
        return EtaTable.from_eta(cfg.dt, np.zeros(cfg.steps + 1, dtype=complex), n_c)
    return eta_coefficients(kernel, cfg.dt, cfg.steps, n_c, cell_nodes=cfg.get("bath.cell_nodes"))


def simulate(cfg: SimulationConfig, budget_override: bool = False, table: EtaTable | None = None) -> TimeSeries:
    engine = engine_for(cfg.experiment)
    rho0 = cfg.initial_state()
    if engine == "feedback":
        return fb.run(cfg.feedback_config(), cfg.steps, rho0)
    table = _table(cfg) if table is None else table
    if engine == "tempo":
        return tempo.run_with_table(cfg.system_model(), table, rho0, cfg.steps, cfg.policy())
    return jn.run_experiment(
        cfg.system_model(),
        None,
        cfg.feedback_config(),
        cfg.tempo_config(),
        cfg.steps,
        rho0,
        budget_override=budget_override,
        table=table,
    )


def _invariant_checks(ts: TimeSeries) -> list[Check]:
    tr = float(ts.trace_defect.max())
    herm = float(ts.hermiticity_defect.max())
    return [
        Check("trace_defect", tr, TRACE_TOL, tr <= TRACE_TOL),
        Check("hermiticity_defect", herm, HERMITICITY_TOL, herm <= HERMITICITY_TOL),
    ]


def _feedback_checks(cfg: SimulationConfig, ts: TimeSeries):
    """Pre-feedback decay always; the delay-equation amplitude when it applies."""
    f = cfg.feedback_config()
    t = ts.time
    checks, reference = [], None
    excited = cfg.get("system.initial") == "excited"
    if not excited:
        return checks, reference
    early = t <= f.tau + 1e-12
    cal = float(np.max(np.abs(ts.rho11[early] - np.exp(-2.0 * f.Gamma * t[early]))))
    # the step gate is exact up to the truncated series; allow ten times its first omitted term
    radius = 2.0 * math.acos(math.exp(-f.Gamma * f.dt))
    tol = max(CALIBRATION_TOL, 10.0 * radius ** (f.order + 1) / math.factorial(f.order + 1))
    checks.append(Check("pre_feedback_decay", cal, tol, cal <= tol, "t <= tau vs exp(-2 Gamma t)"))
    if f.gamma == 0 and f.Gamma > 0:
        ref = np.abs(oracles.feedback_analytic(f.Gamma, f.tau, f.omega_0, t)) ** 2
        window = t <= 3.0 * f.tau + 1e-12
        dev = float(np.max(np.abs(ts.rho11[window] - ref[window])))
        checks.append(Check("delay_amplitude", dev, FEEDBACK_TOL, dev <= FEEDBACK_TOL, "t <= 3 tau vs |c(t)|^2"))
        reference = {"rho11": ref}
    return checks, reference


def execute(task: Task) -> RunOutput:
    cfg = task.cfg
    name = cfg.experiment
    start = time.perf_counter()
    table = None if engine_for(name) == "feedback" else _table(cfg)
    ts = simulate(cfg, task.budget_override, table)
    checks = _invariant_checks(ts)
    reference = None
    if name == "ibm-benchmark":
        rho01_0 = cfg.initial_state()[0, 1]
        ref = oracles.ibm_analytic(cfg.kernel(), rho01_0, ts.time)
        dev = float(np.max(np.abs(ts.rho01 - ref)))
        checks.append(Check("ibm_coherence", dev, IBM_TOL, dev <= IBM_TOL, "max |rho01 - exact|"))
        reference = {"re_rho01": ref.real, "im_rho01": ref.imag}
    elif name == "spin-boson":
        n = min(cfg.steps, PATH_SUM_STEPS, table.n_steps)
        paths = oracles.brute_force_path_sum(cfg.system_model(), table, cfg.initial_state(), n, table.n_c)
        dev = float(max(np.max(np.abs(ts.rho[k] - paths[k])) for k in range(n + 1)))
        checks.append(Check("path_sum", dev, PATH_SUM_TOL, dev <= PATH_SUM_TOL, f"first {n} steps vs explicit path sum"))
    elif engine_for(name) == "feedback":
        extra, reference = _feedback_checks(cfg, ts)
        checks.extend(extra)
    elif name == "quasi2d":
        ref = None
        if not cfg.bath_active:
            ref = fb.run(cfg.feedback_config(), cfg.steps, cfg.initial_state())
            what = "feedback engine alone"
        elif cfg.get("feedback.Gamma") == 0:
            ref = tempo.run_with_table(cfg.system_model(), table, cfg.initial_state(), cfg.steps, cfg.policy())
            what = "path-integral engine alone"
        if ref is not None:
            dev = float(np.max(np.abs(ts.rho - ref.rho)))
            checks.append(Check("reduction", dev, REDUCTION_TOL, dev <= REDUCTION_TOL, what))
            reference = {"rho11": ref.rho11}
    return RunOutput(task.label, cfg, ts, reference, checks, time.perf_counter() - start)


def _common_grid_deviation(a: TimeSeries, b: TimeSeries, t_max: float) -> float:
    """Max ``|rho11_a - rho11_b|`` at the instants both grids share, up to ``t_max``."""
    ta, tb = a.time, b.time
    dev = 0.0
    for i, t in enumerate(ta):
        if t > t_max + 1e-9:
            break
        j = int(round(t / b.dt))
        if j < len(tb) and abs(tb[j] - t) < 1e-9:
            dev = max(dev, abs(a.rho11[i] - b.rho11[j]))
    return float(dev)


def _dev(a: TimeSeries, b: TimeSeries) -> float:
    n = min(len(a), len(b))
    return float(np.max(np.abs(a.rho11[:n] - b.rho11[:n])))


def assess(name: str, outputs: list[RunOutput]) -> list[Check]:
    """Checks spanning several runs of one convergence study."""
    if name not in CONVERGENCE or len(outputs) < 2:
        return []
    key = CONVERGENCE[name][0]
    runs = sorted(outputs, key=lambda o: o.cfg.get(key), reverse=(name == "convergence-dcut"))
    vals = [r.cfg.get(key) for r in runs]
    devs = [_dev(a.series, b.series) for a, b in zip(runs, runs[1:])]
    pairs = [f"({x:g},{y:g})" for x, y in zip(vals, vals[1:])]
    detail = ", ".join(f"{p}: {d:.3g}" for p, d in zip(pairs, devs))
    if name == "convergence-nc":
        ok = devs[-1] < devs[0]
        return [Check("nc_monotone", devs[-1], devs[0], ok, detail)]
    if name == "convergence-dcut":
        return [Check("dcut_tightest", devs[-1], DCUT_TOL, devs[-1] <= DCUT_TOL, detail)]
    if name == "convergence-order":
        return [Check("order_highest", devs[-1], ORDER_TOL, devs[-1] <= ORDER_TOL, detail)]
    # dt: compare neighbouring step sizes on their shared instants
    devs = [_common_grid_deviation(a.series, b.series, DT_WINDOW) for a, b in zip(runs, runs[1:])]
    detail = ", ".join(f"{p}: {d:.3g}" for p, d in zip(pairs, devs))
    worst = max(devs)
    return [Check("dt_agreement", worst, DT_TOL, worst <= DT_TOL, detail + f" (t <= {DT_WINDOW:g} ps)")]


assert set(EXPERIMENTS) == set(PATH_INTEGRAL_ONLY) | set(FEEDBACK_ONLY) | {"quasi2d"} | set(CONVERGENCE)
