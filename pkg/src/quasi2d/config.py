"""INI-style run configuration with mandatory unit suffixes.

Every dimensioned value carries its unit in the file (``Gamma = 0.9 ps^-1``,
``tau = 1.2 ps``, ``temperature = 4 K``); the suffix is checked and
stripped on parse.  Validation collects every problem before reporting.

A ``[sweep]`` section lists ``section.key = v1, v2, ...`` entries; the run
set is their cartesian product.
"""
from __future__ import annotations

import configparser
import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bath import CorrelationKernel, GaAsSpectralDensity, ParametricSpectralDensity, SystemModel
from .feedback import SIGMA_11, FeedbackConfig
from .tempo import TempoConfig
from .tensor import TruncationPolicy

__all__ = [
    "EXPERIMENTS",
    "SCHEMA",
    "ValidationError",
    "SimulationConfig",
    "parse_config",
    "parse_text",
    "expand_sweeps",
]

EXPERIMENTS = (
    "ibm-benchmark",
    "spin-boson",
    "feedback",
    "feedback-dephasing",
    "lindblad-sweep",
    "quasi2d",
    "convergence-nc",
    "convergence-dcut",
    "convergence-dt",
    "convergence-order",
)
PATH_INTEGRAL_ONLY = ("ibm-benchmark", "spin-boson")
FEEDBACK_ONLY = ("feedback", "feedback-dephasing", "lindblad-sweep")

REQUIRED = object()


@dataclass(frozen=True)
class Key:
    kind: type | tuple
    unit: str | None = None
    default: object = None


# choice keys use a tuple of allowed strings as their kind
SCHEMA: dict[str, dict[str, Key]] = {
    "experiment": {
        "name": Key(EXPERIMENTS, default=REQUIRED),
        "total_time": Key(float, "ps", REQUIRED),
    },
    "system": {
        "omega_0": Key(float, "ps^-1", 0.0),
        "Omega_0": Key(float, "ps^-1", 0.0),
        "initial": Key(("excited", "ground", "coherent"), default="excited"),
    },
    "bath": {
        "spectral_density": Key(("none", "parametric", "gaas_bulk"), default="none"),
        "temperature": Key(float, "K", 0.0),
        "n_c": Key(int, default=4),
        "alpha": Key(float, default=None),
        "s": Key(float, default=1.0),
        "omega_c": Key(float, "ps^-1", None),
        "cutoff_form": Key(int, default=1),
        "omega_max": Key(float, "ps^-1", None),
        "quad_nodes": Key(int, default=4096),
        "cell_nodes": Key(int, default=32),
        "D1": Key(float, "eV", None),
        "D2": Key(float, "eV", None),
        "m1": Key(float, "m_e", None),
        "m2": Key(float, "m_e", None),
        "hbar_omega1": Key(float, "meV", None),
        "hbar_omega2": Key(float, "meV", None),
        "rho_m": Key(float, "kg/m^3", None),
        "c_s": Key(float, "m/s", None),
    },
    "feedback": {
        "Gamma": Key(float, "ps^-1", 0.0),
        "tau": Key(float, "ps", None),
        "n_d": Key(int, default=None),
        "phi": Key(float, default=0.0),
        "gamma": Key(float, "ps^-1", 0.0),
        "n_ph": Key(int, default=1),
        "order": Key(int, default=10),
        "swap_cutoff": Key(float, default=None),
    },
    "numerics": {
        "dt": Key(float, "ps", REQUIRED),
        "d_cut": Key(float, default=1e-12),
        "max_bond": Key(int, default=None),
    },
}
GAAS_KEYS = ("D1", "D2", "m1", "m2", "hbar_omega1", "hbar_omega2", "rho_m", "c_s")


class ValidationError(ValueError):
    """All problems found in a configuration, one message each."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


def _convert(raw: str, spec: Key, where: str, errors: list[str]):
    raw = raw.strip()
    if isinstance(spec.kind, tuple):
        if raw not in spec.kind:
            errors.append(f"{where}: {raw!r} is not one of {', '.join(spec.kind)}")
        return raw
    parts = raw.split(None, 1)
    if not parts:
        errors.append(f"{where}: empty value")
        return None
    number, unit = parts[0], (parts[1].strip() if len(parts) > 1 else None)
    if spec.unit is None and unit is not None:
        errors.append(f"{where}: dimensionless value must not carry a unit (got {unit!r})")
        return None
    if spec.unit is not None and unit != spec.unit:
        got = "no unit" if unit is None else f"unit {unit!r}"
        errors.append(f"{where}: expected unit {spec.unit!r}, got {got}")
        return None
    try:
        if spec.kind is int:
            value = float(number)
            if not value.is_integer():
                raise ValueError
            return int(value)
        value = float(number)
        if not math.isfinite(value):
            raise ValueError
        return value
    except ValueError:
        errors.append(f"{where}: {number!r} is not a valid {spec.kind.__name__}")
        return None


@dataclass(frozen=True)
class SimulationConfig:
    """Validated run settings; ``values[section][key]`` holds parsed numbers."""

    values: dict
    sweep: tuple[tuple[str, tuple[str, ...]], ...] = ()
    source: str = "<string>"
    label: str = ""

    def get(self, dotted: str):
        section, key = dotted.split(".", 1)
        return self.values[section][key]

    @property
    def experiment(self) -> str:
        return self.values["experiment"]["name"]

    @property
    def dt(self) -> float:
        return self.values["numerics"]["dt"]

    @property
    def steps(self) -> int:
        return int(round(self.values["experiment"]["total_time"] / self.dt))

    @property
    def feedback_active(self) -> bool:
        return self.values["feedback"]["Gamma"] > 0 or self.experiment in FEEDBACK_ONLY

    @property
    def bath_active(self) -> bool:
        return self.values["bath"]["spectral_density"] != "none"

    def flat(self) -> dict:
        return {f"{s}.{k}": v for s, keys in self.values.items() for k, v in keys.items()}

    def policy(self) -> TruncationPolicy:
        n = self.values["numerics"]
        return TruncationPolicy(n["d_cut"], n["max_bond"])

    def system_model(self) -> SystemModel:
        s = self.values["system"]
        return SystemModel(omega_0=s["omega_0"], Omega_0=s["Omega_0"])

    def initial_state(self) -> np.ndarray:
        kind = self.values["system"]["initial"]
        if kind == "excited":
            return SIGMA_11.copy()
        if kind == "ground":
            return np.diag([1.0, 0.0]).astype(complex)
        # (|0> - i|1>)/sqrt(2): rho_01 = i/2
        return np.array([[0.5, 0.5j], [-0.5j, 0.5]], dtype=complex)

    def spectral_density(self):
        b = self.values["bath"]
        if b["spectral_density"] == "parametric":
            return ParametricSpectralDensity(b["alpha"], b["s"], b["omega_c"], b["cutoff_form"])
        if b["spectral_density"] == "gaas_bulk":
            return GaAsSpectralDensity(**{k: b[k] for k in GAAS_KEYS})
        return None

    def kernel(self) -> CorrelationKernel | None:
        J = self.spectral_density()
        if J is None:
            return None
        b = self.values["bath"]
        return CorrelationKernel(J, b["temperature"], omega_max=b["omega_max"], n_nodes=b["quad_nodes"])

    def tempo_config(self) -> TempoConfig:
        return TempoConfig(self.dt, self.values["bath"]["n_c"], self.steps, self.policy())

    def feedback_config(self) -> FeedbackConfig:
        f = self.values["feedback"]
        swap = None if f["swap_cutoff"] is None else TruncationPolicy(f["swap_cutoff"], self.values["numerics"]["max_bond"])
        return FeedbackConfig(
            Gamma=f["Gamma"],
            tau=f["tau"],
            n_d=f["n_d"],
            phi=f["phi"],
            gamma=f["gamma"],
            n_ph=f["n_ph"],
            order=f["order"],
            policy=self.policy(),
            swap_policy=swap,
        )


def _read(text: str, source: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ValidationError([f"{source}: {exc}"]) from exc
    return cp


def _apply_overrides(cp: configparser.ConfigParser, overrides, errors: list[str]):
    for item in overrides or ():
        if "=" not in item:
            errors.append(f"override {item!r}: expected section.key=value")
            continue
        dotted, value = (x.strip() for x in item.split("=", 1))
        if "." not in dotted:
            errors.append(f"override {item!r}: key must be written as section.key")
            continue
        section, key = dotted.split(".", 1)
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, key, value)


def _parse_values(cp: configparser.ConfigParser, errors: list[str]) -> dict:
    for section in cp.sections():
        if section not in SCHEMA and section != "sweep":
            errors.append(f"unknown section [{section}]")
    values = {}
    for section, keys in SCHEMA.items():
        present = dict(cp.items(section)) if cp.has_section(section) else {}
        for key in present:
            if key not in keys:
                errors.append(f"unknown key {section}.{key}")
        out = {}
        for key, spec in keys.items():
            if key in present:
                out[key] = _convert(present[key], spec, f"{section}.{key}", errors)
            elif spec.default is REQUIRED:
                errors.append(f"missing required key {section}.{key}")
                out[key] = None
            else:
                out[key] = spec.default
        values[section] = out
    return values


def _parse_sweep(cp: configparser.ConfigParser, errors: list[str]) -> tuple:
    if not cp.has_section("sweep"):
        return ()
    entries = []
    for dotted, raw in cp.items("sweep"):
        if "." not in dotted:
            errors.append(f"sweep key {dotted!r} must be written as section.key")
            continue
        section, key = dotted.split(".", 1)
        if section not in SCHEMA or key not in SCHEMA[section] or section == "experiment" and key == "name":
            errors.append(f"sweep over unknown or fixed key {dotted}")
            continue
        items = tuple(x.strip() for x in raw.strip().strip("[]").split(",") if x.strip())
        if not items:
            errors.append(f"sweep {dotted}: empty value list")
            continue
        for item in items:
            _convert(item, SCHEMA[section][key], f"sweep {dotted}", errors)
        entries.append((dotted, items))
    return tuple(entries)


def _close(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-12)


def _check(values: dict, errors: list[str]):
    """Cross-key rules; only run when every key parsed."""
    exp = values["experiment"]
    num, bath, feed, system = values["numerics"], values["bath"], values["feedback"], values["system"]
    name = exp["name"]
    dt = num["dt"]
    if dt <= 0:
        errors.append("numerics.dt must be positive")
        return
    if exp["total_time"] <= 0:
        errors.append("experiment.total_time must be positive")
    elif not _close(exp["total_time"] / dt, round(exp["total_time"] / dt)):
        errors.append(f"experiment.total_time = {exp['total_time']} ps is not an integer multiple of numerics.dt = {dt} ps")
    if not 0.0 <= num["d_cut"] < 1.0:
        errors.append("numerics.d_cut must lie in [0, 1)")
    if num["max_bond"] is not None and num["max_bond"] < 1:
        errors.append("numerics.max_bond must be >= 1")
    if bath["n_c"] < 1:
        errors.append("bath.n_c must be >= 1")
    if bath["temperature"] < 0:
        errors.append("bath.temperature must be >= 0")
    if bath["quad_nodes"] < 16 or bath["quad_nodes"] % 16:
        errors.append("bath.quad_nodes must be a positive multiple of 16")
    if bath["cell_nodes"] < 1:
        errors.append("bath.cell_nodes must be >= 1")

    kind = bath["spectral_density"]
    if kind == "parametric":
        for key in ("alpha", "omega_c"):
            if bath[key] is None:
                errors.append(f"bath.{key} is required for a parametric spectral density")
        if bath["alpha"] is not None and bath["alpha"] < 0:
            errors.append("bath.alpha must be >= 0")
        if bath["omega_c"] is not None and bath["omega_c"] <= 0:
            errors.append("bath.omega_c must be positive")
        if bath["s"] <= 0:
            errors.append("bath.s must be positive")
        if bath["cutoff_form"] not in (1, 2):
            errors.append("bath.cutoff_form must be 1 (exponential) or 2 (gaussian)")
    elif kind == "gaas_bulk":
        for key in GAAS_KEYS:
            if bath[key] is None:
                errors.append(f"bath.{key} is required for the gaas_bulk spectral density")

    if name in PATH_INTEGRAL_ONLY and kind == "none":
        errors.append(f"experiment {name} needs a bath.spectral_density")
    if name == "ibm-benchmark" and (system["Omega_0"] != 0 or system["omega_0"] != 0):
        errors.append("ibm-benchmark is pure dephasing: system.omega_0 and system.Omega_0 must be 0")

    feedback_needed = name not in PATH_INTEGRAL_ONLY
    if feedback_needed:
        for key in ("tau", "n_d"):
            if feed[key] is None:
                errors.append(f"feedback.{key} is required for experiment {name}")
        if feed["Gamma"] < 0 or feed["gamma"] < 0:
            errors.append("feedback.Gamma and feedback.gamma must be >= 0")
        if feed["n_ph"] < 1 or feed["order"] < 1:
            errors.append("feedback.n_ph and feedback.order must be >= 1")
        if feed["swap_cutoff"] is not None and not 0.0 <= feed["swap_cutoff"] < 1.0:
            errors.append("feedback.swap_cutoff must lie in [0, 1)")
        if system["omega_0"] != 0:
            errors.append("system.omega_0 must be 0 with feedback; the transition frequency enters through feedback.phi")
        if name in FEEDBACK_ONLY and system["Omega_0"] != 0:
            errors.append(f"experiment {name} does not support a coherent drive (system.Omega_0)")
        if feed["tau"] is not None and feed["n_d"] is not None:
            if feed["tau"] <= 0 or feed["n_d"] < 1:
                errors.append("feedback.tau must be positive and feedback.n_d >= 1")
            elif not _close(dt * feed["n_d"], feed["tau"]):
                errors.append(
                    f"numerics.dt * feedback.n_d = {dt * feed['n_d']:g} ps does not equal feedback.tau = {feed['tau']:g} ps"
                )


def _build(cp, overrides, source) -> SimulationConfig:
    errors: list[str] = []
    _apply_overrides(cp, overrides, errors)
    values = _parse_values(cp, errors)
    sweep = _parse_sweep(cp, errors)
    if not errors:
        _check(values, errors)
    if errors:
        raise ValidationError(errors)
    return SimulationConfig(values, sweep, source)


def parse_text(text: str, overrides=None, source: str = "<string>") -> SimulationConfig:
    return _build(_read(text, source), overrides, source)


def parse_config(path, overrides=None) -> SimulationConfig:
    """Read and validate ``path``; raises :class:`ValidationError` listing every problem."""
    path = Path(path)
    if not path.is_file():
        raise ValidationError([f"config file {path} does not exist"])
    return _build(_read(path.read_text(), str(path)), overrides, str(path))


def _format_label(dotted: str, raw: str) -> str:
    return f"{dotted.split('.', 1)[1]}={raw.split()[0]}"


def expand_sweeps(cfg: SimulationConfig) -> list[SimulationConfig]:
    """One validated config per point of the cartesian product of the sweep lists."""
    if not cfg.sweep:
        return [cfg]
    keys = [k for k, _ in cfg.sweep]
    out, errors = [], []
    for combo in itertools.product(*(items for _, items in cfg.sweep)):
        values = {s: dict(v) for s, v in cfg.values.items()}
        local: list[str] = []
        for dotted, raw in zip(keys, combo):
            section, key = dotted.split(".", 1)
            values[section][key] = _convert(raw, SCHEMA[section][key], f"sweep {dotted}", local)
        label = "_".join(_format_label(k, r) for k, r in zip(keys, combo))
        if not local:
            _check(values, local)
        errors.extend(f"[{label}] {e}" for e in local)
        out.append(SimulationConfig(values, (), cfg.source, label))
    if errors:
        raise ValidationError(errors)
    return out

