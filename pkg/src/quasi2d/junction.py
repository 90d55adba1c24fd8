"""Quasi-2D network: one emitter tensor shared by a path-integral history and a feedback chain.

Both reservoirs live on a single chain

    [feedback bins ..., emitter, phonon history (newest first) ...]

so the emitter site is literally the same tensor for both engines.  Its
left bond is the junction link carrying the entanglement between the
photonic bins and the rest.  A step first runs the path-integral update on
the mirrored chain (the bins ride along as spectators) and then the
feedback gate (the history rides along as spectators).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import feedback as fb
from .bath import CorrelationKernel, EtaTable, SystemModel, eta_coefficients, liouville_propagator, system_propagator
from .tempo import TempoConfig, tempo_update
from .tensor import TruncationPolicy
from .timeseries import TimeSeries

__all__ = [
    "BudgetError",
    "ConfigurationError",
    "JunctionState",
    "DEFAULT_BUDGET",
    "check_budget",
    "init",
    "combined_step",
    "run_experiment",
]

DEFAULT_BUDGET = 19


class BudgetError(ValueError):
    """Combined memory depth beyond what the quasi-2D network is allowed to hold."""


class ConfigurationError(ValueError):
    pass


@dataclass
class JunctionState:
    fb: fb.TimeBinMps
    n: int = 0

    @property
    def mps(self):
        return self.fb.mps

    @property
    def sys_pos(self) -> int:
        return self.fb.sys_pos

    @property
    def link_dim(self) -> int:
        return self.fb.link_dim

    def system_tensor(self) -> np.ndarray:
        return self.mps.sites[self.sys_pos]

    def feedback_view(self) -> list[np.ndarray]:
        """Bins and emitter, oldest bin first."""
        return self.mps.sites[: self.sys_pos + 1]

    def history_view(self) -> list[np.ndarray]:
        """Emitter followed by the stored path indices, newest first."""
        return self.mps.sites[self.sys_pos :]

    def reduced_system(self) -> np.ndarray:
        d2 = self.system_tensor().shape[1]
        ones = np.ones(d2, dtype=complex)
        return fb.reduced_system(self.fb, right_covectors=lambda k: ones)


def check_budget(n_c: int, n_d: int, budget: int = DEFAULT_BUDGET, override: bool = False):
    if n_c + n_d > budget and not override:
        raise BudgetError(
            f"n_c + n_d = {n_c + n_d} exceeds the quasi-2D budget of {budget}; pass an override to run anyway"
        )


def init(rho0, fb_cfg: fb.FeedbackConfig) -> JunctionState:
    return JunctionState(fb.init(rho0, fb_cfg), 0)


def combined_step(
    state: JunctionState,
    table: EtaTable,
    model: SystemModel,
    gate: np.ndarray,
    policy: TruncationPolicy,
    n_ph: int = 1,
    swap_policy: TruncationPolicy | None = None,
) -> tuple[JunctionState, int]:
    """Path-integral half-step, then feedback half-step.

    Returns the new state and the link dimension after the first half-step.
    """
    n = state.n + 1
    fb_state = state.fb.copy()
    if not np.any(table.eta):
        # no bath memory: stored paths would only ever be summed, so propagate in place
        Mt = liouville_propagator(system_propagator(model, table.dt))
        s = fb_state.mps.sites[fb_state.sys_pos]
        fb_state.mps.sites[fb_state.sys_pos] = np.einsum("ij,ajb->aib", Mt, s)
    else:
        mirrored = fb_state.mps.reversed()
        head = len(mirrored) - 1 - fb_state.sys_pos
        mirrored, head = tempo_update(mirrored, head, table, model, n, policy)
        fb_state.mps = mirrored.reversed()
        if len(fb_state.mps) - 1 - head != fb_state.sys_pos:
            raise AssertionError("emitter position drifted during the history update")
    link_half = fb_state.link_dim
    fb_state = fb.step(fb_state, gate, policy, n_ph, swap_policy)
    return JunctionState(fb_state, n), link_half


def run_experiment(
    model: SystemModel,
    kernel: CorrelationKernel | None,
    fb_cfg: fb.FeedbackConfig,
    tempo_cfg: TempoConfig,
    steps: int,
    rho0=None,
    budget: int = DEFAULT_BUDGET,
    budget_override: bool = False,
    table: EtaTable | None = None,
) -> TimeSeries:
    """Emitter under phonons and feedback; ``extras['link_half']`` holds the mid-step link."""
    if not math.isclose(fb_cfg.dt, tempo_cfg.dt, rel_tol=1e-12):
        raise ConfigurationError(f"time steps differ: feedback dt = {fb_cfg.dt}, path-integral dt = {tempo_cfg.dt}")
    check_budget(tempo_cfg.n_c, fb_cfg.n_d, budget, budget_override)
    if table is None:
        if kernel is None:
            raise ConfigurationError("either a kernel or a memory table is required")
        table = eta_coefficients(kernel, tempo_cfg.dt, steps, tempo_cfg.n_c)
    if rho0 is None:
        rho0 = fb.SIGMA_11
    gate = fb.step_gate(fb.build_step_generator(fb_cfg), fb_cfg.order)
    state = init(rho0, fb_cfg)
    records = [(state.reduced_system(), state.link_dim, state.mps.max_bond, 0.0)]
    half = [state.link_dim]
    for _ in range(steps):
        state, link_half = combined_step(state, table, model, gate, tempo_cfg.policy, fb_cfg.n_ph, fb_cfg.swap_policy)
        half.append(link_half)
        records.append((state.reduced_system(), state.link_dim, state.mps.max_bond, state.mps.discarded_weight))
    ts = TimeSeries.collect(tempo_cfg.dt, records)
    ts.extras["link_half"] = np.array(half)
    return ts
