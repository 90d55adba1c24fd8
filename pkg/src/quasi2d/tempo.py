"""Augmented-density-tensor evolution under a continuous bosonic reservoir.

The chain stores the Liouville indices ``j_m = i_m * d + i'_m`` of the most
recent time steps, oldest on the left and the present state (the head) on
the right.  Each step contracts the chain with an MPO that carries the new
index ``j_n`` along its bond, weights every stored index with its influence
factor, propagates the head with ``M (x) conj(M)`` and emits ``j_n`` on a
fresh site.  Once the history exceeds the memory depth the oldest leg is
summed out.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bath import (
    CorrelationKernel,
    EtaTable,
    SystemModel,
    check_density_matrix,
    eta_coefficients,
    influence_matrix,
    liouville_propagator,
    system_propagator,
)
from .tensor import MatrixProductOperator, MatrixProductState, TruncationPolicy, apply_mpo, open_contract
from .timeseries import TimeSeries

__all__ = [
    "TempoConfig",
    "AugmentedDensityMps",
    "init",
    "build_step_mpo",
    "tempo_update",
    "step",
    "reduced_state",
    "run",
    "run_with_table",
]


@dataclass(frozen=True)
class TempoConfig:
    dt: float
    n_c: int
    total_steps: int
    policy: TruncationPolicy = field(default_factory=TruncationPolicy)

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.n_c < 1 or self.total_steps < 1:
            raise ValueError("n_c and total_steps must be >= 1")


@dataclass
class AugmentedDensityMps:
    """History chain plus the number of completed steps.

    ``mps.sites[-1]`` is the present-time tensor.
    """

    mps: MatrixProductState
    n: int = 0

    @property
    def current_site(self) -> int:
        return len(self.mps) - 1

    @property
    def d(self) -> int:
        return int(round(np.sqrt(self.mps.sites[-1].shape[1])))


def init(rho0) -> AugmentedDensityMps:
    rho0 = check_density_matrix(rho0)
    mps = MatrixProductState.product([rho0.reshape(-1)])
    mps.center = 0
    return AugmentedDensityMps(mps, 0)


def build_step_mpo(table: EtaTable, model: SystemModel, n: int, history: int | None = None) -> MatrixProductOperator:
    """MPO that produces ``j_n`` from a chain holding ``history`` stored indices.

    The stored indices are ``j_{n-history} .. j_{n-1}``; by default the
    chain has its natural length ``min(n-1, n_c) + 1``.  The MPO has one site
    per stored index plus a trailing site (physical input extent 1) that
    emits ``j_n``.  The initial index ``j_0`` carries no bath coupling.  When
    the oldest stored index falls outside the memory window its site is a
    plain sum with output extent 1.
    """
    if n < 1:
        raise ValueError("step index n must be >= 1")
    n_c = table.n_c
    if history is None:
        history = min(n - 1, n_c) + 1
    if not 1 <= history <= min(n, n_c + 1):
        raise ValueError(f"history length {history} is inconsistent with step {n} and n_c = {n_c}")
    d2 = model.dim**2
    Mt = liouville_propagator(system_propagator(model, table.dt))
    eye = np.eye(d2)
    sites = []
    for p in range(history):
        lag = history - p
        time_index = n - lag
        if lag > n_c:
            w = np.ones((1, 1, d2, d2), dtype=complex)
            sites.append(w)
            continue
        if time_index >= 1:
            f = influence_matrix(table, lag, n, model.kappa)  # f[j_n, j_m]
        else:
            f = np.ones((d2, d2), dtype=complex)
        if p == history - 1:
            f = f * Mt
        # W[a, o, i, b] = delta_ab delta_oi f[a, i]
        w = np.einsum("ab,oi,ai->aoib", eye, eye, f)
        if p == 0:
            w = w.sum(axis=0, keepdims=True)
        sites.append(w)
    self_term = np.diag(influence_matrix(table, 0, n, model.kappa))
    x = np.einsum("ao,a->ao", eye, self_term).reshape(d2, d2, 1, 1)
    sites.append(x)
    return MatrixProductOperator(sites)


def tempo_update(
    mps: MatrixProductState,
    head: int,
    table: EtaTable,
    model: SystemModel,
    n: int,
    policy: TruncationPolicy,
) -> tuple[MatrixProductState, int]:
    """Advance the history occupying sites ``0 .. head`` to time index ``n``.

    Sites right of ``head`` are spectators (for instance feedback bins);
    the new present tensor is inserted directly after the old head and the
    returned index points at it.
    """
    if n > table.n_steps:
        raise ValueError(f"memory table covers {table.n_steps} steps, step {n} requested")
    op = build_step_mpo(table, model, n, history=head + 1)
    out = mps.copy()
    r = out.sites[head].shape[2]
    out._insert(head + 1, np.eye(r, dtype=complex).reshape(r, 1, r))
    out = apply_mpo(out, op, policy, first=0)
    head += 1
    if out.sites[0].shape[1] == 1:
        cap = out.sites.pop(0)
        out.sites[0] = np.tensordot(cap[:, 0, :], out.sites[0], axes=(1, 0))
        out.center -= 1
        head -= 1
    return out, head


def step(adt: AugmentedDensityMps, table: EtaTable, model: SystemModel, policy: TruncationPolicy) -> AugmentedDensityMps:
    mps, _ = tempo_update(adt.mps, len(adt.mps) - 1, table, model, adt.n + 1, policy)
    return AugmentedDensityMps(mps, adt.n + 1)


def reduced_state(adt: AugmentedDensityMps) -> np.ndarray:
    """Sum over all stored paths and unpack the present index into a matrix."""
    d = adt.d
    ones = np.ones(d * d)
    vec = open_contract(adt.mps, [ones] * (len(adt.mps) - 1) + [None])
    return vec.reshape(d, d)


def run_with_table(model: SystemModel, table: EtaTable, rho0, total_steps: int, policy: TruncationPolicy) -> TimeSeries:
    adt = init(rho0)
    records = [(reduced_state(adt), 1, 1, 0.0)]
    for _ in range(total_steps):
        adt = step(adt, table, model, policy)
        records.append((reduced_state(adt), 1, adt.mps.max_bond, adt.mps.discarded_weight))
    return TimeSeries.collect(table.dt, records)


def run(model: SystemModel, kernel: CorrelationKernel, cfg: TempoConfig, rho0) -> TimeSeries:
    table = eta_coefficients(kernel, cfg.dt, cfg.total_steps, cfg.n_c)
    return run_with_table(model, table, rho0, cfg.total_steps, cfg.policy)
