"""Independent reference solutions used to validate the tensor-network engines.

These routines deliberately avoid the engines' numerical kernels: they carry
their own quadratures, propagators and influence weights.  The path sum reads
the same memory table as the engine because the table is an input of the
path integral, not the thing under test.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "OracleReport",
    "ibm_analytic",
    "feedback_analytic",
    "delay_steady_state",
    "brute_force_path_sum",
    "dense_liouville_evolution",
    "OracleError",
    "DenseEvolution",
]

_HBAR_OVER_KB = 1.054571817e-34 / 1.380649e-23 * 1e12  # K*ps


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class OracleReport:
    """Reference values on an engine time grid plus deviation figures."""

    grid: np.ndarray
    reference: np.ndarray
    engine: np.ndarray

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.engine - self.reference)))

    @property
    def max_rel(self) -> float:
        scale = np.maximum(np.abs(self.reference), np.finfo(float).tiny)
        return float(np.max(np.abs(self.engine - self.reference) / scale))

    @classmethod
    def compare(cls, grid, reference, engine) -> "OracleReport":
        grid, reference, engine = (np.asarray(x) for x in (grid, reference, engine))
        if not (grid.shape == reference.shape == engine.shape):
            raise ValueError("reference and engine values must share the time grid")
        return cls(grid, reference, engine)


# -- pure dephasing ---------------------------------------------------------


def _composite_gl(a: float, b: float, panels: int, order: int = 20):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)[:, None]
    mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
    return (mid + half * x).ravel(), (half * w).ravel()


def ibm_analytic(kernel, rho01_0: complex, t, panels: int = 400) -> np.ndarray:
    """Exact pure-dephasing coherence for a harmonic bath.

    ``rho01(t) = rho01(0) exp(int dw J(w) [-i t/w + i sin(wt)/w^2
    - coth(w/2T) (1 - cos wt)/w^2])``, integrated with a composite
    Gauss-Legendre rule on ``[0, omega_max]``.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    J = kernel.spectral_density
    w, wt = _composite_gl(0.0, kernel.upper_frequency, panels)
    jw = np.asarray(J(w), dtype=float)
    if kernel.temperature > 0:
        coth = 1.0 / np.tanh(w * _HBAR_OVER_KB / (2.0 * kernel.temperature))
    else:
        coth = np.ones_like(w)
    x = np.outer(t, w)
    # wt - sin(wt) and 1 - cos(wt) without cancellation
    small = np.abs(x) < 1e-3
    x_minus_sin = np.where(small, x**3 / 6 - x**5 / 120, x - np.sin(x))
    one_minus_cos = 2.0 * np.sin(0.5 * x) ** 2
    g = wt * jw / w**2
    expo = -1j * (x_minus_sin @ g) - one_minus_cos @ (g * coth)
    out = rho01_0 * np.exp(expo)
    return out


# -- coherent feedback ------------------------------------------------------


def feedback_analytic(gamma: float, tau: float, omega_0: float, t) -> np.ndarray:
    """Single-excitation amplitude of an emitter in front of a mirror.

    Sum over round trips ``n <= t/tau`` of
    ``exp(-G t) / n! [G exp((G - i w0) tau) (t - n tau)]^n``, evaluated in
    log form to stay finite for many round trips.
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t_arr < 0):
        raise ValueError("t must be >= 0")
    out = np.empty(t_arr.shape, dtype=complex)
    for idx, tt in np.ndenumerate(t_arr):
        total = 0j
        for n in range(int(math.floor(tt / tau + 1e-12)) + 1):
            s = tt - n * tau
            if n == 0:
                total += math.exp(-gamma * tt)
                continue
            if s <= 0 or gamma == 0:
                continue
            log_mag = -gamma * tt + n * gamma * tau + n * math.log(gamma * s) - math.lgamma(n + 1)
            total += math.exp(log_mag) * complex(math.cos(n * omega_0 * tau), -math.sin(n * omega_0 * tau))
        out[idx] = total
    return out if np.ndim(t) else out[0]


def delay_steady_state(
    gamma: float,
    tau: float,
    phi: float,
    steps_per_tau: int = 1000,
    tol: float = 1e-8,
    max_round_trips: int = 5000,
    return_trace: bool = False,
):
    """Long-time ``|c|^2`` of ``c' = -G c + G exp(2 pi i phi) c(t - tau)``.

    Classical RK4 with the delayed term read from a cubic Hermite
    interpolant of the stored history.  Stops once ``|c|^2`` changes by less
    than ``tol`` over one round trip; raises ``OracleError`` otherwise.
    """
    if gamma == 0:
        return (1.0, None) if return_trace else 1.0
    m = int(steps_per_tau)
    h = tau / m
    fb = gamma * complex(math.cos(2 * math.pi * phi), math.sin(2 * math.pi * phi))
    cap = m * max_round_trips + 1
    c = np.empty(cap, dtype=complex)
    # one-sided derivatives: c' jumps at t = tau when the echo switches on
    d_left = np.empty(cap, dtype=complex)
    d_right = np.empty(cap, dtype=complex)
    c[0] = 1.0

    def rhs(ci: complex, cd: complex) -> complex:
        return -gamma * ci + fb * cd

    def echo_mid(k: int) -> complex:
        # c(t_k + h/2 - tau) from the Hermite interpolant on [t_j, t_j+1]
        j = k - m
        if j < 0:
            return 0j
        return 0.5 * (c[j] + c[j + 1]) + 0.125 * h * (d_right[j] - d_left[j + 1])

    d_left[0] = d_right[0] = rhs(c[0], 0j)
    last_pop = 1.0
    for k in range(cap - 1):
        j = k - m
        e_mid = echo_mid(k)
        e_end = c[j + 1] if j >= 0 else 0j
        k1 = d_right[k]
        k2 = rhs(c[k] + 0.5 * h * k1, e_mid)
        k3 = rhs(c[k] + 0.5 * h * k2, e_mid)
        k4 = rhs(c[k] + h * k3, e_end)
        c[k + 1] = c[k] + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        d_left[k + 1] = rhs(c[k + 1], e_end)
        d_right[k + 1] = rhs(c[k + 1], c[j + 1] if j + 1 >= 0 else 0j)
        if (k + 1) % m == 0:
            pop = abs(c[k + 1]) ** 2
            if k + 1 >= 2 * m and abs(pop - last_pop) < tol:
                if return_trace:
                    return pop, c[: k + 2].copy()
                return pop
            last_pop = pop
    raise OracleError(f"delay equation not converged after {max_round_trips} round trips")


# -- discrete path integral ------------------------------------------------


def _path_setup(model, table, rho0, N: int, n_c: int):
    d = model.dim
    if (d * d) ** (N + 1) > 2**24:
        raise ValueError("path sum exceeds the brute-force size bound")
    if table.n_c != n_c:
        raise ValueError("table memory depth differs from n_c")
    if table.eta.size < N + 1:
        raise ValueError("table does not cover N steps")
    U = scipy.linalg.expm(-1j * np.asarray(model.H(), dtype=complex) * table.dt)
    Ut = np.einsum("ik,jl->ijkl", U, U.conj()).reshape(d * d, d * d)
    kappa = np.asarray(model.coupling, dtype=float)
    ki = np.repeat(kappa, d)  # kappa_i for j = i*d + i'
    kip = np.tile(kappa, d)

    def eta_eff(lag: int, n: int) -> complex:
        if lag < n_c:
            return complex(table.eta[lag])
        return complex(table.eta[n_c] + sum(table.eta[k] for k in range(n_c + 1, n)))

    def log_weight(jn, jm, lag, n):
        e = eta_eff(lag, n)
        return -(ki[jn] - kip[jn]) * (e * ki[jm] - np.conj(e) * kip[jm])

    return d, Ut, np.asarray(rho0, dtype=complex).reshape(-1), log_weight


def _paths_by_enumeration(model, table, rho0, N, n_c):
    d, Ut, r0, log_weight = _path_setup(model, table, rho0, N, n_c)
    d2 = d * d
    out = [r0.reshape(d, d).copy()]
    for n_final in range(1, N + 1):
        paths = np.array(list(itertools.product(range(d2), repeat=n_final + 1)))
        amp = r0[paths[:, 0]].copy()
        logw = np.zeros(paths.shape[0], dtype=complex)
        for n in range(1, n_final + 1):
            amp *= Ut[paths[:, n], paths[:, n - 1]]
            for lag in range(0, min(n - 1, n_c) + 1):
                logw += log_weight(paths[:, n], paths[:, n - lag], lag, n)
        vals = amp * np.exp(logw)
        rho = np.zeros(d2, dtype=complex)
        np.add.at(rho, paths[:, -1], vals)
        out.append(rho.reshape(d, d))
    return out


def _paths_by_dense_tensor(model, table, rho0, N, n_c):
    # keep the full history tensor over j_0 .. j_n and sum the final legs at readout
    d, Ut, r0, log_weight = _path_setup(model, table, rho0, N, n_c)
    d2 = d * d
    out = [r0.reshape(d, d).copy()]
    A = r0.copy()  # axes j_0 .. j_n
    for n in range(1, N + 1):
        A = np.tensordot(A, np.ones(d2), axes=0)  # new axis j_n
        grids = np.indices(A.shape)
        w = Ut[grids[n], grids[n - 1]]
        logw = np.zeros(A.shape, dtype=complex)
        for lag in range(0, min(n - 1, n_c) + 1):
            logw += log_weight(grids[n], grids[n - lag], lag, n)
        A = A * w * np.exp(logw)
        out.append(A.reshape(-1, d2).sum(axis=0).reshape(d, d))
    return out


def brute_force_path_sum(model, table, rho0, N: int, n_c: int, method: str = "paths") -> list[np.ndarray]:
    """Reduced states ``rho(t_0) .. rho(t_N)`` from the explicit sum over index paths.

    ``method="paths"`` enumerates every path separately; ``method="dense"``
    grows the full history tensor one time index at a time.
    """
    if method == "paths":
        return _paths_by_enumeration(model, table, rho0, N, n_c)
    if method == "dense":
        return _paths_by_dense_tensor(model, table, rho0, N, n_c)
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class DenseEvolution:
    """Dense feedback evolution.

    ``final`` has one axis per subsystem in creation order: the ``n_d``
    initial bins, the emitter, then one bin per step.
    """

    system: list
    traces: list
    final: np.ndarray


def dense_liouville_evolution(cfg, steps: int, rho_sys0, gate: np.ndarray | None = None) -> DenseEvolution:
    """Apply the per-step feedback gate on the full product Liouville space."""
    D2 = (cfg.n_ph + 1) ** 2
    rho_sys0 = np.asarray(rho_sys0, dtype=complex)
    d2 = rho_sys0.size
    if d2 * D2 ** (cfg.n_d + steps) > 2**20:
        raise ValueError("dense evolution exceeds the size bound")
    if gate is None:
        from .feedback import build_step_generator, step_gate

        gate = step_gate(build_step_generator(cfg), cfg.order)
    g = gate.reshape(D2, d2, D2, D2, d2, D2)
    vac = np.zeros(D2, dtype=complex)
    vac[0] = 1.0
    A = rho_sys0.reshape(-1)
    for _ in range(cfg.n_d):
        A = np.multiply.outer(vac, A)
    tr_bin = np.eye(cfg.n_ph + 1).reshape(-1)
    d = int(round(math.sqrt(d2)))
    sys_axis = cfg.n_d

    def reduce(A):
        covs = [tr_bin] * A.ndim
        covs[sys_axis] = None
        out = A
        for ax in range(A.ndim - 1, -1, -1):
            if covs[ax] is not None:
                out = np.tensordot(out, covs[ax], axes=(ax, 0))
        return out.reshape(d, d)

    system = [reduce(A)]
    traces = [complex(np.trace(system[0]))]
    for n in range(1, steps + 1):
        A = np.multiply.outer(A, vac)
        mem = n - 1 if n <= cfg.n_d else n
        present = A.ndim - 1
        A = np.tensordot(g, A, axes=([3, 4, 5], [mem, sys_axis, present]))
        A = np.moveaxis(A, [0, 1, 2], [mem, sys_axis, present])
        system.append(reduce(A))
        traces.append(complex(np.trace(system[-1])))
    return DenseEvolution(system, traces, A)
