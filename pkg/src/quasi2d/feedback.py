"""Time-bin matrix product state for coherent quantum feedback in Liouville space.

Every site is the Liouville-space factor of one subsystem: a photon time
bin (truncated at ``n_ph`` photons) or the emitter.  The chain reads
``[processed bins, memory bins, system]`` with the oldest bin on the left.
Per step a vacuum bin is created right of the system, a three-site gate
acts on ``(current memory bin, system, present bin)`` and the present bin
is moved left of the system where it waits ``n_d`` steps to become a
memory bin.

Convention: the emitter couples to the present bin and to the bin emitted
one round trip earlier through ``sigma_10 (b_now - exp(2 pi i phi) b_mem)``
plus the hermitian conjugate.  This yields the amplitude equation
``c' = -G c + G exp(2 pi i phi) c(t - tau)`` whose bound state traps
population at integer ``phi``.  The phase sign is the one for which an
energy shift ``delta`` of the excited state (for instance a polaron shift
from the phonon half-step) acts as ``phi -> phi + delta tau / 2 pi``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .bath import check_density_matrix
from .tensor import MatrixProductState, TruncationPolicy, _truncated_svd
from .timeseries import TimeSeries

__all__ = [
    "FeedbackConfig",
    "StepLiouvillian",
    "TimeBinMps",
    "build_step_generator",
    "taylor_step",
    "step_gate",
    "init",
    "step",
    "expectation",
    "reduced_system",
    "total_excitation",
    "run",
    "cutoff_sensitivity",
    "trace_covector",
    "commutator_superoperator",
    "bin_annihilator",
]

SIGMA_10 = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)  # |1><0|
SIGMA_11 = np.array([[0.0, 0.0], [0.0, 1.0]], dtype=complex)


@dataclass(frozen=True)
class FeedbackConfig:
    """Emitter in front of a mirror, discretized into ``n_d`` bins per round trip.

    ``Gamma`` is the amplitude decay rate (population decays at ``2 Gamma``
    before the first round trip), ``phi = omega_0 tau / 2 pi`` the feedback
    phase and ``gamma`` a pure-dephasing rate acting on the emitter.
    """

    Gamma: float
    tau: float
    n_d: int
    phi: float = 0.0
    gamma: float = 0.0
    n_ph: int = 1
    order: int = 10
    policy: TruncationPolicy = field(default_factory=TruncationPolicy)
    swap_policy: TruncationPolicy | None = None

    def __post_init__(self):
        if self.Gamma < 0 or self.gamma < 0:
            raise ValueError("rates must be >= 0")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.n_d < 1 or self.n_ph < 1 or self.order < 1:
            raise ValueError("n_d, n_ph and order must be >= 1")

    @property
    def dt(self) -> float:
        return self.tau / self.n_d

    @property
    def omega_0(self) -> float:
        return 2.0 * math.pi * self.phi / self.tau

    @property
    def bin_dim(self) -> int:
        return self.n_ph + 1


def bin_annihilator(n_ph: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n_ph + 1, dtype=float)), k=1).astype(complex)


def trace_covector(dim: int) -> np.ndarray:
    """Liouville covector ``vec(1)``: contracting it takes the trace of that factor."""
    return np.eye(dim, dtype=complex).reshape(-1)


def _factorwise(S: np.ndarray, dims: tuple[int, ...]) -> np.ndarray:
    """Reorder a superoperator from ``vec(rho)`` of the product space to per-factor Liouville pairs."""
    k = len(dims)
    perm = [x for f in range(k) for x in (f, k + f)]
    shape = dims + dims
    T = S.reshape(shape + shape)
    T = np.transpose(T, perm + [2 * k + p for p in perm])
    n = int(np.prod(dims)) ** 2
    return T.reshape(n, n)


def commutator_superoperator(H: np.ndarray, dims: tuple[int, ...] | None = None) -> np.ndarray:
    """``-i [H, .]`` on row-major ``vec(rho)``; per-factor pairs if ``dims`` is given."""
    H = np.asarray(H, dtype=complex)
    one = np.eye(H.shape[0])
    S = -1j * (np.kron(H, one) - np.kron(one, H.T))
    return S if dims is None else _factorwise(S, tuple(dims))


def _dephasing_superoperator(rate: float, d: int = 2) -> np.ndarray:
    # (rate/2)(2 s rho s - s rho - rho s) with s = sigma_11, row-major vec
    s = SIGMA_11
    one = np.eye(d)
    return 0.5 * rate * (2 * np.kron(s, s.T) - np.kron(s, one) - np.kron(one, s.T))


@dataclass(frozen=True)
class StepLiouvillian:
    """Dimensionless one-step generator on ``(memory bin, system, present bin)``.

    ``coherent`` is the exchange with both bins, ``dissipative`` the
    dephasing of the emitter integrated over one step.  ``matrix`` is their
    sum.
    """

    coherent: np.ndarray
    dissipative: np.ndarray
    dims: tuple[int, int, int]

    @property
    def matrix(self) -> np.ndarray:
        return self.coherent + self.dissipative


def build_step_generator(cfg: FeedbackConfig) -> StepLiouvillian:
    D, d = cfg.bin_dim, 2
    dims = (D, d, D)
    b = bin_annihilator(cfg.n_ph)
    eb = np.eye(D)
    # exact single-excitation decay over one step: cos(sqrt(2) c) = exp(-Gamma dt)
    c = math.acos(math.exp(-cfg.Gamma * cfg.dt)) / math.sqrt(2.0)
    phase = complex(math.cos(2 * math.pi * cfg.phi), math.sin(2 * math.pi * cfg.phi))
    A = np.kron(np.kron(eb, SIGMA_10), b) - phase * np.kron(np.kron(b, SIGMA_10), eb)
    H = c * (A + A.conj().T)
    coherent = commutator_superoperator(H, dims)
    deph = _dephasing_superoperator(cfg.gamma * cfg.dt, d)
    dissipative = np.kron(np.kron(np.eye(D * D), deph), np.eye(D * D))
    return StepLiouvillian(coherent, dissipative, dims)


def taylor_step(G, order: int) -> np.ndarray:
    """Truncated exponential series ``sum_{m <= order} G^m / m!``."""
    if order < 1:
        raise ValueError("order must be >= 1")
    G = G.matrix if isinstance(G, StepLiouvillian) else np.asarray(G, dtype=complex)
    out = np.eye(G.shape[0], dtype=complex)
    term = out
    for m in range(1, order + 1):
        term = term @ G / m
        out = out + term
    return out


def step_gate(gen: StepLiouvillian, order: int) -> np.ndarray:
    """One-step map: series-expanded exchange followed by exact emitter dephasing.

    The dephasing part is diagonal, so its exponential is taken exactly; with
    this splitting populations before the first round trip do not depend on
    the dephasing rate.
    """
    return np.diag(np.exp(np.diag(gen.dissipative))) @ taylor_step(gen.coherent, order)


@dataclass
class TimeBinMps:
    """Chain of Liouville-space bins and the emitter.

    ``sys_pos`` is the emitter site and ``mem_pos`` the bin that interacts
    with the emitter in the next step.  Sites left of ``mem_pos`` are
    processed and never change again; their trace is cached in ``_left``.
    """

    mps: MatrixProductState
    sys_pos: int
    mem_pos: int
    n: int = 0
    _left: np.ndarray | None = field(default=None, repr=False)
    _left_upto: int = field(default=0, repr=False)

    def copy(self) -> "TimeBinMps":
        return TimeBinMps(self.mps.copy(), self.sys_pos, self.mem_pos, self.n, self._left, self._left_upto)

    @property
    def link_dim(self) -> int:
        """Bond between the emitter and its left (feedback) neighbour."""
        return self.mps.sites[self.sys_pos].shape[0]

    def left_environment(self) -> np.ndarray:
        """Trace over sites ``0 .. mem_pos - 1`` as a row vector over the bond."""
        if self._left is None:
            self._left, self._left_upto = np.ones((1, 1), dtype=complex), 0
        while self._left_upto < self.mem_pos:
            s = self.mps.sites[self._left_upto]
            tr = trace_covector(int(round(math.sqrt(s.shape[1]))))
            self._left = self._left @ np.tensordot(s, tr, axes=(1, 0))
            self._left_upto += 1
        return self._left


def init(rho_sys0, cfg: FeedbackConfig) -> TimeBinMps:
    rho = check_density_matrix(rho_sys0)
    vac = np.zeros(cfg.bin_dim**2, dtype=complex)
    vac[0] = 1.0
    mps = MatrixProductState.product([vac] * cfg.n_d + [rho.reshape(-1)])
    mps.center = cfg.n_d
    return TimeBinMps(mps, sys_pos=cfg.n_d, mem_pos=0)


def _apply_three_site(mps: MatrixProductState, k: int, gate: np.ndarray, policy: TruncationPolicy):
    """Apply ``gate`` to sites ``k, k+1, k+2`` and split with truncation; center ends at ``k+2``."""
    if mps.center is None or not k <= mps.center <= k + 2:
        mps._move_center(k + 1 if mps.center is None else min(max(mps.center, k), k + 2))
    a, b, c = mps.sites[k : k + 3]
    theta = np.tensordot(np.tensordot(a, b, axes=(2, 0)), c, axes=(3, 0))
    l, pa, pb, pc, r = theta.shape
    theta = np.tensordot(gate.reshape(pa, pb, pc, pa, pb, pc), theta, axes=([3, 4, 5], [1, 2, 3]))
    theta = np.transpose(theta, (3, 0, 1, 2, 4))
    u, s, vh, disc1 = _truncated_svd(theta.reshape(l * pa, pb * pc * r), policy)
    mps.sites[k] = u.reshape(l, pa, s.size)
    rest = (s[:, None] * vh).reshape(s.size * pb, pc * r)
    u2, s2, vh2, disc2 = _truncated_svd(rest, policy)
    mps.sites[k + 1] = u2.reshape(s.size, pb, s2.size)
    mps.sites[k + 2] = (s2[:, None] * vh2).reshape(s2.size, pc, r)
    mps.center = k + 2
    mps.discarded_weight += disc1 + disc2


def step(
    state: TimeBinMps,
    gate: np.ndarray,
    policy: TruncationPolicy,
    n_ph: int = 1,
    swap_policy: TruncationPolicy | None = None,
) -> TimeBinMps:
    """One feedback step; sites right of the emitter are passed through untouched.

    ``swap_policy`` governs the SVDs of the bin swaps and defaults to ``policy``.
    """
    swap_policy = policy if swap_policy is None else swap_policy
    out = state.copy()
    mps = out.mps
    D2 = (n_ph + 1) ** 2
    s, m = out.sys_pos, out.mem_pos
    # present bin in vacuum, delta on the bond to any tail on the right
    r = mps.sites[s].shape[2]
    vac = np.zeros(D2, dtype=complex)
    vac[0] = 1.0
    mps._insert(s + 1, np.einsum("ab,p->apb", np.eye(r), vac))
    for k in range(m, s - 1):
        mps._swap(k, swap_policy, center_right=True)
    _apply_three_site(mps, s - 1, gate, policy)
    for k in range(s - 2, m - 1, -1):
        mps._swap(k, swap_policy, center_right=False)
    # emitter moves right past the new bin
    mps._swap(s, swap_policy, center_right=True)
    out.sys_pos, out.mem_pos, out.n = s + 1, m + 1, out.n + 1
    if mps.center < out.mem_pos:
        mps._move_center(out.sys_pos)
    return out


def _site_dim(site: np.ndarray) -> int:
    return int(round(math.sqrt(site.shape[1])))


def _trace_right(mps: MatrixProductState, start: int, right_covectors=None) -> np.ndarray:
    env = np.ones((1, 1), dtype=complex)
    for k in range(len(mps) - 1, start - 1, -1):
        site = mps.sites[k]
        cov = None if right_covectors is None else right_covectors(k)
        if cov is None:
            cov = trace_covector(_site_dim(site))
        env = np.tensordot(site, cov, axes=(1, 0)) @ env
    return env


def expectation(state: TimeBinMps, observable: np.ndarray, site: int | None = None, right_covectors=None) -> complex:
    """``Tr(O rho)`` for ``O`` acting on one site (default: the emitter).

    ``right_covectors(k)`` may supply the functional for sites right of the
    emitter that are not bins (for instance path-summed history legs).
    """
    site = state.sys_pos if site is None else site
    if not 0 <= site < len(state.mps):
        raise IndexError(f"site {site} outside chain of length {len(state.mps)}")
    observable = np.asarray(observable, dtype=complex)
    cov_o = observable.T.reshape(-1)
    mps = state.mps
    if site >= state.mem_pos:
        env = state.left_environment()
        start = state.mem_pos
    else:
        env, start = np.ones((1, 1), dtype=complex), 0
    for k in range(start, state.sys_pos + 1):
        cov = cov_o if k == site else trace_covector(_site_dim(mps.sites[k]))
        env = env @ np.tensordot(mps.sites[k], cov, axes=(1, 0))
    right_start = state.sys_pos + 1
    if site > state.sys_pos:
        def wrapped(k, base=right_covectors):
            if k == site:
                return cov_o
            return None if base is None else base(k)
        right = _trace_right(mps, right_start, wrapped)
    else:
        right = _trace_right(mps, right_start, right_covectors)
    return complex((env @ right)[0, 0])


def reduced_system(state: TimeBinMps, right_covectors=None) -> np.ndarray:
    """Emitter density matrix with every other site traced out."""
    mps = state.mps
    env = state.left_environment()
    for k in range(state.mem_pos, state.sys_pos):
        env = env @ np.tensordot(mps.sites[k], trace_covector(_site_dim(mps.sites[k])), axes=(1, 0))
    right = _trace_right(mps, state.sys_pos + 1, right_covectors)
    vec = np.einsum("xl,lpr,ry->p", env, mps.sites[state.sys_pos], right)
    d = _site_dim(mps.sites[state.sys_pos])
    return vec.reshape(d, d)


def total_excitation(state: TimeBinMps, n_ph: int = 1, right_covectors=None) -> float:
    """``<sigma_11>`` plus the photon number summed over every bin."""
    num = np.diag(np.arange(n_ph + 1, dtype=complex))
    total = expectation(state, SIGMA_11, right_covectors=right_covectors).real
    for k in range(state.sys_pos):
        total += expectation(state, num, site=k, right_covectors=right_covectors).real
    return total


def run(cfg: FeedbackConfig, steps: int, rho_sys0=None) -> TimeSeries:
    if rho_sys0 is None:
        rho_sys0 = SIGMA_11
    gate = step_gate(build_step_generator(cfg), cfg.order)
    state = init(rho_sys0, cfg)
    records = [(reduced_system(state), state.link_dim, state.mps.max_bond, 0.0)]
    for _ in range(steps):
        state = step(state, gate, cfg.policy, cfg.n_ph, cfg.swap_policy)
        records.append((reduced_system(state), state.link_dim, state.mps.max_bond, state.mps.discarded_weight))
    return TimeSeries.collect(cfg.dt, records)


def cutoff_sensitivity(cfg: FeedbackConfig, steps: int, rho_sys0=None) -> float:
    """Largest ``<sigma_11>`` difference between photon cutoffs ``n_ph`` and ``n_ph + 1``."""
    a = run(cfg, steps, rho_sys0)
    b = run(replace(cfg, n_ph=cfg.n_ph + 1), steps, rho_sys0)
    return float(np.max(np.abs(a.rho11 - b.rho11)))
