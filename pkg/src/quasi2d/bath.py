"""Phonon bath: spectral densities, correlation function, memory coefficients.

Frequencies are angular frequencies in ps^-1 with hbar = 1; temperatures in
kelvin enter only through ``hbar*omega / (k_B*T)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.constants
import scipy.linalg

__all__ = [
    "HBAR_OVER_KB",
    "ParametricSpectralDensity",
    "GaAsSpectralDensity",
    "SpectralDensity",
    "CorrelationKernel",
    "EtaTable",
    "SystemModel",
    "spectral_density_value",
    "thermal_factor",
    "correlation_phi",
    "eta_coefficients",
    "influence_factor",
    "influence_matrix",
    "system_propagator",
    "liouville_propagator",
    "check_density_matrix",
]

#: hbar / k_B in K*ps
HBAR_OVER_KB = scipy.constants.hbar / scipy.constants.k * 1e12

_M_E = scipy.constants.m_e
_EV = scipy.constants.electron_volt
_HBAR = scipy.constants.hbar


@dataclass(frozen=True)
class ParametricSpectralDensity:
    """``J(w) = 2 alpha w^s w_c^(1-s) exp(-(w/w_c)^p)``.

    ``p = 1`` gives an exponential cutoff, ``p = 2`` a Gaussian one.
    """

    alpha: float
    s: float = 1.0
    omega_c: float = 1.0
    p: int = 1
    kind: str = field(default="parametric", init=False)

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.omega_c <= 0 or self.s <= 0:
            raise ValueError("omega_c and s must be positive")
        if self.p not in (1, 2):
            raise ValueError("cutoff form p must be 1 (exponential) or 2 (gaussian)")

    def __call__(self, w):
        w = np.asarray(w, dtype=float)
        x = w / self.omega_c
        return 2.0 * self.alpha * w**self.s * self.omega_c ** (1.0 - self.s) * np.exp(-(x**self.p))

    @property
    def scale(self) -> float:
        return self.omega_c


@dataclass(frozen=True)
class GaAsSpectralDensity:
    """Deformation-potential coupling of a confined exciton to bulk LA phonons.

    ``g^ii_q = sqrt(hbar q / (2 rho c_s)) D_i exp(-hbar q^2 / (4 m_i w_i))`` and
    ``J(w) = 4 pi q^2 (g^22_q - g^11_q)^2 / c_s`` at ``q = w / c_s``.

    Units: deformation potentials in eV, masses in electron masses,
    confinement energies in meV, density in kg/m^3, sound velocity in m/s.
    The default values are a typical literature set and are illustrative
    only.
    """

    D1: float = -14.6
    D2: float = -4.8
    m1: float = 0.067
    m2: float = 0.45
    hbar_omega1: float = 30.0
    hbar_omega2: float = 10.0
    rho_m: float = 5370.0
    c_s: float = 5110.0
    kind: str = field(default="gaas_bulk", init=False)

    def __post_init__(self):
        for name in ("m1", "m2", "hbar_omega1", "hbar_omega2", "rho_m", "c_s"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.D1 == 0 and self.D2 == 0:
            raise ValueError("at least one deformation potential must be nonzero")

    def coupling(self, q):
        """``(g^11_q, g^22_q)`` in s^-1 m^(3/2) for wave numbers ``q`` in m^-1."""
        q = np.asarray(q, dtype=float)
        pref = np.sqrt(_HBAR * q / (2.0 * self.rho_m * self.c_s)) / _HBAR
        out = []
        for d, m, hw in ((self.D1, self.m1, self.hbar_omega1), (self.D2, self.m2, self.hbar_omega2)):
            omega_i = hw * 1e-3 * _EV / _HBAR
            out.append(pref * d * _EV * np.exp(-_HBAR * q**2 / (4.0 * m * _M_E * omega_i)))
        return out[0], out[1]

    def __call__(self, w):
        w = np.asarray(w, dtype=float)
        q = w * 1e12 / self.c_s
        g11, g22 = self.coupling(q)
        # J in s^-1, returned in ps^-1
        return 4.0 * np.pi * q**2 * (g22 - g11) ** 2 / self.c_s * 1e-12

    @property
    def scale(self) -> float:
        m = min(self.m1 * self.hbar_omega1, self.m2 * self.hbar_omega2)
        q0 = np.sqrt(4.0 * m * _M_E * 1e-3 * _EV) / _HBAR
        return float(q0 * self.c_s * 1e-12)


SpectralDensity = ParametricSpectralDensity | GaAsSpectralDensity


def spectral_density_value(J: SpectralDensity, omega) -> np.ndarray:
    """Evaluate ``J`` at angular frequency ``omega`` (ps^-1, must be >= 0)."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0):
        raise ValueError("spectral density is defined for omega >= 0 only")
    return J(omega)


def thermal_factor(omega, temperature: float) -> np.ndarray:
    """``coth(hbar w / 2 k_B T)``; identically 1 at ``T = 0``."""
    omega = np.asarray(omega, dtype=float)
    if temperature < 0:
        raise ValueError("temperature must be >= 0")
    if temperature == 0:
        return np.ones_like(omega)
    x = omega * HBAR_OVER_KB / (2.0 * temperature)
    with np.errstate(divide="ignore"):
        return np.where(x > 0, 1.0 / np.tanh(np.maximum(x, 1e-300)), np.inf)


def _gauss_legendre(a: float, b: float, n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


@dataclass(frozen=True)
class CorrelationKernel:
    """Bath autocorrelation settings.

    Parameters
    ----------
    spectral_density : SpectralDensity
    temperature : float
        Kelvin.
    omega_max : float, optional
        Upper frequency bound of the quadrature; found automatically as the
        point beyond which ``J * coth`` stays below ``1e-12`` of its peak.
    n_nodes : int
        Total Gauss-Legendre nodes on ``[0, omega_max]`` (composite rule of
        ``panel_order`` points per panel).
    """

    spectral_density: SpectralDensity
    temperature: float = 0.0
    omega_max: float | None = None
    n_nodes: int = 4096
    panel_order: int = 16

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.n_nodes < self.panel_order or self.n_nodes % self.panel_order:
            raise ValueError("n_nodes must be a positive multiple of panel_order")

    def weighted(self, w) -> np.ndarray:
        """``J(w) coth(w / 2T)`` with the removable point ``w = 0`` set to 0."""
        w = np.asarray(w, dtype=float)
        j = self.spectral_density(w)
        with np.errstate(invalid="ignore"):
            out = j * thermal_factor(w, self.temperature)
        return np.where(w > 0, out, 0.0)

    @cached_property
    def upper_frequency(self) -> float:
        if self.omega_max is not None:
            return float(self.omega_max)
        return _find_omega_max(self.weighted, self.spectral_density.scale)

    @cached_property
    def nodes(self):
        """Composite Gauss-Legendre nodes and weights on ``[0, omega_max]``."""
        n_panels = self.n_nodes // self.panel_order
        edges = np.linspace(0.0, self.upper_frequency, n_panels + 1)
        x, w = np.polynomial.legendre.leggauss(self.panel_order)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        omega = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        weights = (half[:, None] * w[None, :]).ravel()
        return omega, weights

    @cached_property
    def quadrature(self):
        """Nodes, weights, ``J`` and ``J coth`` on the nodes."""
        omega, weights = self.nodes
        return omega, weights, self.spectral_density(omega), self.weighted(omega)


def _find_omega_max(f, scale: float, rel: float = 1e-12) -> float:
    hi = max(scale, 1e-6)
    grid = np.linspace(0.0, hi, 4001)[1:]
    vals = f(grid)
    # grow the window until the tail is well below the peak
    while vals[-1] > rel * max(vals.max(), 1e-300) or np.argmax(vals) > 0.5 * grid.size:
        hi *= 2.0
        grid = np.linspace(0.0, hi, 4001)[1:]
        vals = f(grid)
        if hi > 1e6 * scale:
            raise ValueError("spectral density does not decay; cannot choose omega_max")
    peak = vals.max()
    if peak == 0.0:
        return hi
    above = np.nonzero(vals >= rel * peak)[0]
    return float(grid[min(above[-1] + 1, grid.size - 1)] * 1.05)


def correlation_phi(kernel: CorrelationKernel, t) -> np.ndarray:
    """Bath autocorrelation ``phi(t) = int dw J [coth cos(wt) - i sin(wt)]``."""
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise ValueError("t must be finite")
    omega, weights, j, jc = kernel.quadrature
    phase = np.multiply.outer(t, omega)
    return np.cos(phase) @ (weights * jc) - 1j * (np.sin(phase) @ (weights * j))


@dataclass(frozen=True)
class EtaTable:
    """Discretized memory coefficients and improved-memory tails.

    ``eta[k]`` couples time bins ``k`` steps apart (``k = 0`` is the
    intra-bin term).  ``tail[n]`` is the sum of ``eta`` over lags
    ``n_c+1 .. n-1`` that gets folded into the boundary lag at step ``n``.
    """

    dt: float
    eta: np.ndarray
    n_c: int
    tail: np.ndarray

    @property
    def n_steps(self) -> int:
        return self.eta.size - 1

    def effective(self, lag: int, n: int) -> complex:
        """Coefficient used at ``lag`` during step ``n`` (boundary lag carries the tail)."""
        if not 0 <= lag <= self.n_c:
            raise ValueError(f"lag {lag} outside memory window [0, {self.n_c}]")
        if lag < self.n_c:
            return complex(self.eta[lag])
        return complex(self.eta[self.n_c] + self.tail[n])

    @classmethod
    def from_eta(cls, dt: float, eta, n_c: int) -> "EtaTable":
        eta = np.asarray(eta, dtype=complex)
        n = eta.size - 1
        if not 1 <= n_c:
            raise ValueError("n_c must be >= 1")
        tail = np.zeros(n + 1, dtype=complex)
        for step in range(n_c + 2, n + 1):
            tail[step] = tail[step - 1] + eta[step - 1]
        return cls(dt=dt, eta=eta, n_c=n_c, tail=tail)


def eta_coefficients(
    kernel: CorrelationKernel, dt: float, N: int, n_c: int, cell_nodes: int = 32
) -> EtaTable:
    """Build ``eta_0 .. eta_N`` by Gauss-Legendre integration of ``phi`` over each cell.

    Off-diagonal cells (lag ``k >= 1``) are the full ``dt x dt`` squares; the
    diagonal cell is the time-ordered triangle ``t' < t`` mapped onto a
    square.  Both use a ``cell_nodes x cell_nodes`` tensor rule.  Because
    ``phi`` is itself a frequency quadrature, the cell sums are reordered to
    run over frequency last; the discrete sum is the same.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if N < 1 or not 1 <= n_c:
        raise ValueError("need N >= 1 and n_c >= 1")
    omega, weights, j, jc = kernel.quadrature
    x, wx = _gauss_legendre(0.0, dt, cell_nodes)
    v, wv = _gauss_legendre(0.0, 1.0, cell_nodes)

    # square cell: sum_ab w_a w_b exp(i w (x_a - x_b)) = |sum_a w_a exp(i w x_a)|^2
    a_sq = np.abs(np.exp(1j * np.outer(omega, x)) @ wx) ** 2
    # triangle: t = x_a, t' = x_a v_b, Jacobian x_a
    u = np.outer(x, 1.0 - v)
    wt = np.outer(wx * x, wv)
    b_tri = np.exp(1j * omega[:, None, None] * u[None]).reshape(omega.size, -1) @ wt.ravel()

    eta = np.empty(N + 1, dtype=complex)
    eta[0] = np.sum(weights * (jc * b_tri.real - 1j * j * b_tri.imag))
    lags = np.arange(1, N + 1) * dt
    phase = np.outer(lags, omega)
    eta[1:] = np.cos(phase) @ (weights * jc * a_sq) - 1j * (np.sin(phase) @ (weights * j * a_sq))
    return EtaTable.from_eta(dt, eta, n_c)


@dataclass(frozen=True)
class SystemModel:
    """Few-level system with a diagonal bath-coupling operator.

    ``coupling`` lists the eigenvalues of the coupling operator in the
    computational basis (``(0, 1)`` for ``sigma_11``).  For two levels the
    Hamiltonian is ``omega_0 sigma_11 + Omega_0 (sigma_01 + sigma_10)``;
    other dimensions need an explicit ``hamiltonian``.
    """

    coupling: tuple[float, ...] = (0.0, 1.0)
    omega_0: float = 0.0
    Omega_0: float = 0.0
    hamiltonian: np.ndarray | None = None

    def __post_init__(self):
        if len(self.coupling) < 2:
            raise ValueError("system dimension must be >= 2")
        if self.hamiltonian is None and len(self.coupling) != 2:
            raise ValueError("explicit hamiltonian required for dimension != 2")
        if self.hamiltonian is not None and np.shape(self.hamiltonian) != (self.dim, self.dim):
            raise ValueError("hamiltonian shape does not match coupling length")

    @property
    def dim(self) -> int:
        return len(self.coupling)

    @property
    def kappa(self) -> np.ndarray:
        return np.asarray(self.coupling, dtype=float)

    def H(self) -> np.ndarray:
        if self.hamiltonian is not None:
            return np.asarray(self.hamiltonian, dtype=complex)
        return np.array([[0.0, self.Omega_0], [self.Omega_0, self.omega_0]], dtype=complex)


def influence_factor(table: EtaTable, lag: int, j: int, jp: int, n: int, kappa) -> complex:
    """Single influence-functional factor between Liouville indices at two times.

    ``j`` labels the later time, ``jp`` the earlier one, both packed as
    ``i * d + i'``.
    """
    kappa = np.asarray(kappa, dtype=float)
    d = kappa.size
    if not (0 <= j < d * d and 0 <= jp < d * d):
        raise ValueError("Liouville index out of range")
    eta = table.effective(lag, n)
    i, ip = divmod(j, d)
    m, mp = divmod(jp, d)
    return complex(np.exp(-(kappa[i] - kappa[ip]) * (eta * kappa[m] - np.conj(eta) * kappa[mp])))


def influence_matrix(table: EtaTable, lag: int, n: int, kappa) -> np.ndarray:
    """All factors of one lag as a ``(d^2, d^2)`` array ``F[j_later, j_earlier]``."""
    kappa = np.asarray(kappa, dtype=float)
    eta = table.effective(lag, n)
    diff = np.subtract.outer(kappa, kappa).ravel()  # kappa_i - kappa_i'
    left = np.repeat(kappa, kappa.size)  # kappa_m for jp = m*d + m'
    right = np.tile(kappa, kappa.size)
    return np.exp(-np.outer(diff, eta * left - np.conj(eta) * right))


def system_propagator(model: SystemModel, dt: float) -> np.ndarray:
    """``M = exp(-i H dt)``; closed form for two levels."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if model.hamiltonian is not None:
        return scipy.linalg.expm(-1j * model.H() * dt)
    # H = w0/2 (1 - sz) + W0 sx = w0/2 + b.sigma with b = (W0, 0, -w0/2)
    b = np.array([model.Omega_0, 0.0, -0.5 * model.omega_0])
    nb = np.linalg.norm(b)
    out = np.eye(2, dtype=complex) * np.cos(nb * dt)
    if nb > 0:
        bs = np.array([[b[2], b[0]], [b[0], -b[2]]], dtype=complex) / nb
        out = out - 1j * np.sin(nb * dt) * bs
    return np.exp(-0.5j * model.omega_0 * dt) * out


def liouville_propagator(M: np.ndarray) -> np.ndarray:
    """``Mt[(i,i'), (k,k')] = M[i,k] conj(M[i',k'])`` so that ``vec(M rho M^dag) = Mt vec(rho)``."""
    return np.kron(M, M.conj())


def check_density_matrix(rho, tol: float = 1e-10) -> np.ndarray:
    """Return ``rho`` as a complex array after checking it is a density matrix."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("density matrix must be square")
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise ValueError("density matrix is not hermitian")
    if abs(np.trace(rho) - 1.0) > tol:
        raise ValueError(f"density matrix trace is {np.trace(rho).real:.3g}, expected 1")
    if np.min(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))) < -tol:
        raise ValueError("density matrix is not positive semidefinite")
    return rho
