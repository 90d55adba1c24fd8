import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quasi2d import feedback as fb
from quasi2d import oracles
from quasi2d.bath import CorrelationKernel, EtaTable, ParametricSpectralDensity, SystemModel


def test_report_figures():
    rep = oracles.OracleReport.compare([0, 1], [1.0, 2.0], [1.1, 2.0])
    assert rep.max_abs == pytest.approx(0.1)
    assert rep.max_rel == pytest.approx(0.1)
    with pytest.raises(ValueError):
        oracles.OracleReport.compare([0, 1], [1.0], [1.0, 2.0])


@pytest.mark.parametrize("alpha,wc", [(0.1, 2.0), (0.03, 5.0)])
def test_ibm_zero_temperature_closed_form(alpha, wc):
    # Ohmic, exponential cutoff, T = 0: |rho01| decays as alpha ln(1 + wc^2 t^2)
    kernel = CorrelationKernel(ParametricSpectralDensity(alpha, 1.0, wc, 1), 0.0)
    t = np.linspace(0.0, 5.0, 11)
    r = oracles.ibm_analytic(kernel, 0.5j, t) / 0.5j
    assert np.allclose(-np.log(np.abs(r)), alpha * np.log1p((wc * t) ** 2), atol=1e-9)
    assert np.allclose(np.angle(r), -2 * alpha * (wc * t - np.arctan(wc * t)), atol=1e-9)


def test_ibm_hotter_bath_dephases_faster():
    J = ParametricSpectralDensity(0.05, 3.0, 2.0, 2)
    t = np.linspace(0.5, 5.0, 10)
    cold = np.abs(oracles.ibm_analytic(CorrelationKernel(J, 4.0), 0.5, t))
    hot = np.abs(oracles.ibm_analytic(CorrelationKernel(J, 300.0), 0.5, t))
    assert np.all(hot < cold)
    # super-Ohmic coherence plateaus
    late = oracles.ibm_analytic(CorrelationKernel(J, 77.0), 0.5, [20.0, 40.0])
    assert abs(abs(late[0]) - abs(late[1])) < 1e-6


def test_feedback_amplitude_before_and_at_first_round_trip():
    g, tau = 0.8, 1.5
    t = np.linspace(0, tau, 7)
    c = oracles.feedback_analytic(g, tau, 0.0, t)
    assert np.allclose(c, np.exp(-g * t), atol=1e-13)
    # just after tau the echo adds G (t - tau) e^{-G (t - tau)} times the phase
    s = 0.2
    c2 = oracles.feedback_analytic(g, tau, 0.0, [tau + s])[0]
    assert c2 == pytest.approx(np.exp(-g * (tau + s)) + g * s * np.exp(-g * s), abs=1e-12)


@settings(max_examples=8, deadline=None)
@given(phi=st.floats(0.0, 1.0), gt=st.floats(0.3, 2.0))
def test_two_delay_solvers_agree(phi, gt):
    gamma, tau = gt, 1.0
    _, trace = oracles.delay_steady_state(gamma, tau, phi, steps_per_tau=400, tol=1e-3, return_trace=True)
    t = np.arange(trace.size) * tau / 400
    t = t[t <= 4 * tau]
    exact = oracles.feedback_analytic(gamma, tau, 2 * math.pi * phi / tau, t)
    assert np.max(np.abs(np.abs(trace[: t.size]) ** 2 - np.abs(exact) ** 2)) < 1e-7


@pytest.mark.parametrize("gt", [0.5, 1.08, 3.0])
def test_integer_phase_plateau(gt):
    assert oracles.delay_steady_state(gt, 1.0, 1.0) == pytest.approx(1 / (1 + gt) ** 2, abs=1e-7)


def test_half_integer_phase_decays():
    assert oracles.delay_steady_state(1.0, 1.0, 0.5) < 1e-7


def test_delay_solver_is_fourth_order():
    gamma, phi = 1.2, 0.3
    errs = []
    for m in (20, 40):
        _, trace = oracles.delay_steady_state(gamma, 1.0, phi, steps_per_tau=m, tol=1e-3, return_trace=True)
        t = np.arange(3 * m + 1) / m
        exact = oracles.feedback_analytic(gamma, 1.0, 2 * math.pi * phi, t)
        errs.append(np.max(np.abs(np.abs(trace[: t.size]) - np.abs(exact))))
    assert errs[0] / errs[1] > 12


def test_delay_solver_reports_non_convergence():
    with pytest.raises(oracles.OracleError):
        oracles.delay_steady_state(0.01, 1.0, 0.3, steps_per_tau=10, max_round_trips=5)
    assert oracles.delay_steady_state(0.0, 1.0, 0.3) == 1.0


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n_c=st.integers(1, 3))
def test_path_sum_methods_agree(seed, n_c):
    rng = np.random.default_rng(seed)
    eta = 0.1 * (rng.random(5) + 1j * rng.normal(size=5))
    table = EtaTable.from_eta(0.25, eta, n_c)
    model = SystemModel(Omega_0=0.6)
    rho0 = np.diag([0.0, 1.0]).astype(complex)
    a = oracles.brute_force_path_sum(model, table, rho0, 4, n_c, method="paths")
    b = oracles.brute_force_path_sum(model, table, rho0, 4, n_c, method="dense")
    for x, y in zip(a, b):
        assert np.allclose(x, y, atol=1e-13)


def test_path_sum_size_guard():
    table = EtaTable.from_eta(0.1, np.zeros(20, dtype=complex), 2)
    with pytest.raises(ValueError):
        oracles.brute_force_path_sum(SystemModel(), table, np.diag([1.0, 0.0]), 15, 2)


def test_dense_evolution_trace_and_calibration():
    cfg = fb.FeedbackConfig(Gamma=0.7, tau=0.6, n_d=2, order=20)
    dense = oracles.dense_liouville_evolution(cfg, 2, fb.SIGMA_11)
    for n, rho in enumerate(dense.system):
        assert np.trace(rho).real == pytest.approx(1.0, abs=1e-13)
        assert rho[1, 1].real == pytest.approx(math.exp(-2 * 0.7 * 0.3 * n), abs=1e-12)
