"""End-to-end acceptance checks, one test per criterion.

Each test records its sub-results through the ``acceptance`` fixture; the
terminal summary prints one pass/fail line per criterion.
"""
import time
from dataclasses import replace

import numpy as np
import pytest

from quasi2d import feedback as fb
from quasi2d import junction as jn
from quasi2d import oracles, tempo
from quasi2d.bath import CorrelationKernel, EtaTable, ParametricSpectralDensity, SystemModel, eta_coefficients
from quasi2d.tensor import TruncationPolicy

pytestmark = pytest.mark.slow

RHO_PLUS = np.array([[0.5, 0.5j], [-0.5j, 0.5]])  # rho_01(0) = 0.5i
POLICY = TruncationPolicy(1e-12)

# super-Ohmic, gaussian cutoff; plateaus within a few ps
IBM_J = ParametricSpectralDensity(alpha=0.05, s=3.0, omega_c=2.0, p=2)

# quasi-2D runs: the polaron shift sqrt(pi)/2 * alpha * omega_c moves phi = 1.17 onto an integer
FIG6_J = ParametricSpectralDensity(alpha=0.1435, s=3.0, omega_c=7.0, p=2)
FIG6 = fb.FeedbackConfig(Gamma=0.9, tau=1.2, n_d=4, phi=1.17, order=10, policy=POLICY)
FIG6_NC = 4

INVARIANT_RUNS: dict[str, object] = {}


def _keep(name, ts):
    INVARIANT_RUNS[name] = ts
    return ts


def _quasi2d(temperature, steps, n_c=FIG6_NC, cfg=FIG6, table=None):
    if table is None:
        table = eta_coefficients(CorrelationKernel(FIG6_J, temperature), cfg.dt, steps, n_c)
    tc = tempo.TempoConfig(cfg.dt, n_c, steps, cfg.policy)
    return jn.run_experiment(SystemModel(), None, cfg, tc, steps, table=table)


# -- 1 ------------------------------------------------------------------------


@pytest.mark.parametrize("T", [4.0, 77.0, 300.0])
def test_criterion_1_ibm_analytic(acceptance, T):
    kernel = CorrelationKernel(IBM_J, T)
    cfg = tempo.TempoConfig(dt=0.05, n_c=40, total_steps=200, policy=POLICY)
    start = time.perf_counter()
    ts = _keep(f"ibm-{T:g}K", tempo.run(SystemModel(), kernel, cfg, RHO_PLUS))
    elapsed = time.perf_counter() - start
    ref = oracles.ibm_analytic(kernel, RHO_PLUS[0, 1], ts.time)
    dev = float(np.max(np.abs(ts.rho01 - ref)))
    # decoherence has settled by 5 ps
    settled = abs(abs(ref[100]) - abs(ref[-1])) / abs(ref[-1])
    ok = dev <= 1e-3 and elapsed <= 300 and settled < 1e-3
    acceptance(1, f"T = {T:g} K", ok, f"max|d rho01| = {dev:.2e} (<= 1e-3), plateau drift 5-10 ps {settled:.1e}, {elapsed:.1f} s")
    assert dev <= 1e-3
    assert settled < 1e-3
    assert elapsed <= 300


# -- 2 ------------------------------------------------------------------------


def _random_ohmic_table(rng, N, n_c):
    J = ParametricSpectralDensity(alpha=rng.uniform(0.02, 0.3), s=1.0, omega_c=rng.uniform(1.0, 5.0), p=1)
    kernel = CorrelationKernel(J, rng.uniform(0.0, 100.0))
    return eta_coefficients(kernel, rng.uniform(0.05, 0.4), N, n_c)


def test_criterion_2_brute_force_path_sum(acceptance):
    rng = np.random.default_rng(20240611)
    start = time.perf_counter()
    worst = 0.0
    N = 6
    for n_c in range(1, 5):
        for _ in range(3):
            table = _random_ohmic_table(rng, N, n_c)
            model = SystemModel(Omega_0=rng.uniform(0.0, 1.0), omega_0=rng.uniform(-1.0, 1.0))
            a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
            rho0 = a @ a.conj().T
            rho0 /= np.trace(rho0).real
            ts = tempo.run_with_table(model, table, rho0, N, TruncationPolicy(0.0))
            ref = oracles.brute_force_path_sum(model, table, rho0, N, n_c)
            # every prefix n <= N is itself an N' = n path sum
            worst = max(worst, max(float(np.max(np.abs(ts.rho[n] - ref[n]))) for n in range(N + 1)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-10 and elapsed <= 60
    acceptance(2, "N <= 6, n_c = 1..4", ok, f"max elementwise deviation {worst:.1e} (<= 1e-10), {elapsed:.1f} s")
    assert worst <= 1e-10
    assert elapsed <= 60


# -- 3 ------------------------------------------------------------------------


def test_criterion_3_feedback_analytic(acceptance):
    cfg = fb.FeedbackConfig(Gamma=0.9167, tau=1.2, n_d=40, n_ph=1, order=10, policy=POLICY)
    start = time.perf_counter()
    ts = _keep("eq13", fb.run(cfg, 3 * cfg.n_d))
    elapsed = time.perf_counter() - start
    ref = np.abs(oracles.feedback_analytic(cfg.Gamma, cfg.tau, cfg.omega_0, ts.time)) ** 2
    dev = float(np.max(np.abs(ts.rho11 - ref)))

    r, dt, nd = ts.rho11, cfg.dt, cfg.n_d
    slope_change = np.abs(np.diff(np.diff(r))) / dt  # entry i-1 belongs to step i
    curv_change = np.abs(np.diff(np.diff(r, 2))) / dt**2  # entries i-2, i-1 straddle step i
    quiet = [i for i in range(3, 3 * nd - 2) if min(abs(i - nd), abs(i - 2 * nd)) > 2]
    kink_1 = slope_change[nd - 1] / np.median(slope_change[[i - 1 for i in quiet]])
    kink_2 = max(curv_change[2 * nd - 2], curv_change[2 * nd - 1]) / np.median(curv_change[[i - 2 for i in quiet]])
    ok = dev <= 1e-2 and kink_1 > 10 and kink_2 > 10 and elapsed <= 600
    acceptance(
        3,
        "Gamma tau = 1.1, n_d = 40",
        ok,
        f"max|d sigma11| = {dev:.1e} (<= 1e-2), onset contrast tau {kink_1:.0f}x, 2 tau {kink_2:.0f}x, {elapsed:.1f} s",
    )
    assert dev <= 1e-2
    assert kink_1 > 10 and kink_2 > 10
    assert elapsed <= 600


# -- 4 ------------------------------------------------------------------------

# Gamma tau = 1 at a round trip long enough that gamma = 0.001 / ps acts within 20 tau
TRAP = fb.FeedbackConfig(Gamma=0.005, tau=200.0, n_d=10, policy=POLICY)
TRAP_STEPS = 20 * TRAP.n_d


def test_criterion_4_trapping_and_its_destruction(acceptance):
    ideal = _keep("trap-ideal", fb.run(replace(TRAP, phi=1.0), TRAP_STEPS))
    dephased = _keep("trap-dephased", fb.run(replace(TRAP, phi=1.0, gamma=0.001), TRAP_STEPS))
    detuned = _keep("trap-detuned", fb.run(replace(TRAP, phi=1.17), TRAP_STEPS))
    plateau = oracles.delay_steady_state(TRAP.Gamma, TRAP.tau, 1.0)
    rel = abs(ideal.rho11[-1] - plateau) / plateau
    ratio = dephased.rho11[-1] / ideal.rho11[-1]
    tail = detuned.rho11[-1]
    acceptance(4, "phi = 1, gamma = 0", rel <= 0.01, f"plateau {ideal.rho11[-1]:.5f} vs {plateau:.5f} ({rel:.2%}, <= 1%)")
    acceptance(4, "phi = 1, gamma = 0.001/ps", ratio < 0.5, f"value at 20 tau is {ratio:.1%} of the ideal plateau (< 50%)")
    acceptance(4, "phi = 1.17, gamma = 0", tail <= 0.05, f"value at 20 tau {tail:.4f} (<= 0.05)")
    assert rel <= 0.01
    assert ratio < 0.5
    assert tail <= 0.05


# -- 5 ------------------------------------------------------------------------


def test_criterion_5_quasi2d_reductions(acceptance):
    steps = 40
    start = time.perf_counter()
    zero = EtaTable.from_eta(FIG6.dt, np.zeros(steps + 1, dtype=complex), FIG6_NC)
    off = _keep("reduction-no-phonons", _quasi2d(4.0, steps, table=zero))
    bare = fb.run(FIG6, steps)
    dev_fb = float(np.max(np.abs(off.rho - bare.rho)))

    table = eta_coefficients(CorrelationKernel(FIG6_J, 4.0), FIG6.dt, steps, FIG6_NC)
    rho0 = np.array([[0.4, 0.3j], [-0.3j, 0.6]])
    model = SystemModel(Omega_0=0.3)
    no_photons = replace(FIG6, Gamma=0.0)
    tc = tempo.TempoConfig(FIG6.dt, FIG6_NC, steps, POLICY)
    q = _keep("reduction-no-feedback", jn.run_experiment(model, None, no_photons, tc, steps, rho0=rho0, table=table))
    ref = tempo.run_with_table(model, table, rho0, steps, POLICY)
    dev_tempo = float(np.max(np.abs(q.rho - ref.rho)))
    elapsed = time.perf_counter() - start
    acceptance(5, "phonon coupling off", dev_fb <= 1e-8, f"vs feedback engine {dev_fb:.1e} (<= 1e-8)")
    acceptance(5, "Gamma = 0", dev_tempo <= 1e-8 and elapsed <= 120, f"vs path-integral engine {dev_tempo:.1e} (<= 1e-8), {elapsed:.1f} s total")
    assert dev_fb <= 1e-8
    assert dev_tempo <= 1e-8
    assert elapsed <= 120


# -- 6 ------------------------------------------------------------------------


def _memory_lag(T, dt=FIG6.dt):
    eta = np.abs(eta_coefficients(CorrelationKernel(FIG6_J, T), dt, 15, FIG6_NC).eta)
    return int(np.max(np.nonzero(eta >= 0.05 * eta.max())))


def test_criterion_6_fig6_behaviour(acceptance):
    steps = 60
    start = time.perf_counter()
    cold = _keep("fig6-4K", _quasi2d(4.0, steps))
    hot = _keep("fig6-77K", _quasi2d(77.0, steps))
    zero = EtaTable.from_eta(FIG6.dt, np.zeros(steps + 1, dtype=complex), FIG6_NC)
    bare = _quasi2d(4.0, steps, table=zero)
    elapsed = time.perf_counter() - start

    lags = {T: _memory_lag(T) for T in (4.0, 77.0)}
    t = cold.time
    late = t > 5 * FIG6.tau - 1e-9
    slope = float(np.max(np.abs(np.gradient(cold.rho11, FIG6.dt)[late])))
    level = float(cold.rho11[late].min())
    onset = int(round(FIG6.tau / FIG6.dt)) + FIG6_NC
    rise = float(np.max(np.diff(hot.rho11[onset:])))
    link_on, link_off = int(cold.link_dim.max()), int(bare.link_dim.max())

    mem_ok = all(2 <= lag <= 4 for lag in lags.values())
    acceptance(6, "kernel memory", mem_ok, f"|eta_k| >= 5% of max up to lag {lags[4.0]} (4 K), {lags[77.0]} (77 K); want 2-4")
    acceptance(6, "4 K plateau", slope <= 1e-3 and level >= 0.05, f"max|d sigma11/dt| after 5 tau {slope:.1e} (<= 1e-3), min value {level:.3f} (>= 0.05)")
    acceptance(6, "77 K decay", rise <= 0.0, f"largest increment after tau + n_c dt {rise:.1e} (<= 0)")
    acceptance(6, "junction link", link_on > link_off and elapsed <= 1800, f"peak link {link_on} with phonons vs {link_off} without, {elapsed:.0f} s")
    assert mem_ok
    assert slope <= 1e-3 and level >= 0.05
    assert rise <= 0.0
    assert link_on > link_off
    assert elapsed <= 1800


# -- 7 ------------------------------------------------------------------------


def _dev(a, b):
    return float(np.max(np.abs(a.rho11 - b.rho11)))


def test_criterion_7_convergence_suite(acceptance):
    steps = 34  # 10.2 ps
    kernel = CorrelationKernel(FIG6_J, 4.0)
    table = {n_c: eta_coefficients(kernel, FIG6.dt, steps, n_c) for n_c in (2, 3, 4, 5)}
    nc = {n_c: _keep(f"conv-nc{n_c}", _quasi2d(4.0, steps, n_c=n_c, table=table[n_c])) for n_c in table}
    d23, d45 = _dev(nc[2], nc[3]), _dev(nc[4], nc[5])

    cut = {}
    for c in (1e-8, 1e-12, 1e-14):
        cfg = replace(FIG6, policy=TruncationPolicy(c))
        cut[c] = _keep(f"conv-dcut{c:g}", _quasi2d(4.0, steps, cfg=cfg, table=table[4]))
    d_cut = _dev(cut[1e-12], cut[1e-14])

    fine_cfg = replace(FIG6, n_d=5)
    fine_steps = 42  # 10.08 ps at 0.24 ps
    fine = _keep("conv-dt0.24", _quasi2d(4.0, fine_steps, cfg=fine_cfg))
    coarse = nc[4]
    # shared instants are the multiples of 1.2 ps up to 10 ps
    shared = [(4 * k, 5 * k) for k in range(9)]
    d_dt = max(abs(coarse.rho11[i] - fine.rho11[j]) for i, j in shared)

    order = {o: _keep(f"conv-order{o}", _quasi2d(4.0, steps, cfg=replace(FIG6, order=o), table=table[4])) for o in (8, 9, 10)}
    d89, d910 = _dev(order[8], order[9]), _dev(order[9], order[10])

    acceptance(7, "(a) memory depth", d45 < d23, f"dev(4,5) = {d45:.1e} < dev(2,3) = {d23:.1e}")
    acceptance(7, "(b) Schmidt cutoff", d_cut <= 1e-6, f"dev(1e-12, 1e-14) = {d_cut:.1e} (<= 1e-6)")
    acceptance(7, "(c) time step", d_dt <= 2e-2, f"0.3 vs 0.24 ps up to 10 ps: {d_dt:.2e} (<= 2e-2)")
    acceptance(7, "(d) series order", d910 <= 1e-6, f"dev(9,10) = {d910:.1e} (<= 1e-6), dev(8,9) = {d89:.1e}")
    failures = [name for name, ok in (("a", d45 < d23), ("b", d_cut <= 1e-6), ("c", d_dt <= 2e-2), ("d", d910 <= 1e-6)) if not ok]
    assert not failures, f"convergence parts failing: {failures}"


# -- 8 ------------------------------------------------------------------------


def test_criterion_8_invariants(acceptance):
    if not INVARIANT_RUNS:
        # run on its own: regenerate a representative subset
        _keep("ibm-77K", tempo.run(SystemModel(), CorrelationKernel(IBM_J, 77.0), tempo.TempoConfig(0.05, 40, 100, POLICY), RHO_PLUS))
        _keep("fig6-4K", _quasi2d(4.0, 30))
        _keep("trap-dephased", fb.run(replace(TRAP, phi=1.0, gamma=0.001), TRAP_STEPS))
    trace = max(float(ts.trace_defect.max()) for ts in INVARIANT_RUNS.values())
    herm = max(float(ts.hermiticity_defect.max()) for ts in INVARIANT_RUNS.values())
    acceptance(8, "trace and hermiticity", trace <= 1e-6 and herm <= 1e-8, f"over {len(INVARIANT_RUNS)} runs: trace {trace:.1e} (<= 1e-6), hermiticity {herm:.1e} (<= 1e-8)")

    excitation = 0.0
    for cfg, steps in ((replace(TRAP, phi=1.0), 60), (replace(TRAP, phi=1.17), 60), (replace(FIG6, phi=1.0), 40), (FIG6, 40)):
        gate = fb.step_gate(fb.build_step_generator(cfg), cfg.order)
        state = fb.init(fb.SIGMA_11, cfg)
        for _ in range(steps):
            state = fb.step(state, gate, cfg.policy)
            excitation = max(excitation, abs(fb.total_excitation(state) - 1.0))
    acceptance(8, "single excitation", excitation <= 1e-8, f"max |N - 1| on gamma = 0 runs {excitation:.1e} (<= 1e-8)")

    dense = 0.0
    rho0 = np.array([[0.25, 0.1 + 0.3j], [0.1 - 0.3j, 0.75]])
    for n_d in (1, 2, 3):
        for phi, gamma in ((0.0, 0.0), (1.17, 0.0), (0.4, 0.2)):
            cfg = fb.FeedbackConfig(Gamma=0.9, tau=0.3 * n_d, n_d=n_d, phi=phi, gamma=gamma, policy=TruncationPolicy(0.0))
            ts = fb.run(cfg, 6, rho0)
            ref = oracles.dense_liouville_evolution(cfg, 6, rho0)
            dense = max(dense, max(float(np.max(np.abs(ts.rho[n] - ref.system[n]))) for n in range(7)))
    acceptance(8, "dense Liouville oracle", dense <= 1e-8, f"n_d <= 3, 6 steps: {dense:.1e} (<= 1e-8)")
    assert trace <= 1e-6 and herm <= 1e-8
    assert excitation <= 1e-8
    assert dense <= 1e-8
