"""Acceptance suite: one PASS/FAIL line per criterion, collected in the terminal summary."""
import time

import numpy as np
import pytest

from spin1gauss import algebra, magnetics as mg, oracle
from spin1gauss.harness import run_experiment
from spin1gauss.harness.analysis import (fit_damped_cosine, oscillation_frequency_of_variance, revival_analysis,
                                         rotation_angle, window_max, demodulate, wrap_phase)
from spin1gauss.lightmatter import ProbePulse, pulse_step
from spin1gauss.measurement import condition_covariance
from spin1gauss.state import (ATOM_SLICE, EnsembleSpec, LightSpec, append_pulse, axis_margins,
                              initial_full_state)

from conftest import ACCEPTANCE_LINES

B6 = (11.98, -4.38, -4.01)
DEMOD_WINDOW = 2e-4
MARGIN_TOL = -1e-8


def report(n: int, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {n:2d}. {title}: {detail}"
    ACCEPTANCE_LINES[n] = line
    print(line)


@pytest.fixture(scope="module")
def runs(single_config, alternating_config):
    """Full-length runs shared by several criteria, computed lazily."""
    cache = {}
    variants = {
        "full": lambda: single_config,
        "g2_off": lambda: single_config.replace(toggles={"g2": False}),
        "clean": lambda: single_config.replace(toggles={"g2": False}, coupling={"eta": 0.0}),
        "no_field_noise": lambda: single_config.replace(toggles={"field_noise": False}),
        "no_number_noise": lambda: single_config.replace(toggles={"atom_number_noise": False}),
        "quantum": lambda: single_config.replace(toggles={"field_noise": False, "atom_number_noise": False}),
        "alt": lambda: alternating_config,
        "alt_g2_off": lambda: alternating_config.replace(toggles={"g2": False}),
    }

    def get(name):
        if name not in cache:
            cache[name] = run_experiment(variants[name]())
        return cache[name]

    return get


def _angle(res):
    return rotation_angle(res.phi_mean)


def test_01_algebra_fidelity():
    start = time.perf_counter()
    dense = algebra.structure_constants_from_matrices(algebra.BASIS)
    err_f = np.max(np.abs(dense - algebra.F_ATOMIC))
    err_table = np.max(np.abs(algebra.commutator_table() - algebra.F_ATOMIC))
    gram = np.einsum("aij,bji->ab", algebra.BASIS, algebra.BASIS)
    err_gram = np.max(np.abs(gram - 2 * np.eye(8)))
    elapsed = time.perf_counter() - start
    worst = max(err_f, err_table, err_gram)
    ok = worst < 1e-12 and elapsed < 1.0
    report(1, "algebra fidelity", ok,
           f"64 commutators and structure constants max err {worst:.1e}, Tr(l_i l_j) err {err_gram:.1e}, "
           f"{elapsed * 1e3:.0f} ms")
    assert ok


def test_02_generator_spectrum(rng):
    expected = np.array([-2, -1, -1, 0, 0, 1, 1, 2], dtype=float)
    worst = 0.0
    for _ in range(100):
        b = rng.normal(size=3)
        b /= np.linalg.norm(b)
        eig = np.linalg.eigvals(mg.build_generator(b).matrix)
        worst = max(worst, np.max(np.abs(eig.real)), np.max(np.abs(np.sort(eig.imag) - expected)))
    ok = worst < 1e-10
    report(2, "field-generator spectrum", ok, f"100 random directions, max eigenvalue err {worst:.1e}")
    assert ok


def test_03_single_atom_oracle_equivalence(rng):
    fm = mg.FieldModel(B6)
    times = np.linspace(0.0, 1e-3, 1001)
    states = [algebra.axis_state(a) for a in ("+x", "+y", "+z")]
    for _ in range(5):
        psi = rng.normal(size=3) + 1j * rng.normal(size=3)
        psi /= np.linalg.norm(psi)
        states.append(oracle.lambda_from_rho(np.outer(psi, psi.conj())))
    worst = 0.0
    for lam in states:
        rho = oracle.rho_from_lambda(lam)
        for t in times:
            exact = oracle.lambda_from_rho(oracle.exact_field_evolution(rho, fm.b, fm.gyro, t))
            worst = max(worst, np.max(np.abs(mg.coherent_rotation(lam, t, fm) - exact)))
    ok = worst < 1e-8
    report(3, "single-atom oracle equivalence", ok,
           f"{len(states)} states x 1001 times over 1 ms, max |engine - exact| {worst:.1e}")
    assert ok


def test_04_linearization_convergence():
    s = initial_full_state(EnsembleSpec(6.17e6, 0.0, "+y"), LightSpec(7.2e6), np.zeros(3), np.zeros((3, 3)))
    g1, g2 = 1.7e-7, -7.5e-9
    pulse = ProbePulse(LightSpec(7.2e6), g1=g1, g2=g2)
    lam, stokes = oracle.heisenberg_pulse_oracle(s.atomic, s.stokes(0), g1, g2, 10_000)
    ns = np.array([8, 16, 32, 64, 128])
    errs = []
    for n in ns:
        out = pulse_step(s, pulse, 0, n_substeps=int(n))
        errs.append(np.max(np.abs(np.concatenate([out.atomic - lam, out.stokes(0) - stokes]))))
    slope = -np.polyfit(np.log(ns), np.log(errs), 1)[0]
    ok = abs(slope - 2.0) <= 0.1
    report(4, "linearization convergence", ok,
           f"log-log slope {slope:.3f} over substeps 8..128 (errors {errs[0]:.2e} -> {errs[-1]:.2e})")
    assert ok


def test_05_larmor_frequency(runs):
    res = runs("g2_off")
    fit = fit_damped_cosine(res.t, _angle(res), 9.0e3)
    early = runs("full")
    sel = early.t <= 250e-6
    fit_on = fit_damped_cosine(early.t[sel], _angle(early)[sel], 9.0e3)
    f = fit.frequency_hz
    ok = abs(f - 9.2e3) <= 0.2e3
    report(5, "Larmor frequency", ok,
           f"{f / 1e3:.4f} kHz fitted (g2 = 0); {fit_on.frequency_hz / 1e3:.3f} kHz apparent with g2 "
           f"over the first 250 us; target 9.2 +- 0.2 kHz")
    assert ok


def test_06_coherence_decay(runs):
    res = runs("clean")
    fit = fit_damped_cosine(res.t, _angle(res), 9.3e3, 3e-4)
    with_eta = fit_damped_cosine(runs("g2_off").t, _angle(runs("g2_off")), 9.3e3, 3e-4)
    T = fit.decay_time_s
    ok = abs(T - 360e-6) <= 0.05 * 360e-6
    report(6, "coherence decay", ok,
           f"fitted T = {T * 1e6:.1f} us from T = 360 us input (g2 = 0, no scattering); "
           f"{with_eta.decay_time_s * 1e6:.1f} us with scattering on")
    assert ok


def _max_rise(amplitude):
    """Largest re-growth of an envelope above its running minimum, relative to its start."""
    a = np.asarray(amplitude)
    return float(np.max(a - np.minimum.accumulate(a)) / a[0])


def test_07_collapse_and_revival(runs, single_config):
    full, ref = runs("full"), runs("g2_off")
    f0 = full.metadata["larmor_frequency_hz"]
    rev = revival_analysis(full.t, _angle(full), _angle(ref), f0, DEMOD_WINDOW)
    collapse = rev.dip_depth > 0.5
    revival = rev.revival_time is not None and rev.revival_time > rev.dip_time
    pi_shift = rev.revival_phase_shift is not None and abs(abs(rev.revival_phase_shift) - np.pi) < 0.5

    # without g2 the envelope never rises again and the carrier phase stays put
    d = demodulate(ref.t, _angle(ref), f0, DEMOD_WINDOW)
    rise = _max_rise(d.amplitude)
    phase_dev = np.max(np.abs(wrap_phase(d.phase - d.phase[0])))
    clean = rise < 0.01 and phase_dev < 0.5
    regrowth = np.interp(rev.revival_time, rev.t, rev.ratio) - (1 - rev.dip_depth) if rev.revival_time else 0.0

    kappa = np.pi / rev.revival_time if rev.revival_time else float("nan")
    g2, sx = abs(single_config.coupling.g2_rad), single_config.light.photons / 2
    period = single_config.schedule.period_us * 1e-6
    quoted = 2 * np.pi * 0.43e3
    half_formula = g2 * sx / 2 / period
    agree = 0.5 <= kappa / quoted <= 2.0
    ok = collapse and revival and regrowth > 0.2 and pi_shift and clean and agree
    report(7, "collapse and revival", ok,
           f"dip {rev.dip_depth:.2f} at {rev.dip_time * 1e3:.2f} ms, revival at {rev.revival_time * 1e3:.2f} ms "
           f"with phase shift {rev.revival_phase_shift:+.2f} rad; envelope ratio re-grows by {regrowth:.2f}; "
           f"with g2 = 0 envelope re-growth {rise:.4f} and phase drift {phase_dev:.2f} rad; rate pi/t_rev = {kappa:.0f} rad/s vs quoted {quoted:.0f} "
           f"(ratio {kappa / quoted:.2f}; G2 Sx/(2 P1) = {half_formula:.0f}, prefactor {kappa / (g2 * sx / period):.2f})")
    assert ok


def test_08_variance_structure(runs):
    ratios = {}
    for name in ("full", "g2_off"):
        res = runs(name)
        sel = res.t <= 500e-6
        f_var = oscillation_frequency_of_variance(res.t[sel], res.phi_var[sel])
        f_phi = fit_damped_cosine(res.t[sel], _angle(res)[sel], 9.0e3).frequency_hz
        ratios[name] = (f_var, f_var / f_phi)
    floor = np.max(runs("quantum").phi_var) * 1e6
    ok = all(abs(r - 2.0) <= 0.1 for _, r in ratios.values()) and floor <= 1.0
    report(8, "variance structure", ok,
           f"over 0-500 us var(phi) oscillates at {ratios['full'][0] / 1e3:.2f} kHz = {ratios['full'][1]:.3f} x f_phi "
           f"({ratios['g2_off'][0] / 1e3:.2f} kHz = {ratios['g2_off'][1]:.3f} x with g2 = 0); "
           f"max var(phi) with Gamma_B = 0 and dN^2 = 0: {floor:.3f} mrad^2 (shot noise {1e6 / 7.2e6:.3f})")
    assert ok


def _late_early(res):
    return (window_max(res.t, res.phi_var, 25e-6, 75e-6) * 1e6,
            window_max(res.t, res.phi_var, 775e-6, 825e-6) * 1e6)


def test_09_noise_attribution(runs):
    full, no_b, no_n, q = (_late_early(runs(k)) for k in ("full", "no_field_noise", "no_number_noise", "quantum"))
    field_early, field_late = full[0] - no_b[0], full[1] - no_b[1]
    number_early, number_late = no_b[0] - q[0], no_b[1] - q[1]
    collapses = no_b[1] < 1e-3 * full[1]
    number_only_early = number_early > 100 * abs(number_late) and abs(full[1] - no_n[1]) < 1e-3 * full[1]
    ordering = field_late > 1e3 * abs(number_late) and number_early > 0
    ok = collapses and number_only_early and ordering
    report(9, "noise attribution", ok,
           f"var at 50/800 us [mrad^2]: full {full[0]:.1f}/{full[1]:.1f}, Gamma_B=0 {no_b[0]:.3f}/{no_b[1]:.3f}, "
           f"dN^2=0 {no_n[0]:.1f}/{no_n[1]:.1f}, quantum {q[0]:.3f}/{q[1]:.3f}; "
           f"dN^2 share {number_early:.3f} -> {number_late:.1e}, Gamma_B share {field_early:.0f} -> {field_late:.0f}")
    assert ok


def _margin_run(cfg):
    worst = {"value": np.inf, "where": None, "steps": 0}

    def observer(stage, step, t, state):
        m = axis_margins(state).min()
        worst["steps"] += 1
        if m < worst["value"]:
            worst["value"], worst["where"] = m, (stage, step, t)

    run_experiment(cfg, observer)
    return worst


def test_10_uncertainty_preservation(single_config):
    plain = _margin_run(single_config)
    cond = _margin_run(single_config.replace(toggles={"condition": True}))
    ok = plain["value"] >= MARGIN_TOL and cond["value"] >= MARGIN_TOL
    report(10, "uncertainty preservation", ok,
           f"min relative margin {plain['value']:.1e} over {plain['steps']} states, "
           f"{cond['value']:.1e} over {cond['steps']} with conditioning")
    assert ok


def test_11_measurement_conditioning(single_config):
    cfg = single_config.replace(schedule={"duration_us": 400.0}, toggles={"condition": True})
    checked = {"n": 0, "diag": 0.0, "measured": 0.0, "untouched": 0.0}
    n_sub = cfg.substeps.pulse

    def observer(stage, step, t, state):
        if stage != "probe" or not state.pulses:
            return
        # the last substep of a pulse: condition on its S_y here as the readout would
        observer.count = getattr(observer, "count", 0) + 1
        if observer.count % n_sub:
            return
        p = np.zeros(state.dim)
        p[-2] = 1.0
        post = condition_covariance(state.cov, p)
        prior_var = p @ state.cov @ p
        checked["diag"] = max(checked["diag"], np.max((np.diag(post) - np.diag(state.cov)) / np.max(np.diag(state.cov))))
        checked["measured"] = max(checked["measured"], (p @ post @ p) / prior_var)
        fresh = append_pulse(state, LightSpec(7.2e6), t)
        q = np.zeros(fresh.dim)
        q[-2] = 1.0
        post_fresh = condition_covariance(fresh.cov, q)
        checked["untouched"] = max(checked["untouched"],
                                   np.max(np.abs(post_fresh[ATOM_SLICE, ATOM_SLICE] - fresh.cov[ATOM_SLICE, ATOM_SLICE])))
        checked["n"] += 1

    res = run_experiment(cfg, observer)
    ok = (checked["n"] == len(res.records) and checked["diag"] <= 0.0 and checked["measured"] <= 1e-12
          and checked["untouched"] == 0.0 and all("conditioned" in r.flags for r in res.records))
    cond_full = np.max(run_experiment(cfg).phi_var) * 1e6
    plain = np.max(run_experiment(cfg.replace(toggles={"condition": False})).phi_var) * 1e6
    report(11, "measurement conditioning", ok,
           f"{checked['n']} readouts: max diagonal change {checked['diag']:.1e} (relative), "
           f"measured posterior/prior {checked['measured']:.1e}, fresh-pulse atomic change {checked['untouched']:.1e}; "
           f"max var(phi) to 400 us {cond_full:.3f} mrad^2 conditioned vs {plain:.1f} unconditioned")
    assert ok


def test_12_dephasing_integral():
    T = 360e-6
    width = 0.5
    grad = 1.0 / (width * abs(mg.GYRO_RB87_F1) * T)
    fm = mg.FieldModel(B6, grad_parallel=grad, cloud_width=width)
    g = mg.build_generator(fm.b / np.linalg.norm(fm.b))
    P1 = g.projectors[3]
    worst = 0.0
    for t in np.linspace(0.0, 3 * T, 61):
        D = mg.dephasing_factors(t, fm)
        r1 = np.trace(D @ P1).real / np.trace(P1).real
        quad = oracle.lorentzian_phase_average(abs(fm.gyro) * grad * t, width)
        worst = max(worst, abs(r1 - quad))
    ok = worst < 1e-6
    report(12, "dephasing integral", ok, f"|r_1 - Lorentzian quadrature| max {worst:.1e} over [0, 3T]")
    assert ok


def test_13_alternating_cancellation(runs):
    single, single_ref = runs("full"), runs("g2_off")
    alt, alt_ref = runs("alt").select("h"), runs("alt_g2_off").select("h")
    f0 = single.metadata["larmor_frequency_hz"]
    dip_single = revival_analysis(single.t, _angle(single), _angle(single_ref), f0, DEMOD_WINDOW).dip_depth
    dip_alt = revival_analysis(alt.t, _angle(alt), _angle(alt_ref), f0, DEMOD_WINDOW).dip_depth
    suppression = dip_single / max(dip_alt, 1e-12)
    ok = suppression >= 5.0
    report(13, "alternating-polarization cancellation", ok,
           f"dip depth {dip_single:.3f} single vs {dip_alt:.4f} alternating (h pulses), suppression {suppression:.0f}x")
    assert ok
