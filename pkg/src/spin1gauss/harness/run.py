"""Stepping loop: dark field evolution, probe pulses with interleaved field
half-steps, readout of every pulse."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import magnetics
from ..lightmatter import ProbePulse, PulseInteraction
from ..magnetics import MAX_PHASE_STEP, FieldModel, FieldPropagator
from ..measurement import MeasurementRecord, MeasurementSpec, read_out
from ..state import GaussianState, append_pulse, initial_full_state
from .config import ExperimentConfig

FLAG_V = "v_pulse"
FLAG_BEYOND_TAU_GAUSS = "beyond_tau_gauss"


class SimulationError(RuntimeError):
    """A module error annotated with where in the run it happened."""

    def __init__(self, step: int, stage: str, time: float, cause: Exception):
        super().__init__(f"step {step} ({stage}, t = {time * 1e6:.3f} us): {type(cause).__name__}: {cause}")
        self.step = step
        self.stage = stage
        self.time = time


@dataclass
class RunResult:
    records: list[MeasurementRecord]
    final_state: GaussianState
    metadata: dict = field(default_factory=dict)

    @property
    def t(self) -> np.ndarray:
        return np.array([r.time for r in self.records])

    @property
    def phi_mean(self) -> np.ndarray:
        return np.array([r.phi_mean for r in self.records])

    @property
    def phi_var(self) -> np.ndarray:
        return np.array([r.phi_var for r in self.records])

    def select(self, polarization: str = "h") -> "RunResult":
        """Records of one polarization only."""
        return RunResult([r for r in self.records if r.polarization == polarization],
                         self.final_state, self.metadata)


def tau_gauss(b_cov, b_mean, gyro: float) -> float:
    """``pi / (|gamma| dB_par)``; infinite when the parallel field spread vanishes."""
    return magnetics.tau_gauss(b_cov, b_mean, gyro)


def analytic_fid(t, b_mean, coherence_time: float, g1: float, f0: float, input_axis: str,
                 gyro: float = magnetics.GYRO_RB87_F1) -> np.ndarray:
    """Closed-form Faraday-rotation FID neglecting tensor light shifts.

    ``input_axis="z"``: ``G1/|B|^2 [B_z^2 + (B_x^2 + B_y^2) cos(w t) e^{-t/T}] F_z(0)``;
    ``input_axis="y"``: ``G1/|B|^2 [B_y B_z (1 - cos(w t) e^{-t/T}) + B_x |B| sin(w t) e^{-t/T}] F_y(0)``;
    with ``w = gyro |B|``.
    """
    bx, by, bz = np.asarray(b_mean, dtype=float)
    b2 = bx * bx + by * by + bz * bz
    if b2 == 0:
        raise ValueError("the closed form needs a nonzero field")
    b = math.sqrt(b2)
    t = np.asarray(t, dtype=float)
    w = gyro * b
    decay = np.exp(-t / coherence_time) if coherence_time and np.isfinite(coherence_time) else np.ones_like(t)
    if input_axis == "z":
        return g1 / b2 * (bz * bz + (bx * bx + by * by) * np.cos(w * t) * decay) * f0
    if input_axis == "y":
        return g1 / b2 * (by * bz * (1 - np.cos(w * t) * decay) + bx * b * np.sin(w * t) * decay) * f0
    raise ValueError(f"input_axis must be 'y' or 'z', got {input_axis!r}")


class _Stepper:
    """Caches field propagators by step length."""

    def __init__(self, fm: FieldModel):
        self.fm = fm
        self.cache: dict[float, FieldPropagator] = {}

    def field(self, tau: float) -> FieldPropagator:
        prop = self.cache.get(tau)
        if prop is None:
            prop = self.cache[tau] = FieldPropagator(self.fm, tau)
        return prop

    def dark_substeps(self, gap: float, n_min: int) -> int:
        n_phase = math.ceil(abs(self.fm.omega0) * gap / MAX_PHASE_STEP * (1 + 1e-12))
        return max(n_min, n_phase)


def _simulate(cfg: ExperimentConfig, observer=None) -> RunResult:
    fm = cfg.field_model()
    schedule = cfg.schedule.pulse_times(cfg.light.pulse_duration_us)
    tau_p = cfg.light.pulse_duration_us * 1e-6
    sub = cfg.substeps
    stepper = _Stepper(fm)
    horizon = tau_gauss(fm.cov, fm.b, fm.gyro) if np.linalg.norm(fm.b) > 0 else np.inf

    step = 0
    t = 0.0
    stage = "initial"

    def notify(state):
        if observer is not None:
            observer(stage, step, t, state)

    try:
        state = initial_full_state(cfg.ensemble_spec(), None, fm.b, fm.cov)
    except ValueError as exc:
        raise SimulationError(step, stage, t, exc) from exc
    notify(state)
    records = []

    for t_arrival, pol in schedule:
        try:
            gap = t_arrival - t
            if gap > 1e-15:
                stage = "dark"
                n = stepper.dark_substeps(gap, sub.dark)
                prop = stepper.field(gap / n)
                for _ in range(n):
                    state = prop.step(state)
                    step += 1
                    notify(state)
                t = t_arrival

            stage = "probe"
            light = cfg.light_spec(pol)
            state = append_pulse(state, light, t_arrival, label=pol)
            pulse = ProbePulse(light, tau_p, t_arrival, cfg.coupling.g1_rad, cfg.g2, cfg.coupling.eta,
                               cfg.coupling.readd_fraction, cfg.coupling.light_decoherence)
            drv = PulseInteraction(state, pulse, -1, sub.pulse, sub.scheme)
            half = stepper.field(tau_p / sub.pulse / 2)
            for _ in range(sub.pulse):
                state = half.step(state)
                state = drv.substep(state)
                state = half.step(state)
                step += 1
                notify(state)
            t = t_arrival + tau_p

            stage = "readout"
            spec = MeasurementSpec.stokes_y(state, -1, cfg.toggles.condition)
            t_mid = t_arrival + tau_p / 2
            rec, state = read_out(state, spec, t_mid, drop=not cfg.toggles.retain_pulses)
            flags = list(rec.flags)
            if pol == "v":
                flags.append(FLAG_V)
            if t_mid > horizon:
                flags.append(FLAG_BEYOND_TAU_GAUSS)
            records.append(MeasurementRecord(rec.time, rec.s_mean, rec.s_var, rec.phi_mean, rec.phi_var,
                                             rec.polarization, rec.label, tuple(flags)))
            step += 1
            notify(state)
        except SimulationError:
            raise
        except (ValueError, ArithmeticError, IndexError, RuntimeError, np.linalg.LinAlgError) as exc:
            raise SimulationError(step, stage, t, exc) from exc

    ref = cfg.field.tau_gauss_reference_us
    meta = {
        "config_name": cfg.name,
        "config_hash": cfg.config_hash(),
        "substeps_pulse": sub.pulse,
        "substeps_dark_min": sub.dark,
        "scheme": sub.scheme,
        "n_steps": step,
        "larmor_frequency_hz": abs(fm.omega0) / (2 * np.pi),
        "tau_gauss_s": horizon,
        "tau_gauss_reference_s": None if ref is None else ref * 1e-6,
    }
    return RunResult(records, state, meta)


def _max_rel_change(a: RunResult, b: RunResult) -> float:
    pa, pb = a.phi_mean, b.phi_mean
    va, vb = a.phi_var, b.phi_var
    dm = np.max(np.abs(pa - pb)) / max(np.max(np.abs(pb)), 1e-300)
    dv = np.max(np.abs(va - vb)) / max(np.max(np.abs(vb)), 1e-300)
    return float(max(dm, dv))


def run_experiment(cfg: ExperimentConfig, observer=None) -> RunResult:
    """Run one configuration.

    ``observer(stage, step, t, state)`` is called after every step. With
    ``substeps.refine`` all substep counts are doubled until the reported
    ``phi`` mean and variance change by less than ``substeps.rtol`` relative
    to their largest magnitude.
    """
    result = _simulate(cfg, observer)
    if not cfg.substeps.refine:
        result.metadata["refinement"] = []
        return result
    history = []
    for k in range(1, cfg.substeps.max_doublings + 1):
        finer_cfg = cfg.replace(substeps=cfg.substeps.scaled(2**k))
        finer = _simulate(finer_cfg, None)
        change = _max_rel_change(result, finer)
        history.append((finer_cfg.substeps.pulse, finer_cfg.substeps.dark, change))
        result = finer
        if change < cfg.substeps.rtol:
            break
    result.metadata["refinement"] = history
    result.metadata["converged"] = bool(history and history[-1][2] < cfg.substeps.rtol)
    return result
