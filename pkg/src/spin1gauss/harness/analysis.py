"""Signal analysis for simulated Faraday-rotation records."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize


def rotation_angle(phi: np.ndarray) -> np.ndarray:
    """Undo the sine of the polarization rotation, ``arcsin(phi)``.

    ``phi = S_y^out / S_x^in`` is the sine of the accumulated Faraday angle, so
    this is linear in the atomic spin even at large rotation.
    """
    return np.arcsin(np.clip(phi, -1.0, 1.0))


def dominant_frequency(t: np.ndarray, y: np.ndarray, pad: int = 16) -> float:
    """Peak of the zero-padded periodogram of a uniformly sampled signal, in Hz."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float) - np.mean(y)
    dt = np.median(np.diff(t))
    n = pad * len(y)
    spec = np.abs(np.fft.rfft(y * np.hanning(len(y)), n))
    freqs = np.fft.rfftfreq(n, dt)
    return float(freqs[1:][np.argmax(spec[1:])])


@dataclass(frozen=True)
class DampedCosineFit:
    offset: float
    amplitude: float
    frequency_hz: float
    phase: float
    decay_time_s: float
    rms_residual: float

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.offset + self.amplitude * np.exp(-t / self.decay_time_s) * np.cos(
            2 * np.pi * self.frequency_hz * t + self.phase)


def fit_damped_cosine(t, y, frequency_guess: float | None = None,
                      decay_guess: float | None = None) -> DampedCosineFit:
    """Least-squares fit of ``c + A exp(-t/T) cos(2 pi f t + p)``."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if frequency_guess is None:
        frequency_guess = dominant_frequency(t, y)
    if decay_guess is None:
        decay_guess = (t[-1] - t[0]) / 2
    w = 2 * np.pi * frequency_guess
    design = np.column_stack([np.ones_like(t), np.cos(w * t), np.sin(w * t)])
    (c0, a0, b0), *_ = np.linalg.lstsq(design, y, rcond=None)

    def model(t, c, A, f, p, T):
        return c + A * np.exp(-t / T) * np.cos(2 * np.pi * f * t + p)

    p0 = [c0, np.hypot(a0, b0) * 1.5, frequency_guess, np.arctan2(-b0, a0), decay_guess]
    popt, _ = optimize.curve_fit(model, t, y, p0=p0, maxfev=20000)
    c, A, f, p, T = popt
    if A < 0:
        A, p = -A, p + np.pi
    resid = y - model(t, *popt)
    return DampedCosineFit(float(c), float(A), float(f), float(np.angle(np.exp(1j * p))), float(T),
                           float(np.sqrt(np.mean(resid**2))))


@dataclass(frozen=True)
class Demodulation:
    t: np.ndarray
    amplitude: np.ndarray
    phase: np.ndarray
    offset: np.ndarray


def demodulate(t, y, frequency_hz: float, window_s: float) -> Demodulation:
    """Sliding-window lock-in at ``frequency_hz``.

    Fits ``c + a cos(wt) + b sin(wt)`` over each window of length
    ``window_s`` centred on a sample; returns amplitude ``hypot(a, b)`` and
    phase ``atan2(-b, a)`` (so ``y ~ A cos(wt + phase)``). Centres closer than
    half a window to either end are dropped.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    w = 2 * np.pi * frequency_hz
    half = window_s / 2
    centres, amp, ph, off = [], [], [], []
    for tc in t:
        if tc - half < t[0] - 1e-12 or tc + half > t[-1] + 1e-12:
            continue
        sel = np.abs(t - tc) <= half + 1e-12
        design = np.column_stack([np.ones(sel.sum()), np.cos(w * t[sel]), np.sin(w * t[sel])])
        (c, a, b), *_ = np.linalg.lstsq(design, y[sel], rcond=None)
        centres.append(tc)
        amp.append(np.hypot(a, b))
        ph.append(np.arctan2(-b, a))
        off.append(c)
    return Demodulation(np.array(centres), np.array(amp), np.array(ph), np.array(off))


def wrap_phase(p):
    return np.angle(np.exp(1j * np.asarray(p)))


@dataclass(frozen=True)
class RevivalAnalysis:
    """Envelope of a signal relative to a reference run without the collapse mechanism."""

    t: np.ndarray
    ratio: np.ndarray
    phase_shift: np.ndarray
    dip_depth: float
    dip_time: float
    revival_time: float | None
    revival_phase_shift: float | None


def revival_analysis(t, y, y_ref, frequency_hz: float, window_s: float) -> RevivalAnalysis:
    """Compare the demodulated envelope of ``y`` with that of ``y_ref``.

    ``ratio`` is the envelope ratio, ``phase_shift`` the carrier phase of ``y``
    relative to ``y_ref``. ``dip_depth = 1 - min(ratio)``. A revival is the
    largest ratio after the dip; its phase shift is reported there.
    """
    d = demodulate(t, y, frequency_hz, window_s)
    r = demodulate(t, y_ref, frequency_hz, window_s)
    ratio = d.amplitude / np.maximum(r.amplitude, 1e-300)
    shift = wrap_phase(d.phase - r.phase)
    i_min = int(np.argmin(ratio))
    revival_time = revival_shift = None
    if i_min < len(ratio) - 1:
        j = i_min + 1 + int(np.argmax(ratio[i_min + 1:]))
        revival_time = float(d.t[j])
        revival_shift = float(shift[j])
    return RevivalAnalysis(d.t, ratio, shift, float(1 - ratio[i_min]), float(d.t[i_min]),
                           revival_time, revival_shift)


def window_max(t, y, lo: float, hi: float) -> float:
    sel = (t >= lo) & (t <= hi)
    if not np.any(sel):
        raise ValueError(f"no samples in [{lo}, {hi}]")
    return float(np.max(np.asarray(y)[sel]))


def oscillation_frequency_of_variance(t, v, detrend_degree: int = 3) -> float:
    """Dominant frequency of a variance trace after removing a slow polynomial trend."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    x = (t - t.mean()) / np.ptp(t)
    resid = v - np.polyval(np.polyfit(x, v, detrend_degree), x)
    return dominant_frequency(t, resid)
