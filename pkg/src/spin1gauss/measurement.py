"""Balanced-polarimeter readout of one Stokes component.

The detected quantity is ``S_det = p . V`` for a unit vector ``p`` on a single
live pulse block. Readout reports its predicted mean and variance and the
rotation angle ``phi = S_det / <S_x^in>``. Conditioning applies the Gaussian
(Schur-complement) update to the covariance; the mean is left alone because
only moments, not individual outcomes, are tracked.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .state import N_FIXED, GaussianState, drop_pulse, pulse_slice

PINV_RTOL = 1e-12

FLAG_CONDITIONED = "conditioned"
FLAG_DETERMINISTIC = "deterministic"


@dataclass(frozen=True)
class MeasurementSpec:
    """Which combination to detect and whether to apply back-action."""

    p: np.ndarray
    condition: bool = False

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if abs(np.linalg.norm(p) - 1.0) > 1e-12:
            raise ValueError("projection vector must have unit norm")
        support = np.flatnonzero(p)
        if support.size == 0 or support.min() < N_FIXED:
            raise ValueError("projection vector must act on a pulse block only")
        blocks = set((support - N_FIXED) // 3)
        if len(blocks) != 1:
            raise ValueError("projection vector must act on exactly one pulse block")
        object.__setattr__(self, "p", p)

    @property
    def pulse_index(self) -> int:
        return int((np.flatnonzero(self.p)[0] - N_FIXED) // 3)

    @classmethod
    def stokes_y(cls, state: GaussianState, pulse_index: int = -1, condition: bool = False):
        """Detect ``S_y`` of one pulse (the Faraday-rotation channel)."""
        p = np.zeros(state.dim)
        p[pulse_slice(pulse_index % len(state.pulses)).start + 1] = 1.0
        return cls(p, condition)


@dataclass(frozen=True)
class MeasurementRecord:
    time: float
    s_mean: float
    s_var: float
    phi_mean: float
    phi_var: float
    polarization: str = "h"
    label: str = ""
    flags: tuple = ()

    def __post_init__(self):
        if self.s_var < 0:
            raise ValueError("negative detection variance")


def condition_covariance(cov: np.ndarray, p: np.ndarray) -> np.ndarray | None:
    """``cov - (cov p)(cov p)^T / (p cov p)``; ``None`` when ``p cov p`` is zero.

    The scalar pseudo-inverse treats ``p cov p`` below ``PINV_RTOL`` times the
    largest variance as zero.
    """
    gp = cov @ p
    s = float(p @ gp)
    if s <= PINV_RTOL * max(np.max(np.diag(cov)), 0.0):
        return None
    # the rank-one update is exactly symmetric; untouched blocks stay bit-identical
    return cov - np.outer(gp, gp) / s


def read_out(state: GaussianState, spec: MeasurementSpec, time: float,
             drop: bool = True) -> tuple[MeasurementRecord, GaussianState]:
    """Record the detection statistics, optionally condition, then drop the pulse."""
    idx = spec.pulse_index
    if idx >= len(state.pulses):
        raise IndexError(f"pulse {idx} is not live")
    block = state.pulses[idx]
    p = spec.p
    s_mean = float(p @ state.mean)
    s_var = float(p @ state.cov @ p)
    sx_in = block.sx_in
    if sx_in == 0:
        raise ValueError("cannot normalize a rotation angle by an empty pulse")
    flags = []
    cov = state.cov
    if spec.condition:
        post = condition_covariance(cov, p)
        if post is None:
            flags.append(FLAG_DETERMINISTIC)
        else:
            d0, d1 = np.diag(cov), np.diag(post)
            if np.any(d1 > d0 + PINV_RTOL * np.max(np.abs(d0))):
                raise ArithmeticError("conditioning increased a variance")
            cov = post
            flags.append(FLAG_CONDITIONED)
    rec = MeasurementRecord(time, s_mean, max(s_var, 0.0), s_mean / sx_in, max(s_var, 0.0) / sx_in**2,
                            block.light.polarization, block.label, tuple(flags))
    out = GaussianState(state.mean, cov, state.pulses, state.n_atoms)
    if drop:
        out = drop_pulse(out, idx)
    return rec, out
