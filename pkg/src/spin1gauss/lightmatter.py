"""Pulse-ensemble interaction in the linearized (Gaussian) picture.

A probe pulse couples to the atoms through
``H = G1 S_z F_z + G2 (S_x J_x + S_y J_y)`` (per pulse, i.e. already
multiplied by the pulse duration). Means follow the bilinear difference
equation ``V <- V + V.H.V``; fluctuations follow its tangent map.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import algebra
from .state import ATOM0, ATOM_SLICE, GaussianState, LightSpec, pulse_slice


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class ProbePulse:
    """One optical probe pulse and its coupling constants.

    ``g1``/``g2`` are in radians per atom (per unit Stokes component);
    ``eta`` is the per-photon scattering probability of one atom;
    ``readd`` is the fraction ``p`` of scattered atoms returned with random
    polarization; ``light_decoherence`` switches on photon scattering
    (``eps = exp(-eta N)``), which is off by default.
    """

    light: LightSpec
    duration: float = 1e-6
    t_arrival: float = 0.0
    g1: float = 0.0
    g2: float = 0.0
    eta: float = 0.0
    readd: float = 1.0
    light_decoherence: bool = False

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("pulse duration must be positive")
        if self.light.photons < 0:
            raise ValueError("photon number must be non-negative")
        if not 0.0 <= self.readd <= 1.0:
            raise ValueError("re-addition fraction must lie in [0, 1]")


def channels(pulse_index: int, g1: float, g2: float) -> list[tuple[float, int, int]]:
    """``(coupling, atomic coordinate, Stokes coordinate)`` for the three terms of ``H``."""
    s = pulse_slice(pulse_index).start
    return [
        (g1, ATOM0 + algebra.FZ, s + 2),
        (g2, ATOM0 + algebra.JX, s + 0),
        (g2, ATOM0 + algebra.JY, s + 1),
    ]


def build_H(g1: float, g2: float, f: np.ndarray, pulse_index: int = 0) -> np.ndarray:
    """Bilinear coupling tensor ``H[i, j, k]`` so that ``dV_i = V_j H[i, j, k] V_k``.

    Each term ``g A S`` (atomic ``A``, Stokes ``S``) is entered twice: once with
    ``S`` supplying the left factor (atomic and Stokes rows rotate about ``A``)
    and once with ``A`` supplying it (rows rotate about ``S``).
    """
    d = f.shape[0]
    H = np.zeros((d, d, d))
    for g, a, s in channels(pulse_index, g1, g2):
        H[:, s, :] += g * f[:, a, :]
        H[:, a, :] += g * f[:, s, :]
    return H


class _Coupling:
    """Precomputed adjoint matrices for fast drift and Jacobian evaluation."""

    def __init__(self, f: np.ndarray, pulse_index: int, g1: float, g2: float):
        self.terms = [(g, a, s, f[:, a, :], f[:, s, :])
                      for g, a, s in channels(pulse_index, g1, g2) if g != 0.0]
        self.dim = f.shape[0]

    def drift(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros(self.dim)
        for g, a, s, ga, gs in self.terms:
            out += g * (v[s] * (ga @ v) + v[a] * (gs @ v))
        return out

    def jacobian(self, v: np.ndarray) -> np.ndarray:
        jac = np.zeros((self.dim, self.dim))
        for g, a, s, ga, gs in self.terms:
            jac += g * (v[s] * ga + v[a] * gs)
            jac[:, s] += g * (ga @ v)
            jac[:, a] += g * (gs @ v)
        return jac


def coherent_substep(mean, cov, coupling: _Coupling, frac: float, scheme: str = "midpoint"):
    """Advance by a fraction ``frac`` of the pulse; returns ``(mean, cov)``.

    ``scheme="euler"`` is the first-order difference equation with
    ``T = 1 + V(H + H^T)``; ``"midpoint"`` evaluates the drift at the half
    step and propagates fluctuations with the exact tangent map of that
    update, which is second order in ``frac``.
    """
    d = mean.size
    if scheme == "euler":
        jac = coupling.jacobian(mean)
        new_mean = mean + frac * coupling.drift(mean)
        T = np.eye(d) + frac * jac
    elif scheme == "midpoint":
        half = mean + 0.5 * frac * coupling.drift(mean)
        new_mean = mean + frac * coupling.drift(half)
        T = np.eye(d) + frac * coupling.jacobian(half) @ (np.eye(d) + 0.5 * frac * coupling.jacobian(mean))
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return new_mean, T @ cov @ T.T


def scattering_survival(eta: float, count: float, frac: float = 1.0) -> float:
    """Unscattered fraction ``exp(-eta * count * frac)``."""
    return float(np.exp(-eta * count * frac))


def optical_decoherence(state: GaussianState, X: float, eps: float = 1.0, readd: float = 1.0,
                        pulse_index: int | None = None) -> GaussianState:
    """Scattering-induced decoherence of the atoms (and optionally one pulse).

    A fraction ``1 - X`` of the atoms is removed and a fraction ``readd`` of
    those is returned completely unpolarized::

        Lambda -> X Lambda
        G_Lambda -> X^2 G_Lambda + X (1 - X) N G_lambda + readd (1 - X) (2/3) N 1

    Cross-correlations scale with the product of the row and column factors.
    """
    if not 0.0 < X <= 1.0:
        raise ValueError(f"atomic survival fraction must lie in (0, 1], got {X}")
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"photon survival fraction must lie in (0, 1], got {eps}")
    if X == 1.0 and eps == 1.0:
        return state
    n = state.n_atoms
    lam = state.atomic / n if n > 0 else np.zeros(8)
    # the linearized mean may sit a hair outside the physical set
    gamma_single = algebra.single_atom_covariance(lam, tol=1e-6)

    scale = np.ones(state.dim)
    scale[ATOM_SLICE] = X
    noise = np.zeros((state.dim, state.dim))
    noise[ATOM_SLICE, ATOM_SLICE] = X * (1 - X) * n * gamma_single + readd * (1 - X) * 2.0 / 3.0 * n * np.eye(8)
    if eps != 1.0:
        if pulse_index is None:
            raise ValueError("photon decoherence needs the pulse index")
        s = pulse_slice(pulse_index)
        photons = state.pulses[pulse_index].light.photons
        scale[s] = eps
        noise[s, s] = eps * (1 - eps) * photons * 0.25 * np.eye(3)
    mean = state.mean * scale
    cov = scale[:, None] * state.cov * scale[None, :] + noise
    return GaussianState(mean, cov, state.pulses, n * (X + readd * (1 - X)))


class PulseInteraction:
    """Substep driver for one live pulse: coherent update then decoherence."""

    def __init__(self, state: GaussianState, pulse: ProbePulse, pulse_index: int,
                 n_substeps: int, scheme: str = "midpoint"):
        if n_substeps < 1:
            raise ValueError("need at least one substep")
        self.pulse = pulse
        self.index = pulse_index % len(state.pulses)
        self.n = n_substeps
        self.scheme = scheme
        self.frac = 1.0 / n_substeps
        self.coupling = _Coupling(state.structure_constants(), self.index, pulse.g1, pulse.g2)
        self.X = scattering_survival(pulse.eta, pulse.light.photons, self.frac)

    def substep(self, state: GaussianState) -> GaussianState:
        mean, cov = coherent_substep(state.mean, state.cov, self.coupling, self.frac, self.scheme)
        state = GaussianState(mean, cov, state.pulses, state.n_atoms)
        eps = 1.0
        if self.pulse.light_decoherence:
            eps = scattering_survival(self.pulse.eta, state.n_atoms, self.frac)
        return optical_decoherence(state, self.X, eps, self.pulse.readd, self.index)


def _rel_change(a: GaussianState, b: GaussianState) -> float:
    dm = np.max(np.abs(a.mean - b.mean)) / max(np.max(np.abs(b.mean)), 1e-300)
    dc = np.max(np.abs(a.cov - b.cov)) / max(np.max(np.abs(b.cov)), 1e-300)
    return float(max(dm, dc))


def pulse_step(state: GaussianState, pulse: ProbePulse, pulse_index: int = -1,
               n_substeps: int = 50, scheme: str = "midpoint", rtol: float | None = None,
               max_doublings: int = 10) -> GaussianState:
    """Pass a whole pulse through the ensemble (no magnetic field).

    With ``rtol`` set, the substep count is doubled until the largest
    norm-relative change of mean and covariance falls below ``rtol``.
    """
    def run(n):
        drv = PulseInteraction(state, pulse, pulse_index, n, scheme)
        s = state
        for _ in range(n):
            s = drv.substep(s)
        return s

    out = run(n_substeps)
    if rtol is None:
        return out
    n = n_substeps
    history = []
    for _ in range(max_doublings):
        n *= 2
        finer = run(n)
        change = _rel_change(out, finer)
        history.append((n, change))
        out = finer
        if change < rtol:
            return out
    raise ConvergenceError(f"pulse step did not converge to rtol={rtol}: (substeps, change) = {history}")
