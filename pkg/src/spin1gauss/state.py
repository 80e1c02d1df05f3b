"""Phase-space vector and covariance matrix over (B, F, J, Stokes blocks).

Coordinates are laid out as ``B (3) + atoms (8) + 3 per live pulse``. Units:
mG for the field, atom counts for the collective operators, photon counts for
the Stokes components.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import algebra

B_SLICE = slice(0, 3)
ATOM_SLICE = slice(3, 11)
N_FIXED = 11
ATOM0 = 3

PSD_RTOL = 1e-8
UNCERTAINTY_RTOL = 1e-8


def pulse_slice(m: int) -> slice:
    start = N_FIXED + 3 * m
    return slice(start, start + 3)


def dimension(n_pulses: int) -> int:
    return N_FIXED + 3 * n_pulses


@lru_cache(maxsize=None)
def full_structure_constants(n_pulses: int) -> np.ndarray:
    """Structure constants over the whole layout; the field block is classical."""
    d = dimension(n_pulses)
    f = np.zeros((d, d, d))
    f[ATOM_SLICE, ATOM_SLICE, ATOM_SLICE] = algebra.F_ATOMIC
    for m in range(n_pulses):
        s = pulse_slice(m)
        f[s, s, s] = algebra.F_STOKES
    f.setflags(write=False)
    return f


@dataclass(frozen=True)
class EnsembleSpec:
    """Atomic ensemble prepared in ``rho^(x N)`` with a fluctuating atom number.

    ``pump`` is either an axis label (``"+y"`` etc.) or a single-atom mean
    8-vector.
    """

    n_atoms: float
    n_atoms_var: float = 0.0
    pump: str | tuple = "+z"

    def single_atom_mean(self) -> np.ndarray:
        if isinstance(self.pump, str):
            return algebra.axis_state(self.pump)
        lam = np.asarray(self.pump, dtype=float)
        if lam.shape != (8,):
            raise ValueError("pump vector must have 8 components")
        return lam


@dataclass(frozen=True)
class LightSpec:
    """Coherent probe pulse linearly polarized along ``+S_x`` (h) or ``-S_x`` (v)."""

    photons: float
    polarization: str = "h"

    @property
    def sign(self) -> int:
        if self.polarization not in ("h", "v"):
            raise ValueError(f"polarization must be 'h' or 'v', got {self.polarization!r}")
        return 1 if self.polarization == "h" else -1

    def mean(self) -> np.ndarray:
        return np.array([self.sign * self.photons / 2, 0.0, 0.0])

    def cov(self) -> np.ndarray:
        return np.eye(3) * self.photons / 4


@dataclass(frozen=True)
class PulseBlock:
    light: LightSpec
    t_arrival: float = 0.0
    label: str = ""

    @property
    def sx_in(self) -> float:
        return self.light.sign * self.light.photons / 2


@dataclass
class GaussianState:
    mean: np.ndarray
    cov: np.ndarray
    pulses: tuple = field(default_factory=tuple)
    n_atoms: float = 0.0

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)
        d = dimension(len(self.pulses))
        if self.mean.shape != (d,) or self.cov.shape != (d, d):
            raise ValueError(f"state shape mismatch: expected dimension {d}")

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def b_field(self) -> np.ndarray:
        return self.mean[B_SLICE]

    @property
    def atomic(self) -> np.ndarray:
        return self.mean[ATOM_SLICE]

    @property
    def atomic_cov(self) -> np.ndarray:
        return self.cov[ATOM_SLICE, ATOM_SLICE]

    def stokes(self, m: int) -> np.ndarray:
        return self.mean[pulse_slice(m)]

    def copy(self) -> "GaussianState":
        return GaussianState(self.mean.copy(), self.cov.copy(), self.pulses, self.n_atoms)

    def structure_constants(self) -> np.ndarray:
        return full_structure_constants(len(self.pulses))


def initial_atomic_state(spec: EnsembleSpec) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of ``N`` atoms in ``rho^(x N)`` with atom-number noise.

    ``Gamma = N Gamma_lambda + var(N) lambda lambda^T``.
    """
    if spec.n_atoms < 0 or spec.n_atoms_var < 0:
        raise ValueError("atom number and its variance must be non-negative")
    lam = spec.single_atom_mean()
    gamma_single = algebra.single_atom_covariance(lam)
    mean = spec.n_atoms * lam
    cov = spec.n_atoms * gamma_single + spec.n_atoms_var * np.outer(lam, lam)
    return mean, cov


def _check_psd(mat: np.ndarray, name: str) -> None:
    if not np.allclose(mat, mat.T, rtol=1e-12, atol=0):
        raise ValueError(f"{name} is not symmetric")
    scale = max(np.linalg.norm(mat), 1e-300)
    if np.linalg.eigvalsh(mat).min() < -PSD_RTOL * scale:
        raise ValueError(f"{name} is not positive semidefinite")


def initial_full_state(ens: EnsembleSpec, light: LightSpec | None, b_mean, b_cov,
                       t_arrival: float = 0.0) -> GaussianState:
    """Uncorrelated direct sum of field, atoms and (optionally) one probe pulse."""
    b_mean = np.asarray(b_mean, dtype=float)
    b_cov = np.asarray(b_cov, dtype=float)
    _check_psd(b_cov, "field covariance")
    lam_mean, lam_cov = initial_atomic_state(ens)
    mean = np.concatenate([b_mean, lam_mean])
    cov = np.zeros((N_FIXED, N_FIXED))
    cov[B_SLICE, B_SLICE] = b_cov
    cov[ATOM_SLICE, ATOM_SLICE] = lam_cov
    state = GaussianState(mean, cov, n_atoms=ens.n_atoms)
    if light is not None:
        state = append_pulse(state, light, t_arrival)
    return state


def append_pulse(state: GaussianState, light: LightSpec, t_arrival: float = 0.0,
                 label: str = "") -> GaussianState:
    """Add an uncorrelated coherent-state Stokes block at the end of the layout."""
    d = state.dim
    mean = np.concatenate([state.mean, light.mean()])
    cov = np.zeros((d + 3, d + 3))
    cov[:d, :d] = state.cov
    cov[d:, d:] = light.cov()
    return GaussianState(mean, cov, state.pulses + (PulseBlock(light, t_arrival, label),),
                         state.n_atoms)


def drop_pulse(state: GaussianState, index: int) -> GaussianState:
    """Remove a pulse block together with all of its correlations."""
    n = len(state.pulses)
    if not -n <= index < n:
        raise IndexError(f"pulse index {index} out of range for {n} live pulses")
    index %= n
    keep = np.ones(state.dim, dtype=bool)
    keep[pulse_slice(index)] = False
    pulses = state.pulses[:index] + state.pulses[index + 1:]
    return GaussianState(state.mean[keep], state.cov[np.ix_(keep, keep)], pulses, state.n_atoms)


def check_uncertainty(mean, cov, a, b, f=None, rtol: float = UNCERTAINTY_RTOL):
    """Robertson-Schroedinger test for ``a.V`` and ``b.V``.

    Returns ``(ok, margin)`` with ``margin = (a G a)(b G b) - |a_i b_j f_ijk v_k|^2 / 4``;
    ``ok`` allows a negative margin down to ``-rtol`` times the variance product.
    """
    mean = np.asarray(mean, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if f is None:
        f = full_structure_constants((mean.size - N_FIXED) // 3)
    if a.shape != mean.shape or b.shape != mean.shape:
        raise ValueError("coefficient vectors must match the state dimension")
    var_prod = (a @ cov @ a) * (b @ cov @ b)
    comm = np.einsum("i,j,ijk,k->", a, b, f, mean)
    margin = var_prod - 0.25 * comm**2
    return bool(margin >= -rtol * abs(var_prod)), float(margin)


def axis_margins(state: GaussianState, comm_rtol: float = 1e-12) -> np.ndarray:
    """Relative Robertson margins for every pair of coordinate axes.

    Entry ``(i, j)`` is ``(G_ii G_jj - Sigma_ij^2 / 4) / max(G_ii G_jj, Sigma_ij^2 / 4, floor)``
    with ``floor = comm_rtol * max(G_ii)^2``, so rounding on nearly empty
    coordinates does not register; variances above ``-comm_rtol max(G_ii)``
    are clipped to zero. Commutators below ``comm_rtol`` times the
    largest one count as zero; an all-zero state gets 1 everywhere.
    """
    sigma = algebra.commutation_matrix(state.mean, state.structure_constants())
    sigma = np.where(np.abs(sigma) > comm_rtol * max(np.max(np.abs(sigma)), 1e-300), sigma, 0.0)
    var = np.diag(state.cov)
    top = np.max(np.abs(var))
    # rounding leaves tiny negative variances on empty coordinates
    var = np.where(var >= -comm_rtol * top, np.maximum(var, 0.0), var)
    prod = np.outer(var, var)
    rhs = 0.25 * sigma**2
    scale = np.maximum(np.maximum(prod, rhs), comm_rtol * top**2)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(scale > 0, (prod - rhs) / scale, 1.0)
    return rel
