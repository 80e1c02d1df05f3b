"""Atomic evolution in a static, weakly inhomogeneous magnetic field.

The single-atom means obey ``d lambda/dt = -gamma |B| A(b) lambda`` with
``A(b)_{ak} = sum_c b_c f_{a c k}`` (``b`` the unit field). ``A`` is real and
antisymmetric with spectrum ``i{-2, -1, -1, 0, 0, 1, 1, 2}``, so the coherent
propagator and the gradient dephasing are both functions of ``A`` built from
its spectral projectors.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import constants

from . import algebra
from .state import ATOM_SLICE, B_SLICE, GaussianState

# mu_B / hbar in rad s^-1 mG^-1
MU_B_RAD_PER_S_MG = 2 * np.pi * constants.physical_constants["Bohr magneton in Hz/T"][0] * 1e-7
G_F_RB87_F1 = -0.5
GYRO_RB87_F1 = G_F_RB87_F1 * MU_B_RAD_PER_S_MG

EIGENVALUES = 1j * np.array([-2, -1, -1, 0, 0, 1, 1, 2], dtype=float)
_DISTINCT = 1j * np.array([-2.0, -1.0, 0.0, 1.0, 2.0])

MAX_PHASE_STEP = 0.1

_ADJ = algebra.adjoint_matrices(algebra.F_ATOMIC)


def gyromagnetic_ratio(g_f: float = G_F_RB87_F1) -> float:
    """``mu_B g_F / hbar`` in rad s^-1 mG^-1."""
    return g_f * MU_B_RAD_PER_S_MG


@dataclass(frozen=True)
class FieldModel:
    """Mean field, field covariance and the Lorentzian gradient dephasing model.

    Give either ``coherence_time`` (s) directly, or ``grad_parallel``
    (mG/mm) together with ``cloud_width`` (mm), in which case
    ``T = 1 / (w |gamma B'_par|)``. Neither means no dephasing.
    """

    b_mean: tuple
    b_cov: tuple = ((0.0, 0.0, 0.0),) * 3
    gyro: float = GYRO_RB87_F1
    coherence_time: float | None = None
    grad_parallel: float | None = None
    cloud_width: float | None = None
    grad_perp: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.cloud_width is not None and self.cloud_width < 0:
            raise ValueError("cloud width must be non-negative")
        if self.coherence_time is not None and self.coherence_time <= 0:
            raise ValueError("coherence time must be positive")
        if self.grad_perp is not None and np.any(np.asarray(self.grad_perp) != 0):
            warnings.warn("perpendicular field gradients do not accumulate and are ignored",
                          stacklevel=2)
        cov = np.asarray(self.b_cov, dtype=float)
        if not np.allclose(cov, cov.T) or np.linalg.eigvalsh(cov).min() < -1e-12 * max(np.abs(cov).max(), 1):
            raise ValueError("field covariance must be symmetric positive semidefinite")

    @property
    def b(self) -> np.ndarray:
        return np.asarray(self.b_mean, dtype=float)

    @property
    def cov(self) -> np.ndarray:
        return np.asarray(self.b_cov, dtype=float)

    @property
    def omega0(self) -> float:
        """Signed Larmor angular frequency ``gamma |B|``."""
        return self.gyro * float(np.linalg.norm(self.b))

    @property
    def dephasing_rate(self) -> float:
        """``1/T`` of the ``|a| = 1`` sectors, in s^-1."""
        if self.grad_parallel is not None and self.cloud_width is not None:
            return self.cloud_width * abs(self.gyro * self.grad_parallel)
        if self.coherence_time is not None:
            return 1.0 / self.coherence_time
        return 0.0


def generator_matrix(b_hat) -> np.ndarray:
    """The 8x8 field generator written out entry by entry."""
    bx, by, bz = b_hat
    s3 = algebra.SQRT3
    return np.array([
        [0, -bz, by, 0, 0, 0, 0, 0],
        [bz, 0, -bx, 0, 0, 0, 0, 0],
        [-by, bx, 0, 0, 0, 0, 0, 0],
        [0, 0, 0, 0, -2 * bz, by, bx, 0],
        [0, 0, 0, 2 * bz, 0, -bx, by, 0],
        [0, 0, 0, -by, bx, 0, -bz, s3 * by],
        [0, 0, 0, -bx, -by, bz, 0, -s3 * bx],
        [0, 0, 0, 0, 0, -s3 * by, s3 * bx, 0],
    ], dtype=float)


def generator_from_structure_constants(b) -> np.ndarray:
    """``A_{ak} = sum_c b_c f_{a c k}``; linear in ``b`` (not normalized)."""
    return np.einsum("c,cak->ak", np.asarray(b, dtype=float), _ADJ[:3])


@dataclass(frozen=True)
class FieldGenerator:
    matrix: np.ndarray
    eigenvalues: np.ndarray
    # spectral projectors, one per distinct eigenvalue in _DISTINCT order
    projectors: np.ndarray

    def propagator(self, phase: float) -> np.ndarray:
        """``sum_a exp(-phase a) P_a``; coherent rotation by ``phase = omega0 t``."""
        weights = np.exp(-phase * _DISTINCT)
        return np.einsum("a,aij->ij", weights, self.projectors).real

    def dephasing(self, t_over_T: float) -> np.ndarray:
        """``sum_a exp(-|a| t/T) P_a``."""
        weights = np.exp(-np.abs(_DISTINCT.imag) * t_over_T)
        return np.einsum("a,aij->ij", weights, self.projectors).real


def _frobenius_covariants(A: np.ndarray) -> np.ndarray:
    eye = np.eye(A.shape[0])
    projs = []
    for a in _DISTINCT:
        P = eye.astype(complex)
        for b in _DISTINCT:
            if b != a:
                P = P @ (A - b * eye) / (a - b)
        projs.append(P)
    return np.array(projs)


@lru_cache(maxsize=64)
def _cached_generator(b_hat: tuple) -> FieldGenerator:
    A = generator_matrix(b_hat)
    A.setflags(write=False)
    eig = np.linalg.eigvals(A)
    eig = eig[np.lexsort((eig.real, eig.imag))]
    projs = _frobenius_covariants(A)
    projs.setflags(write=False)
    return FieldGenerator(A, eig, projs)


def build_generator(b_hat) -> FieldGenerator:
    """Generator and spectral projectors for the unit field direction ``b_hat``."""
    b_hat = np.asarray(b_hat, dtype=float)
    if abs(np.linalg.norm(b_hat) - 1.0) > 1e-12:
        raise ValueError("field direction must be a unit vector")
    return _cached_generator(tuple(b_hat))


def coherent_propagator(field_model: FieldModel, t: float) -> np.ndarray:
    """Exact 8x8 Larmor propagator ``T_B(t)``; identity at zero field."""
    b = field_model.b
    norm = np.linalg.norm(b)
    if norm == 0:
        return np.eye(8)
    return build_generator(b / norm).propagator(field_model.omega0 * t)


def coherent_rotation(lam: np.ndarray, t: float, field_model: FieldModel) -> np.ndarray:
    if t < 0:
        raise ValueError("evolution time must be non-negative")
    return coherent_propagator(field_model, t) @ lam


def dephasing_factors(t: float, field_model: FieldModel) -> np.ndarray:
    """``D_B(t) = sum_i exp(-t/T_i) P_i`` with ``1/T_i = |a_i| / T``."""
    if t < 0:
        raise ValueError("evolution time must be non-negative")
    b = field_model.b
    norm = np.linalg.norm(b)
    rate = field_model.dephasing_rate
    if norm == 0 or rate == 0:
        return np.eye(8)
    return build_generator(b / norm).dephasing(rate * t)


def matrix_abs(M: np.ndarray) -> np.ndarray:
    """``sqrt(M^T M)`` via the singular value decomposition."""
    _, s, vt = np.linalg.svd(M)
    return (vt.T * s) @ vt


def dephasing_noise(lam_before: np.ndarray, D: np.ndarray) -> np.ndarray:
    """Minimal noise keeping the commutators consistent after a contraction ``D``.

    ``N = |Sigma' - D Sigma D^T|`` where ``Sigma`` is built from
    ``lam_before`` and ``Sigma'`` from ``D lam_before``.
    """
    sigma = algebra.commutation_matrix(lam_before)
    sigma_after = algebra.commutation_matrix(D @ lam_before)
    return matrix_abs(sigma_after - D @ sigma @ D.T)


def coupling_block(lam: np.ndarray) -> np.ndarray:
    """8x3 matrix whose column ``c`` is ``A(e_c) lam``: the derivative of the
    precession drift with respect to field component ``c`` (up to ``-gamma``)."""
    Fx, Fy, Fz, Jx, Jy, Jk, Jl, Jm = lam
    s3 = algebra.SQRT3
    return np.array([
        [0, Fz, -Fy],
        [-Fz, 0, Fx],
        [Fy, -Fx, 0],
        [Jl, Jk, -2 * Jy],
        [-Jk, Jl, 2 * Jx],
        [Jy, s3 * Jm - Jx, -Jl],
        [-s3 * Jm - Jx, -Jy, Jk],
        [s3 * Jl, -s3 * Jk, 0],
    ])


class FieldPropagator:
    """Fixed-step propagator for ``(mean, cov)`` under a static field.

    Atomic means are rotated exactly and dephased. The covariance gets the
    same rotation and dephasing, the field-atom coupling block evaluated at
    the rotated and dephased half-step mean (second order in ``tau``), and
    the dephasing noise.
    """

    def __init__(self, field_model: FieldModel, tau: float, check_step: bool = True):
        if tau < 0:
            raise ValueError("time step must be non-negative")
        phase = field_model.omega0 * tau
        if check_step and abs(phase) > MAX_PHASE_STEP:
            raise ValueError(f"field step too large: |omega0 tau| = {abs(phase):.3g} > {MAX_PHASE_STEP}")
        self.field = field_model
        self.tau = tau
        self.R_half = coherent_propagator(field_model, tau / 2)
        self.R = self.R_half @ self.R_half
        self.D = dephasing_factors(tau, field_model)
        self.D_half = dephasing_factors(tau / 2, field_model)
        self.E_half = self.D_half @ self.R_half
        self.DR = self.D @ self.R
        self.dephases = not np.allclose(self.D, np.eye(8), rtol=0, atol=0)

    def step(self, state: GaussianState) -> GaussianState:
        lam = state.atomic
        lam_mid = self.E_half @ lam
        K = -self.field.gyro * self.tau * (self.E_half @ coupling_block(lam_mid))

        T = np.eye(state.dim)
        T[ATOM_SLICE, ATOM_SLICE] = self.DR
        T[ATOM_SLICE, B_SLICE] = K
        cov = T @ state.cov @ T.T
        if self.dephases:
            cov[ATOM_SLICE, ATOM_SLICE] += dephasing_noise(self.R @ lam, self.D)
        mean = state.mean.copy()
        mean[ATOM_SLICE] = self.DR @ lam
        return GaussianState(mean, cov, state.pulses, state.n_atoms)


def field_step(state: GaussianState, field_model: FieldModel, tau: float,
               n_substeps: int = 1) -> GaussianState:
    """Evolve for ``tau`` in ``n_substeps`` equal steps."""
    prop = FieldPropagator(field_model, tau / n_substeps)
    for _ in range(n_substeps):
        state = prop.step(state)
    return state


def tau_gauss(b_cov, b_mean, gyro: float) -> float:
    """Time for the precession-angle spread from field noise to reach pi."""
    b_mean = np.asarray(b_mean, dtype=float)
    b_hat = b_mean / np.linalg.norm(b_mean)
    var_par = float(b_hat @ np.asarray(b_cov, dtype=float) @ b_hat)
    if var_par <= 0:
        return np.inf
    return np.pi / (abs(gyro) * np.sqrt(var_par))
