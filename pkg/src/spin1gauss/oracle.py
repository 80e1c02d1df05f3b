"""Independent reference calculations for validating the Gaussian engine.

Everything here works from the 3x3 spin-1 matrices and 2x2 Stokes matrices
directly, without the sparse structure-constant table the engine uses.
"""
from __future__ import annotations

import numpy as np
from scipy import integrate, linalg

from . import algebra

HERMITIAN_ATOL = 1e-10


def _check_density_matrix(rho: np.ndarray, atol: float = HERMITIAN_ATOL) -> None:
    if rho.shape != (3, 3):
        raise ValueError("expected a 3x3 density matrix")
    if np.max(np.abs(rho - rho.conj().T)) > atol:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > atol:
        raise ValueError("density matrix does not have unit trace")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -atol:
        raise ValueError("density matrix is not positive semidefinite")


def rho_from_lambda(lam, atol: float = HERMITIAN_ATOL) -> np.ndarray:
    """``rho = 1/3 + (1/2) sum_i lam_i lambda_i``; rejects non-PSD results."""
    rho = algebra.rho_from_lambda(np.asarray(lam, dtype=float))
    _check_density_matrix(rho, atol)
    return rho


def lambda_from_rho(rho, atol: float = HERMITIAN_ATOL) -> np.ndarray:
    """``lam_i = Tr(rho lambda_i)``."""
    rho = np.asarray(rho, dtype=complex)
    _check_density_matrix(rho, atol)
    return np.einsum("ij,kji->k", rho, algebra.BASIS).real


def spin_along(b_hat) -> np.ndarray:
    """``f . b_hat`` as a 3x3 matrix."""
    return np.einsum("c,cij->ij", np.asarray(b_hat, dtype=float), algebra.BASIS[:3])


def field_unitary(b_hat, theta: float) -> np.ndarray:
    """``exp(i theta f_B)`` from its closed form; ``f_B^3 = f_B`` for spin 1."""
    fb = spin_along(b_hat)
    return np.eye(3) + 1j * np.sin(theta) * fb + (np.cos(theta) - 1.0) * fb @ fb


def exact_field_evolution(rho, b_mean, gyro: float, t: float) -> np.ndarray:
    """Conjugate ``rho`` by ``U = exp(i gamma |B| t f_B)`` for a static uniform field."""
    rho = np.asarray(rho, dtype=complex)
    b = np.asarray(b_mean, dtype=float)
    norm = np.linalg.norm(b)
    if norm == 0:
        return rho.copy()
    U = field_unitary(b / norm, gyro * norm * t)
    return U @ rho @ U.conj().T


def _commutator_coefficients(mats: np.ndarray) -> np.ndarray:
    """``C[a, b, k]`` with ``-i[m_a, m_b] = sum_k C[a, b, k] m_k`` for a trace-orthogonal basis."""
    prod = np.einsum("aij,bjk->abik", mats, mats)
    comm = -1j * (prod - prod.transpose(1, 0, 2, 3))
    norms = np.einsum("kij,kji->k", mats, mats).real
    return (np.einsum("abij,kji->abk", comm, mats) / norms).real


class HeisenbergMeanField:
    """Mean-field Heisenberg equations for one pulse and the collective atoms.

    With ``H = g1 S_z F_z + g2 (S_x J_x + S_y J_y)`` (pulse-integrated),
    ``d<O>/ds = <-i[O, H]>`` with products of atomic and optical means
    factorized, over the pulse fraction ``s`` from 0 to 1.
    """

    def __init__(self, g1: float, g2: float):
        self.c_atom = _commutator_coefficients(algebra.BASIS)
        self.c_light = _commutator_coefficients(algebra.stokes_basis())
        # (coupling, atomic index, Stokes index)
        self.terms = [(g1, algebra.FZ, 2), (g2, algebra.JX, 0), (g2, algebra.JY, 1)]

    def rhs(self, lam: np.ndarray, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        dlam = np.zeros(8)
        ds = np.zeros(3)
        for g, a, k in self.terms:
            if g == 0.0:
                continue
            dlam += g * s[k] * (self.c_atom[:, a, :] @ lam)
            ds += g * lam[a] * (self.c_light[:, k, :] @ s)
        return dlam, ds


def heisenberg_pulse_oracle(lam, stokes, g1: float, g2: float, fine_steps: int = 10_000):
    """Integrate the mean-field pulse equations with classical RK4.

    ``lam`` is the collective 8-vector, ``stokes`` the optical ``(S_x, S_y, S_z)``.
    """
    if fine_steps < 1:
        raise ValueError("need at least one integration step")
    model = HeisenbergMeanField(g1, g2)
    y = np.concatenate([np.asarray(lam, dtype=float), np.asarray(stokes, dtype=float)])

    def f(y):
        dl, ds = model.rhs(y[:8], y[8:])
        return np.concatenate([dl, ds])

    h = 1.0 / fine_steps
    for _ in range(fine_steps):
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y[:8], y[8:]


def first_order_commutator_update(lam, stokes, g1: float, g2: float):
    """One explicit step ``O -> O - i[O, H]`` of the factorized Heisenberg equations."""
    model = HeisenbergMeanField(g1, g2)
    lam = np.asarray(lam, dtype=float)
    stokes = np.asarray(stokes, dtype=float)
    dl, ds = model.rhs(lam, stokes)
    return lam + dl, stokes + ds


def lorentzian_phase_average(k: float, width: float) -> float:
    """``|int dz rho(z) exp(-i k z)|`` for ``rho(z) = w / (pi (z^2 + w^2))`` by quadrature."""
    if width <= 0:
        return 1.0
    if k == 0:
        return 1.0
    # even density: the integral is 2 int_0^inf rho(z) cos(k z) dz
    val, _ = integrate.quad(lambda z: width / (np.pi * (z * z + width * width)), 0.0, np.inf,
                            weight="cos", wvar=abs(k), limlst=200)
    return abs(2.0 * val)


def rotation_generator(b_hat) -> np.ndarray:
    """3x3 cross-product matrix ``A v = b_hat x v``."""
    bx, by, bz = b_hat
    return np.array([[0, -bz, by], [bz, 0, -bx], [-by, bx, 0]], dtype=float)


def collective_orientation(F0, b_hat, phase: float, decay: float) -> np.ndarray:
    """Collective spin of a Lorentzian cloud precessing in a parallel gradient.

    ``F = (1 + A^2) F0 + exp(-decay) (A sin(phase) - A^2 cos(phase)) F0`` with
    ``A`` the rotation generator about ``b_hat``, ``phase = omega0 t`` and
    ``decay = t / T``; rotation is counter-clockwise for positive ``phase``.
    """
    A = rotation_generator(b_hat)
    A2 = A @ A
    F0 = np.asarray(F0, dtype=float)
    return (np.eye(3) + A2) @ F0 + np.exp(-decay) * (A * np.sin(phase) - A2 * np.cos(phase)) @ F0


def field_jacobian_reference(lam, b_mean, gyro: float, tau: float) -> np.ndarray:
    """Exact derivative of ``exp(-gamma tau A(B)) lam`` with respect to ``B`` (8x3).

    Uses the Frechet derivative of the matrix exponential along each field axis.
    """
    def gen(b):
        return np.einsum("c,cak->ak", np.asarray(b, dtype=float),
                         np.transpose(_commutator_coefficients(algebra.BASIS), (1, 0, 2))[:3])

    A = -gyro * tau * gen(b_mean)
    out = np.zeros((8, 3))
    for c in range(3):
        E = -gyro * tau * gen(np.eye(3)[c])
        _, dexp = linalg.expm_frechet(A, E)
        out[:, c] = dexp @ np.asarray(lam, dtype=float)
    return out
