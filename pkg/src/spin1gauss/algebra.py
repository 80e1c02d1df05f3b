"""Spin-1 operator basis, structure constants and single-atom moments.

The eight single-atom operators are ordered ``(f_x, f_y, f_z, j_x, j_y, j_k,
j_l, j_m)``. Orientation ``f`` is the spin vector, alignment ``j`` the five
rank-2 tensor components built from it. All matrices act on the ``m = +1, 0,
-1`` Zeeman basis.
"""
from __future__ import annotations

import itertools

import numpy as np

SQRT2 = np.sqrt(2.0)
SQRT3 = np.sqrt(3.0)

NAMES = ("f_x", "f_y", "f_z", "j_x", "j_y", "j_k", "j_l", "j_m")
FX, FY, FZ, JX, JY, JK, JL, JM = range(8)

STOKES_NAMES = ("S_x", "S_y", "S_z")

# Commutator tolerance for basis validation; matrix entries are O(1).
_ALGEBRA_ATOL = 1e-12
# Negative-eigenvalue tolerance when deciding whether a mean vector is physical.
PHYSICAL_ATOL = 1e-9


def _spin_matrices() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    fx = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=complex) / SQRT2
    fy = np.array([[0, -1j, 0], [1j, 0, -1j], [0, 1j, 0]], dtype=complex) / SQRT2
    fz = np.diag([1.0, 0.0, -1.0]).astype(complex)
    return fx, fy, fz


def build_basis() -> np.ndarray:
    """Return the eight spin-1 operators as a ``(8, 3, 3)`` complex array."""
    fx, fy, fz = _spin_matrices()
    jx = fx @ fx - fy @ fy
    jy = fx @ fy + fy @ fx
    jk = fx @ fz + fz @ fx
    jl = fy @ fz + fz @ fy
    jm = (2 * fz @ fz - fx @ fx - fy @ fy) / SQRT3
    basis = np.array([fx, fy, fz, jx, jy, jk, jl, jm])
    basis.setflags(write=False)
    return basis


BASIS = build_basis()


def stokes_basis() -> np.ndarray:
    """Single-photon Stokes operators ``sigma/2`` on the (+, -) circular basis."""
    sx = np.array([[0, 1], [1, 0]], dtype=complex) / 2
    sy = np.array([[0, -1j], [1j, 0]], dtype=complex) / 2
    sz = np.array([[1, 0], [0, -1]], dtype=complex) / 2
    return np.array([sx, sy, sz])


# Nonzero structure constants up to antisymmetry, as (a, b, c, value).
# f(f_y, j_l, j_y) = 1 is required by the matrices although the commonly
# quoted list leaves it out.
ATOMIC_ENTRIES = (
    (FX, FY, FZ, 1.0),
    (JX, JY, FZ, 2.0),
    (FX, JL, JM, SQRT3),
    (FY, JM, JK, SQRT3),
    (FX, JY, JK, 1.0),
    (FX, JL, JX, 1.0),
    (FY, JK, JX, 1.0),
    (FZ, JK, JL, 1.0),
    (FY, JL, JY, 1.0),
)
STOKES_ENTRIES = ((0, 1, 2, 1.0),)


def antisymmetrize(entries, dim: int) -> np.ndarray:
    """Dense completely antisymmetric tensor from a sparse list of entries."""
    f = np.zeros((dim, dim, dim))
    for a, b, c, value in entries:
        for idx, sign in (((a, b, c), 1), ((b, c, a), 1), ((c, a, b), 1),
                          ((b, a, c), -1), ((a, c, b), -1), ((c, b, a), -1)):
            f[idx] = sign * value
    return f


def structure_constants_from_matrices(mats: np.ndarray) -> np.ndarray:
    """``f_abc = -i/2 Tr([m_a, m_b] m_c)`` for a basis with ``Tr(m_a m_b) = 2 delta``."""
    comm = np.einsum("aij,bjk->abik", mats, mats) - np.einsum("bij,ajk->abik", mats, mats)
    f = -0.5j * np.einsum("abij,cji->abc", comm, mats)
    return f.real


def _validated_atomic_constants() -> np.ndarray:
    sparse = antisymmetrize(ATOMIC_ENTRIES, 8)
    dense = structure_constants_from_matrices(BASIS)
    err = np.max(np.abs(sparse - dense))
    if err > _ALGEBRA_ATOL:
        raise RuntimeError(f"structure-constant table disagrees with the basis (max err {err:.3g})")
    sparse.setflags(write=False)
    return sparse


F_ATOMIC = _validated_atomic_constants()
F_STOKES = antisymmetrize(STOKES_ENTRIES, 3)
F_STOKES.setflags(write=False)


def expand_in_basis(op: np.ndarray, mats: np.ndarray = BASIS) -> np.ndarray:
    """Coefficients of ``op`` in the orthonormal basis (``Tr(m_a m_b) = 2 delta``)."""
    return 0.5 * np.einsum("aij,ji->a", mats, op)


def commutator_table(basis: np.ndarray = BASIS, atol: float = _ALGEBRA_ATOL) -> np.ndarray:
    """Expansion of ``-i[lambda_a, lambda_b]`` in the basis, shape ``(8, 8, 8)``.

    Raises ``ValueError`` listing every pair whose commutator leaves the span
    of the basis.
    """
    n = len(basis)
    table = np.zeros((n, n, n))
    bad = []
    for a, b in itertools.product(range(n), repeat=2):
        comm = -1j * (basis[a] @ basis[b] - basis[b] @ basis[a])
        coeffs = expand_in_basis(comm, basis)
        resid = comm - np.einsum("c,cij->ij", coeffs, basis)
        if np.max(np.abs(resid)) > atol or np.max(np.abs(coeffs.imag)) > atol:
            bad.append((NAMES[a], NAMES[b]))
        table[a, b] = coeffs.real
    if bad:
        raise ValueError(f"commutators outside the operator span: {bad}")
    return table


def adjoint_matrices(f: np.ndarray) -> np.ndarray:
    """``G[c]_{ak} = f_{a c k}``, the action of ``-i[., X_c]`` on coordinate vectors."""
    return np.transpose(f, (1, 0, 2))


def commutation_matrix(mean: np.ndarray, f: np.ndarray = F_ATOMIC) -> np.ndarray:
    """Real antisymmetric ``Sigma`` with ``i Sigma_ij = <[V_i, V_j]>``."""
    return np.einsum("ijk,k->ij", f, mean)


def rho_from_lambda(lam: np.ndarray) -> np.ndarray:
    return np.eye(3) / 3 + 0.5 * np.einsum("i,ijk->jk", lam, BASIS)


def is_physical(lam: np.ndarray, tol: float = PHYSICAL_ATOL) -> bool:
    return np.linalg.eigvalsh(rho_from_lambda(lam)).min() >= -tol


# M[k]_ij = 1/4 Tr(lambda_k {lambda_i, lambda_j})
_ANTI = np.einsum("iab,jbc->ijac", BASIS, BASIS) + np.einsum("jab,ibc->ijac", BASIS, BASIS)
M_KERNELS = (0.25 * np.einsum("kca,ijac->kij", BASIS, _ANTI)).real
M_KERNELS.setflags(write=False)


def single_atom_covariance(lam: np.ndarray, tol: float = PHYSICAL_ATOL) -> np.ndarray:
    """Symmetrized covariance of the basis operators in the state with mean ``lam``.

    ``Gamma = (2/3) 1 - lam lam^T + sum_k lam_k M^(k)``. Mean vectors whose
    density matrix has an eigenvalue below ``-tol`` are rejected.
    """
    lam = np.asarray(lam, dtype=float)
    if tol is not None and not is_physical(lam, tol):
        raise ValueError("mean vector does not correspond to a positive density matrix")
    return 2.0 / 3.0 * np.eye(8) - np.outer(lam, lam) + np.einsum("k,kij->ij", lam, M_KERNELS)


def axis_state(axis: str) -> np.ndarray:
    """Single-atom mean vector of the stretched state ``|m = +/-1>`` along an axis.

    ``axis`` is one of ``+x, -x, +y, -y, +z, -z``.
    """
    if len(axis) != 2 or axis[0] not in "+-" or axis[1] not in "xyz":
        raise ValueError(f"unknown pump axis {axis!r}")
    op = BASIS["xyz".index(axis[1])]
    w, v = np.linalg.eigh(op)
    psi = v[:, -1] if axis[0] == "+" else v[:, 0]
    rho = np.outer(psi, psi.conj())
    return np.einsum("ij,kji->k", rho, BASIS).real
