"""Cyclic Jacobi eigensolver for small complex Hermitian matrices."""

from __future__ import annotations

import itertools
import math

import numpy as np


class ConvergenceError(RuntimeError):
    """Raised when the Jacobi sweeps hit the iteration cap."""


def _off_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a - np.diag(np.diag(a))))


def eigh(matrix, tol: float = 1e-12, max_sweeps: int = 100):
    """Eigen-decompose a Hermitian matrix with cyclic Jacobi rotations.

    Each rotation first removes the phase of the pivot ``a[p, q]`` and then
    applies the real symmetric Jacobi rotation that zeroes it.

    Parameters
    ----------
    matrix : array_like, shape (n, n)
        Hermitian input. Only tested for n <= 16.
    tol : float
        Convergence threshold on the Frobenius norm of the off-diagonal part.
    max_sweeps : int
        Iteration cap on full sweeps over the upper triangle.

    Returns
    -------
    w : ndarray, shape (n,)
        Eigenvalues in ascending order.
    v : ndarray, shape (n, n)
        Unitary matrix whose columns are the matching eigenvectors.

    Raises
    ------
    ConvergenceError
        If the off-diagonal norm is still above ``tol`` after ``max_sweeps``.
    """
    a = np.array(matrix, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    a = 0.5 * (a + a.conj().T)
    v = np.eye(n, dtype=complex)
    pairs = list(itertools.combinations(range(n), 2))

    for _ in range(max_sweeps + 1):
        if _off_norm(a) < tol:
            break
        for p, q in pairs:
            apq = complex(a[p, q])
            r = abs(apq)
            if r < 1e-300:
                continue
            cp = apq.conjugate() / r
            tau = (a[q, q].real - a[p, p].real) / (2.0 * r)
            t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + math.sqrt(1.0 + tau * tau))
            c = 1.0 / math.sqrt(1.0 + t * t)
            s = t * c
            col_p = a[:, p].copy()
            col_q = a[:, q] * cp
            a[:, p] = c * col_p - s * col_q
            a[:, q] = s * col_p + c * col_q
            row_p = a[p, :].copy()
            row_q = a[q, :] * cp.conjugate()
            a[p, :] = c * row_p - s * row_q
            a[q, :] = s * row_p + c * row_q
            vec_p = v[:, p].copy()
            vec_q = v[:, q] * cp
            v[:, p] = c * vec_p - s * vec_q
            v[:, q] = s * vec_p + c * vec_q
            a[p, q] = a[q, p] = 0.0
            a[p, p] = a[p, p].real
            a[q, q] = a[q, q].real
    else:
        raise ConvergenceError(
            f"Jacobi did not converge in {max_sweeps} sweeps (off-norm {_off_norm(a):.3e})"
        )

    w = np.diag(a).real.copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def eigvalsh(matrix, tol: float = 1e-12, max_sweeps: int = 100) -> np.ndarray:
    return eigh(matrix, tol=tol, max_sweeps=max_sweeps)[0]
