"""Symmetric positive-definite solve helpers: factorize-and-solve, no explicit inverses."""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .exceptions import DegenerateMoments

# Reciprocal-condition floor below which a moment matrix counts as singular.
RCOND_TOL = 1e-12


def symmetrize(a: np.ndarray) -> np.ndarray:
    return (a + a.T) / 2.0


def rcond_sym(a: np.ndarray) -> float:
    """Reciprocal condition number of a symmetric matrix from its eigenvalues."""
    eig = np.abs(np.linalg.eigvalsh(symmetrize(np.asarray(a, dtype=float))))
    top = float(eig.max())
    if top == 0.0:
        return 0.0
    return float(eig.min()) / top


def spd_factor(a: np.ndarray, *, name: str = "matrix"):
    """Cholesky factorization of a symmetric PD matrix.

    Raises DegenerateMoments when the matrix is numerically singular
    (reciprocal condition below RCOND_TOL) or not positive definite.
    """
    a = symmetrize(np.asarray(a, dtype=float))
    if rcond_sym(a) < RCOND_TOL:
        raise DegenerateMoments(
            f"{name} is numerically singular (reciprocal condition below {RCOND_TOL:g})"
        )
    try:
        return scipy.linalg.cho_factor(a, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise DegenerateMoments(f"{name} is not positive definite") from exc


def spd_solve(a: np.ndarray, b: np.ndarray, *, name: str = "matrix") -> np.ndarray:
    """Solve ``a @ x = b`` for symmetric positive definite ``a``."""
    return scipy.linalg.cho_solve(spd_factor(a, name=name), np.asarray(b, dtype=float))


def spd_inverse(a: np.ndarray, *, name: str = "matrix") -> np.ndarray:
    """Inverse of a symmetric PD matrix via its Cholesky factorization."""
    a = np.asarray(a, dtype=float)
    inv = scipy.linalg.cho_solve(spd_factor(a, name=name), np.eye(a.shape[0]))
    return symmetrize(inv)


def is_spd(a: np.ndarray, *, sym_tol: float = 1e-8) -> bool:
    """True when ``a`` is symmetric within tolerance and positive definite."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    scale = max(1.0, float(np.abs(a).max()))
    if float(np.abs(a - a.T).max()) > sym_tol * scale:
        return False
    try:
        np.linalg.cholesky(symmetrize(a))
    except np.linalg.LinAlgError:
        return False
    return True
