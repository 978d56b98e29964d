"""Fixed-size dense linear algebra for the 3x3 / 4x4 closed forms.

Vectors and matrices are plain float64 numpy arrays of shape ``(3,)``,
``(3, 3)`` or ``(4, 4)``; there is deliberately no general matrix class.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import SingularSystem

_SYM_TOL = 1e-12


def vec3(x) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64).reshape(3)
    if not np.isfinite(v).all():
        raise ValueError("Vec3 components must be finite")
    return v


def mat3(x) -> np.ndarray:
    m = np.asarray(x, dtype=np.float64).reshape(3, 3)
    if not np.isfinite(m).all():
        raise ValueError("Mat3 components must be finite")
    return m


def identity3() -> np.ndarray:
    return np.eye(3)


def frobenius(m) -> float:
    m = np.asarray(m, dtype=np.float64)
    return float(np.sqrt(np.sum(m * m)))


def trace(m) -> float:
    return float(np.trace(np.asarray(m, dtype=np.float64)))


def solve_sym(a, r) -> np.ndarray:
    """Solve ``a @ x = r`` for a small symmetric positive-definite ``a``.

    Uses a Cholesky factorization (never an explicit inverse).  ``r`` may be a
    vector or a matrix of right-hand sides.  Raises :class:`SingularSystem`
    when the factorization breaks down or a pivot is numerically zero.
    """
    a = np.asarray(a, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n) or n not in (1, 2, 3, 4):
        raise ValueError(f"solve_sym expects a square system of size <= 4, got {a.shape}")
    if r.shape[0] != n:
        raise ValueError(f"right-hand side has {r.shape[0]} rows, system has {n}")
    if not (np.isfinite(a).all() and np.isfinite(r).all()):
        raise ValueError("non-finite entries in linear system")
    scale = max(float(np.max(np.abs(a))), 1e-300)
    if np.max(np.abs(a - a.T)) > _SYM_TOL * scale:
        raise ValueError("solve_sym requires a symmetric matrix")
    try:
        factor, lower = cho_factor(a, lower=True, check_finite=False)
    except LinAlgError as exc:
        raise SingularSystem("matrix is not positive definite") from exc
    pivots = np.diag(factor) ** 2
    if pivots.min() <= n * np.finfo(np.float64).eps * np.max(np.diag(a)):
        raise SingularSystem("matrix is numerically singular")
    return cho_solve((factor, lower), r, check_finite=False)
