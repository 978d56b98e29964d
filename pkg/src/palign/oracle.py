"""Brute-force reference computations for auditing the closed forms.

Nothing here reuses the closed-form machinery it checks: the affine oracle
minimizes the ridge objective by gradient descent directly on pixel sums,
the scalar oracles scan a grid, and the linear-system oracle is textbook
Gaussian elimination.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import align
from .align import Formulation
from .tensor import ImageRGB


@dataclass(frozen=True, eq=False)
class OracleReport:
    closed_form: object
    oracle: object
    max_deviation: float
    iterations: int
    converged: bool
    tolerance: float
    gradient_norm: float = 0.0


def finite_diff(f: Callable[[np.ndarray], float], x, step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of an array.

    ``f`` receives a fresh array of the same shape as ``x`` on every call.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.array(x, dtype=np.float64)
    g = np.empty_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + step
        fp = f(x.copy())
        flat[k] = orig - step
        fm = f(x.copy())
        flat[k] = orig
        gflat[k] = (fp - fm) / (2.0 * step)
    return g


def gaussian_elimination(a, r) -> np.ndarray:
    """Solve ``a x = r`` by Gaussian elimination with partial pivoting."""
    a = np.array(a, dtype=np.float64)
    r = np.array(r, dtype=np.float64)
    vec = r.ndim == 1
    if vec:
        r = r[:, None]
    n = a.shape[0]
    aug = np.hstack([a, r])
    for col in range(n):
        piv = col + int(np.argmax(np.abs(aug[col:, col])))
        if aug[piv, col] == 0.0:
            raise ZeroDivisionError("singular matrix")
        aug[[col, piv]] = aug[[piv, col]]
        for row in range(col + 1, n):
            factor = aug[row, col] / aug[col, col]
            aug[row, col:] -= factor * aug[col, col:]
    x = np.zeros_like(r)
    for row in range(n - 1, -1, -1):
        x[row] = (aug[row, n:] - aug[row, row + 1:n] @ x[row + 1:]) / aug[row, row]
    return x[:, 0] if vec else x


# --------------------------------------------------------------------------
# affine descent oracle
# --------------------------------------------------------------------------


def _penalties(formulation: Formulation, eps: float, n: int):
    """Ridge weights on (C, b) implied by each formulation's closed form."""
    if formulation is Formulation.COVARIANCE:
        return n * eps, 0.0
    return eps, eps


def oracle_affine(pred: ImageRGB, gt: ImageRGB, eps: float, tol: float = 1e-6,
                  formulation: Formulation | str = Formulation.COVARIANCE,
                  max_iter: int = 100_000, gtol: float = 1e-10) -> OracleReport:
    """Minimize ``sum ||C x_i + b - y_i||^2 + lam_C ||C||^2 + lam_b ||b||^2``.

    Plain gradient descent from ``C = 0, b = 0`` with Armijo backtracking.
    The covariance formulation corresponds to ``lam_C = N eps, lam_b = 0``,
    the augmented one to ``lam_C = lam_b = eps``.  The result is compared
    entrywise with :func:`palign.align.solve_affine`.
    """
    formulation = Formulation(formulation)
    x, y = pred.pixels(), gt.pixels()
    n = x.shape[1]
    if n > 4096:
        raise ValueError("oracle_affine is meant for small instances (N <= 4096)")
    lam_c, lam_b = _penalties(formulation, eps, n)

    c = np.zeros((3, 3))
    b = np.zeros(3)
    t = 1.0
    it = 0
    gnorm = np.inf
    for it in range(1, max_iter + 1):
        r = c @ x + b[:, None] - y
        gc = 2.0 * (r @ x.T) + 2.0 * lam_c * c
        gb = 2.0 * r.sum(axis=1) + 2.0 * lam_b * b
        gnorm = float(np.sqrt(np.sum(gc * gc) + np.sum(gb * gb)))
        if gnorm <= gtol:
            break
        dc, db = -gc, -gb
        dr = dc @ x + db[:, None]
        lin = 2.0 * np.sum(r * dr) + 2.0 * lam_c * np.sum(c * dc) + 2.0 * lam_b * np.dot(b, db)
        quad = np.sum(dr * dr) + lam_c * np.sum(dc * dc) + lam_b * np.dot(db, db)
        t *= 2.0
        # J(theta + t d) - J(theta) expanded exactly; avoids cancellation near the optimum
        while t * lin + t * t * quad > 1e-4 * t * lin and t > 1e-30:
            t *= 0.5
        c = c + t * dc
        b = b + t * db

    closed = align.solve_affine(pred, gt, eps, formulation)
    dev = float(max(np.max(np.abs(closed.C - c)), np.max(np.abs(closed.b - b))))
    oracle_t = align.AffineTransform(c, b, eps=eps, formulation=formulation)
    return OracleReport(closed, oracle_t, dev, it, gnorm <= gtol and dev <= tol, tol, gnorm)


# --------------------------------------------------------------------------
# grid oracles for the scalar families
# --------------------------------------------------------------------------


def _grid_argmin(p: np.ndarray, t: np.ndarray, grid: np.ndarray, chunk: int = 2048) -> float:
    best, best_val = np.inf, None
    p, t = p.reshape(-1), t.reshape(-1)
    for start in range(0, grid.size, chunk):
        g = grid[start:start + chunk]
        sse = np.sum((g[:, None] * p[None, :] - t[None, :]) ** 2, axis=1)
        k = int(np.argmin(sse))
        if sse[k] < best:
            best, best_val = sse[k], float(g[k])
    return best_val


def _grid(value_range, step):
    lo, hi = value_range
    return lo + step * np.arange(int(np.floor((hi - lo) / step)) + 1)


def oracle_scalar_grid(pred: ImageRGB, gt: ImageRGB, value_range=(0.0, 4.0),
                       step: float = 1e-4) -> OracleReport:
    """Grid argmin of ``sum (c pred - gt)^2`` versus the optimal-scalar solver."""
    c_grid = _grid_argmin(pred.pixels(), gt.pixels(), _grid(value_range, step))
    c_closed = float(align.solve_optimal_scalar(pred, gt).C[0, 0])
    dev = abs(c_grid - c_closed)
    return OracleReport(c_closed, c_grid, dev, 0, dev <= step, step)


def oracle_diagonal_grid(pred: ImageRGB, gt: ImageRGB, value_range=(0.0, 4.0),
                         step: float = 1e-4) -> OracleReport:
    """Per-channel grid argmin versus the optimal-diagonal solver."""
    grid = _grid(value_range, step)
    p, t = pred.pixels(), gt.pixels()
    d_grid = np.array([_grid_argmin(p[c], t[c], grid) for c in range(3)])
    d_closed = np.diag(align.solve_optimal_diagonal(pred, gt).C).copy()
    dev = float(np.max(np.abs(d_grid - d_closed)))
    return OracleReport(d_closed, d_grid, dev, 0, dev <= step, step)


# --------------------------------------------------------------------------
# seeded instances
# --------------------------------------------------------------------------


def random_transform(rng: np.random.Generator, max_cond: float = 100.0, spread: float = 0.3):
    """Random ``(C0, b0)`` with ``cond(C0) <= max_cond``."""
    while True:
        c0 = np.eye(3) * rng.uniform(0.6, 1.6) + spread * rng.standard_normal((3, 3))
        if np.linalg.cond(c0) <= max_cond:
            return c0, rng.uniform(-0.15, 0.15, size=3)


def random_pair(rng: np.random.Generator, height: int = 8, width: int = 8,
                structural: float = 0.05):
    """Seeded non-degenerate test pair: gt ~ C0 pred + b0 + noise (unclamped)."""
    pred = rng.uniform(0.05, 0.95, size=(3, height, width))
    c0, b0 = random_transform(rng)
    gt = np.einsum("ij,jhw->ihw", c0, pred) + b0[:, None, None]
    gt = gt + structural * rng.standard_normal(gt.shape)
    return ImageRGB(pred), ImageRGB(gt)
