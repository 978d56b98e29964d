"""Photometric / structural residual decomposition and gradient-energy split.

With the affine fit ``(C*, b*)`` of ``gt`` on ``pred``::

    gt - pred = [(C* - E) pred + b*] + [gt - C* pred - b*]
              =        delta_p        +        delta_s

For an l2 loss the per-pixel gradient is ``-(2/N)(delta_p + delta_s)``, so the
gradient energy splits into ``4/N^2 sum ||delta_p||^2`` (photometric) and
``4/N^2 sum ||delta_s||^2`` (structural), exactly when the fit is
unregularized.  Under ridge (covariance form, ``lam = N eps``) the cross term
is ``lam (||C*||_F^2 - tr C*)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import align, linalg
from .align import Formulation
from .tensor import ImageRGB


@dataclass(frozen=True, eq=False)
class ResidualDecomposition:
    delta_p: np.ndarray
    delta_s: np.ndarray
    e_phot: float
    e_struct: float
    rho: float
    cross_term: float
    mse_total: float
    eps: float
    lam: float
    transform: align.AffineTransform

    @property
    def n_pixels(self) -> int:
        return self.delta_p.shape[1] * self.delta_p.shape[2]

    def to_dict(self) -> dict:
        return {
            "ePhot": self.e_phot,
            "eStruct": self.e_struct,
            "rho": self.rho,
            "crossTerm": self.cross_term,
            "mseTotal": self.mse_total,
            "eps": self.eps,
        }

    def structural_magnitude(self) -> np.ndarray:
        """Per-pixel ``||delta_s||`` as an ``(H, W)`` array."""
        return np.sqrt(np.sum(self.delta_s * self.delta_s, axis=0))


def photometric_fraction(e_phot: float, e_struct: float) -> float:
    total = e_phot + e_struct
    return e_phot / total if total > 0 else 0.0


def decompose(pred: ImageRGB, gt: ImageRGB, eps: float = 0.0,
              formulation: Formulation | str = Formulation.COVARIANCE) -> ResidualDecomposition:
    """Split ``gt - pred`` into photometric and structural parts.

    ``rho`` is 0 when both energies vanish.  ``mse_total`` and ``cross_term``
    are raw sums over pixels (not means).
    """
    formulation = Formulation(formulation)
    m = align.solve_affine(pred, gt, eps, formulation)
    p, t = pred.pixels(), gt.pixels()
    n = p.shape[1]
    aligned = m.apply_pixels(p)
    dp = aligned - p
    ds = t - aligned
    raw = t - p
    sp = float(np.sum(dp * dp))
    ss = float(np.sum(ds * ds))
    scale = 4.0 / (n * n)
    lam = n * eps if formulation is Formulation.COVARIANCE else eps
    return ResidualDecomposition(
        delta_p=dp.reshape(pred.data.shape),
        delta_s=ds.reshape(pred.data.shape),
        e_phot=scale * sp,
        e_struct=scale * ss,
        rho=photometric_fraction(sp, ss),
        cross_term=float(np.sum(dp * ds)),
        mse_total=float(np.sum(raw * raw)),
        eps=float(eps),
        lam=float(lam),
        transform=m,
    )


@dataclass(frozen=True)
class PythagoreanReport:
    mse_total: float
    e_phot_raw: float
    e_struct_raw: float
    cross_term: float
    predicted_cross_term: float
    eps: float

    @property
    def identity_gap(self) -> float:
        """``mse_total - (e_phot_raw + e_struct_raw)``; equals twice the cross term."""
        return self.mse_total - (self.e_phot_raw + self.e_struct_raw)

    @property
    def cross_term_error(self) -> float:
        return abs(self.cross_term - self.predicted_cross_term)

    def to_dict(self) -> dict:
        return {
            "mseTotal": self.mse_total,
            "ePhotRaw": self.e_phot_raw,
            "eStructRaw": self.e_struct_raw,
            "crossTerm": self.cross_term,
            "predictedCrossTerm": self.predicted_cross_term,
            "eps": self.eps,
        }


def verify_pythagorean(pred: ImageRGB, gt: ImageRGB, eps: float = 0.0) -> PythagoreanReport:
    """Measure the decomposition terms and the closed-form ridge cross term.

    Always uses the covariance formulation, whose optimality conditions give
    ``sum delta_s = 0`` and ``sum delta_s pred^T = N eps C*``.
    """
    d = decompose(pred, gt, eps, Formulation.COVARIANCE)
    c = d.transform.C
    predicted = d.lam * (linalg.frobenius(c) ** 2 - linalg.trace(c))
    n = d.n_pixels
    return PythagoreanReport(
        mse_total=d.mse_total,
        e_phot_raw=d.e_phot * n * n / 4.0,
        e_struct_raw=d.e_struct * n * n / 4.0,
        cross_term=d.cross_term,
        predicted_cross_term=predicted,
        eps=float(eps),
    )


@dataclass(frozen=True)
class SignDominanceReport:
    frac_phot_dominant: float
    sample_count: int
    dominant_count: int


def sign_dominance(decomp: ResidualDecomposition) -> SignDominanceReport:
    """Fraction of pixel-channel samples where ``|delta_p,c| > |delta_s,c|``.

    On those samples the l1 gradient sign is set by the photometric part.
    """
    dom = np.abs(decomp.delta_p) > np.abs(decomp.delta_s)
    k = int(dom.sum())
    return SignDominanceReport(k / dom.size, int(dom.size), k)


def optimality_residuals(decomp: ResidualDecomposition, pred: ImageRGB):
    """``sum_i delta_s`` (3,) and ``sum_i delta_s pred^T`` (3, 3)."""
    ds = decomp.delta_s.reshape(3, -1)
    return ds.sum(axis=1), ds @ pred.pixels().T


def error_map(decomp: ResidualDecomposition) -> np.ndarray:
    """``||delta_s||`` normalized by its maximum (all zeros if there is none)."""
    mag = decomp.structural_magnitude()
    peak = float(mag.max())
    return mag / peak if peak > 0 else mag
