"""Photometric alignment loss and its stop-gradient derivative.

The alignment ``M = (C*, b*)`` is solved from the current prediction and then
frozen: gradients flow through ``C* pred + b*`` only, never into the solve.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .align import DEFAULT_EPS, AffineTransform, Formulation, solve_affine
from .oracle import finite_diff
from .tensor import ImageRGB


class Norm(str, Enum):
    L1 = "l1"
    L2 = "l2"


@dataclass(frozen=True)
class LossConfig:
    """Weights and solver settings for ``L_pixel + alpha * L_PAL``.

    ``eps`` may be 0 for exact-model experiments; training code should keep
    it positive.
    """

    alpha: float = 0.6
    eps: float = DEFAULT_EPS
    norm: Norm = Norm.L1
    pixel_norm: Norm = Norm.L1
    formulation: Formulation = Formulation.AUGMENTED

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.eps < 0:
            raise ValueError("eps must be non-negative")
        object.__setattr__(self, "norm", Norm(self.norm))
        object.__setattr__(self, "pixel_norm", Norm(self.pixel_norm))
        object.__setattr__(self, "formulation", Formulation(self.formulation))

    def with_(self, **kw) -> "LossConfig":
        return replace(self, **kw)


@dataclass(frozen=True, eq=False)
class LossResult:
    pal_loss: float
    pixel_loss: float
    total_loss: float
    transform: AffineTransform
    alpha: float
    gradient: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "palLoss": self.pal_loss,
            "pixelLoss": self.pixel_loss,
            "totalLoss": self.total_loss,
            "alpha": self.alpha,
            "transform": self.transform.to_dict(),
        }


@dataclass(frozen=True, eq=False)
class LossGradient:
    """Gradients w.r.t. the prediction, each shaped ``(3, H, W)``."""

    pal: np.ndarray
    pixel: np.ndarray
    total: np.ndarray


def residual_norm(r: np.ndarray, norm: Norm) -> float:
    """Mean absolute or mean squared value over every sample of ``r``."""
    if norm is Norm.L1:
        return float(np.mean(np.abs(r)))
    return float(np.mean(r * r))


def residual_norm_grad(r: np.ndarray, norm: Norm) -> np.ndarray:
    """d residual_norm / d r, with sign(0) = 0 for the l1 case."""
    if norm is Norm.L1:
        return np.sign(r) / r.size
    return 2.0 * r / r.size


def _check(pred: ImageRGB, gt: ImageRGB):
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {pred.shape} and target {gt.shape} differ in size")


def solve_alignment(pred: ImageRGB, gt: ImageRGB, cfg: LossConfig) -> AffineTransform:
    return solve_affine(pred, gt, cfg.eps, cfg.formulation)


def pal_loss(pred: ImageRGB, gt: ImageRGB, cfg: LossConfig = LossConfig(),
             transform: AffineTransform | None = None, with_gradient: bool = False) -> LossResult:
    """Evaluate the pixel term, the alignment term and their weighted sum.

    ``transform`` freezes the alignment instead of solving it from ``pred``.
    """
    _check(pred, gt)
    m = transform if transform is not None else solve_alignment(pred, gt, cfg)
    p, t = pred.pixels(), gt.pixels()
    aligned_res = m.apply_pixels(p) - t
    raw_res = p - t
    pal = residual_norm(aligned_res, cfg.norm)
    pix = residual_norm(raw_res, cfg.pixel_norm)
    grad = None
    if with_gradient:
        grad = _gradient(m, aligned_res, raw_res, cfg).total.reshape(pred.data.shape)
    return LossResult(pal, pix, pix + cfg.alpha * pal, m, cfg.alpha, grad)


def _gradient(m: AffineTransform, aligned_res, raw_res, cfg: LossConfig) -> LossGradient:
    g_pal = m.C.T @ residual_norm_grad(aligned_res, cfg.norm)
    g_pix = residual_norm_grad(raw_res, cfg.pixel_norm)
    return LossGradient(g_pal, g_pix, g_pix + cfg.alpha * g_pal)


def pal_gradient(pred: ImageRGB, gt: ImageRGB, cfg: LossConfig = LossConfig(),
                 transform: AffineTransform | None = None) -> LossGradient:
    """Analytic gradients under the stop-gradient contract.

    For ``l2``: ``dL_PAL/dpred_i = 2/(3N) C*^T (aligned_i - gt_i)``;
    for ``l1``: ``1/(3N) C*^T sign(aligned_i - gt_i)``.  The pixel term is the
    same expression with ``C*`` replaced by the identity.
    """
    _check(pred, gt)
    m = transform if transform is not None else solve_alignment(pred, gt, cfg)
    p, t = pred.pixels(), gt.pixels()
    g = _gradient(m, m.apply_pixels(p) - t, p - t, cfg)
    shape = pred.data.shape
    return LossGradient(g.pal.reshape(shape), g.pixel.reshape(shape), g.total.reshape(shape))


@dataclass(frozen=True, eq=False)
class GradientCheckReport:
    detached: np.ndarray
    frozen_fd: np.ndarray
    full_pipeline_fd: np.ndarray
    frozen_max_abs_dev: float
    max_abs_deviation: float

    @property
    def relative_deviation(self) -> float:
        scale = max(float(np.max(np.abs(self.detached))), 1e-300)
        return self.max_abs_deviation / scale


def _pal_only(pred_arr, gt: ImageRGB, cfg: LossConfig, transform):
    return pal_loss(ImageRGB(pred_arr), gt, cfg, transform=transform).pal_loss


def full_pipeline_gradient_check(pred: ImageRGB, gt: ImageRGB, cfg: LossConfig,
                                 step: float = 1e-6) -> GradientCheckReport:
    """Compare the detached gradient of L_PAL with two finite-difference fields.

    ``frozen_fd`` keeps the solved transform fixed (it must match the detached
    gradient); ``full_pipeline_fd`` re-solves the alignment at every
    perturbation and therefore includes the path through ``C*`` and ``b*``.
    """
    if Norm(cfg.norm) is not Norm.L2:
        raise ValueError("full_pipeline_gradient_check requires the l2 norm")
    m = solve_alignment(pred, gt, cfg)
    detached = pal_gradient(pred, gt, cfg, transform=m).pal
    x0 = np.array(pred.data)
    frozen = finite_diff(lambda x: _pal_only(x, gt, cfg, m), x0, step)
    full = finite_diff(lambda x: _pal_only(x, gt, cfg, None), x0, step)
    return GradientCheckReport(
        detached=detached,
        frozen_fd=frozen,
        full_pipeline_fd=full,
        frozen_max_abs_dev=float(np.max(np.abs(frozen - detached))),
        max_abs_deviation=float(np.max(np.abs(full - detached))),
    )
