"""Closed-form photometric alignment between a prediction and a target.

Every family reduces to an affine colour map ``x -> C x + b``.  In order of
expressiveness:

========== ============================== ==========
family     model                          parameters
========== ============================== ==========
chanmean   ``x + b`` (per-channel shift)  3
gtmean     ``c x`` with ratio of means    1 (biased)
scalar     ``c x``, least squares         1
diagonal   ``diag(d) x``, least squares   3
affine     ``C x + b``, ridge LS          12
masked     affine inside / outside mask   24
========== ============================== ==========

The full affine fit has two formulations:

* ``augmented`` (default) regresses the target on homogeneous pixels
  ``[x; 1]`` and solves ``(X^T X + eps I4) W = X^T T``.  ``eps`` acts on the
  raw, unnormalized Gram matrix and also shrinks the bias.
* ``covariance`` solves ``C = Cov(gt, x) (Cov(x, x) + eps E)^-1`` and
  ``b = mu_gt - C mu_x``.  ``eps`` acts on the normalized covariance and the
  bias is not penalized.  The two agree when ``eps_cov = eps_gram / N`` only
  up to the bias penalty; both converge to ordinary least squares as eps -> 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import linalg
from .errors import DegenerateMean, RegionTooSmall
from .tensor import ImageRGB, Mask, moments

MIN_PARTITION_PIXELS = 16
DEFAULT_EPS = 1e-3

_DEGENERATE = 1e-12


class AlignmentFamily(str, Enum):
    CHANNEL_MEAN = "chanmean"
    GT_MEAN = "gtmean"
    OPTIMAL_SCALAR = "scalar"
    OPTIMAL_DIAGONAL = "diagonal"
    FULL_AFFINE = "affine"
    MASKED_AFFINE = "masked"


class Formulation(str, Enum):
    AUGMENTED = "augmented"
    COVARIANCE = "covariance"


@dataclass(frozen=True, eq=False)
class AffineTransform:
    """Colour map ``x -> C x + b`` plus the settings that produced it."""

    C: np.ndarray
    b: np.ndarray
    eps: float | None = None
    formulation: Formulation | None = None
    family: AlignmentFamily | None = None

    def __post_init__(self):
        object.__setattr__(self, "C", linalg.mat3(self.C))
        object.__setattr__(self, "b", linalg.vec3(self.b))

    @classmethod
    def identity(cls) -> "AffineTransform":
        return cls(np.eye(3), np.zeros(3))

    def matrix34(self) -> np.ndarray:
        """``[C | b]`` as a 3x4 matrix acting on homogeneous pixels."""
        return np.hstack([self.C, self.b[:, None]])

    def apply_pixels(self, p: np.ndarray) -> np.ndarray:
        return self.C @ p + self.b[:, None]

    def to_dict(self) -> dict:
        return {
            "C": self.C.tolist(),
            "b": self.b.tolist(),
            "eps": self.eps,
            "formulation": self.formulation.value if self.formulation else None,
            "family": self.family.value if self.family else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AffineTransform":
        return cls(
            np.array(d["C"], dtype=np.float64),
            np.array(d["b"], dtype=np.float64),
            eps=d.get("eps"),
            formulation=Formulation(d["formulation"]) if d.get("formulation") else None,
            family=AlignmentFamily(d["family"]) if d.get("family") else None,
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True, eq=False)
class MaskedTransform:
    inside: AffineTransform
    outside: AffineTransform
    eps: float | None = None

    def to_dict(self) -> dict:
        return {"inside": self.inside.to_dict(), "outside": self.outside.to_dict(), "eps": self.eps}

    def apply_pixels(self, p: np.ndarray, mask: Mask) -> np.ndarray:
        flat = mask.flat()
        out = np.empty_like(p)
        out[:, flat] = self.inside.apply_pixels(p[:, flat])
        out[:, ~flat] = self.outside.apply_pixels(p[:, ~flat])
        return out


def _pair_pixels(pred: ImageRGB, gt: ImageRGB):
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {pred.shape} and target {gt.shape} differ in size")
    return pred.pixels(), gt.pixels()


# --------------------------------------------------------------------------
# low-capacity families
# --------------------------------------------------------------------------


def solve_channel_mean(pred: ImageRGB, gt: ImageRGB) -> AffineTransform:
    """Per-channel additive shift ``b_c = mean(gt_c) - mean(pred_c)``."""
    p, t = _pair_pixels(pred, gt)
    b = t.mean(axis=1) - p.mean(axis=1)
    return AffineTransform(np.eye(3), b, family=AlignmentFamily.CHANNEL_MEAN)


def solve_gt_mean(pred: ImageRGB, gt: ImageRGB) -> AffineTransform:
    """Scalar gain from the ratio of global means (all pixels and channels)."""
    p, t = _pair_pixels(pred, gt)
    mu_pred = float(p.mean())
    if abs(mu_pred) <= _DEGENERATE:
        raise DegenerateMean(f"prediction mean {mu_pred!r} is too close to zero")
    c = float(t.mean()) / mu_pred
    return AffineTransform(c * np.eye(3), np.zeros(3), family=AlignmentFamily.GT_MEAN)


def solve_optimal_scalar(pred: ImageRGB, gt: ImageRGB) -> AffineTransform:
    """Least-squares scalar gain ``c = sum(pred*gt) / sum(pred^2)``."""
    p, t = _pair_pixels(pred, gt)
    if float(np.mean(p * p)) <= _DEGENERATE:
        raise DegenerateMean("prediction is (numerically) all zero")
    c = float(np.sum(p * t) / np.sum(p * p))
    return AffineTransform(c * np.eye(3), np.zeros(3), family=AlignmentFamily.OPTIMAL_SCALAR)


def solve_optimal_diagonal(pred: ImageRGB, gt: ImageRGB) -> AffineTransform:
    """Per-channel least-squares gain without bias."""
    p, t = _pair_pixels(pred, gt)
    energy = np.sum(p * p, axis=1)
    for c, name in enumerate("RGB"):
        if energy[c] <= _DEGENERATE:
            raise DegenerateMean(f"channel {name} of the prediction is (numerically) all zero")
    d = np.sum(p * t, axis=1) / energy
    return AffineTransform(np.diag(d), np.zeros(3), family=AlignmentFamily.OPTIMAL_DIAGONAL)


# --------------------------------------------------------------------------
# full affine
# --------------------------------------------------------------------------


def gram_system(p: np.ndarray, t: np.ndarray):
    """``X^T X`` (4x4) and ``X^T T`` (4x3) for design rows ``[x_i; 1]``."""
    n = p.shape[1]
    x = np.empty((n, 4))
    x[:, :3] = p.T
    x[:, 3] = 1.0
    return x.T @ x, x.T @ t.T


def stats_flop_count(n_pixels: int) -> int:
    """Floating point operations of the augmented statistics pass.

    ``X^T X`` costs 16 multiply-adds per pixel and ``X^T T`` 12, i.e.
    ``56 N`` flops; for a 256x256 image that is about 3.67e6 (0.0037 GFLOP).
    The 4x4 solve adds a constant of roughly 150 flops, ignored here.
    """
    return 2 * (16 + 12) * int(n_pixels)


def _affine_augmented(p: np.ndarray, t: np.ndarray, eps: float):
    xtx, xtt = gram_system(p, t)
    w = linalg.solve_sym(xtx + eps * np.eye(4), xtt)  # (4, 3)
    m = w.T
    return m[:, :3], m[:, 3]


def _affine_covariance(p: np.ndarray, t: np.ndarray, eps: float):
    mu_p, cov_pp, mu_t, cov_tp = moments(p, t)
    # C (Cov_pp + eps E) = Cov_tp  <=>  (Cov_pp + eps E) C^T = Cov_tp^T
    c = linalg.solve_sym(cov_pp + eps * np.eye(3), cov_tp.T).T
    return c, mu_t - c @ mu_p


def solve_affine_pixels(p: np.ndarray, t: np.ndarray, eps: float = DEFAULT_EPS,
                        formulation: Formulation | str = Formulation.AUGMENTED) -> AffineTransform:
    """Full affine fit on ``(3, n)`` pixel matrices."""
    formulation = Formulation(formulation)
    if eps < 0:
        raise ValueError("eps must be non-negative")
    if formulation is Formulation.AUGMENTED:
        c, b = _affine_augmented(p, t, eps)
    else:
        c, b = _affine_covariance(p, t, eps)
    return AffineTransform(c, b, eps=float(eps), formulation=formulation,
                           family=AlignmentFamily.FULL_AFFINE)


def solve_affine(pred: ImageRGB, gt: ImageRGB, eps: float = DEFAULT_EPS,
                 formulation: Formulation | str = Formulation.AUGMENTED) -> AffineTransform:
    """Ridge-regularized affine colour alignment of ``pred`` onto ``gt``.

    Raises :class:`~palign.errors.SingularSystem` when ``eps == 0`` and the
    prediction's colours do not span an affine 3-space.
    """
    p, t = _pair_pixels(pred, gt)
    return solve_affine_pixels(p, t, eps, formulation)


def solve_masked_affine(pred: ImageRGB, gt: ImageRGB, mask: Mask, eps: float = DEFAULT_EPS,
                        formulation: Formulation | str = Formulation.AUGMENTED) -> MaskedTransform:
    """Independent affine fits inside and outside ``mask`` (same eps for both)."""
    p, t = _pair_pixels(pred, gt)
    if mask.shape != pred.shape:
        raise ValueError(f"mask shape {mask.shape} does not match image {pred.shape}")
    parts = {}
    for name, sel in (("inside", mask), ("outside", mask.invert())):
        n = sel.count()
        if n < MIN_PARTITION_PIXELS:
            raise RegionTooSmall(
                f"{name} partition has {n} pixels; at least {MIN_PARTITION_PIXELS} are required"
            )
        flat = sel.flat()
        tr = solve_affine_pixels(p[:, flat], t[:, flat], eps, formulation)
        parts[name] = AffineTransform(tr.C, tr.b, eps=tr.eps, formulation=tr.formulation,
                                      family=AlignmentFamily.MASKED_AFFINE)
    return MaskedTransform(parts["inside"], parts["outside"], eps=float(eps))


def apply_transform(t: AffineTransform, img: ImageRGB, clamp: bool = False) -> ImageRGB:
    """Per-pixel ``C x + b``; clamp to [0, 1] only for export."""
    out = t.apply_pixels(img.pixels())
    if clamp:
        np.clip(out, 0.0, 1.0, out=out)
    return ImageRGB.from_pixels(out, img.height, img.width)


def apply_masked_transform(t: MaskedTransform, img: ImageRGB, mask: Mask,
                           clamp: bool = False) -> ImageRGB:
    out = t.apply_pixels(img.pixels(), mask)
    if clamp:
        np.clip(out, 0.0, 1.0, out=out)
    return ImageRGB.from_pixels(out, img.height, img.width)


_SOLVERS = {
    AlignmentFamily.CHANNEL_MEAN: solve_channel_mean,
    AlignmentFamily.GT_MEAN: solve_gt_mean,
    AlignmentFamily.OPTIMAL_SCALAR: solve_optimal_scalar,
    AlignmentFamily.OPTIMAL_DIAGONAL: solve_optimal_diagonal,
}


def solve_family(family: AlignmentFamily | str, pred: ImageRGB, gt: ImageRGB,
                 eps: float = DEFAULT_EPS, formulation: Formulation | str = Formulation.AUGMENTED,
                 mask: Mask | None = None):
    """Dispatch to the solver of ``family``.

    Returns an :class:`AffineTransform`, or a :class:`MaskedTransform` for the
    masked family (which requires ``mask``).
    """
    family = AlignmentFamily(family)
    if family is AlignmentFamily.MASKED_AFFINE:
        if mask is None:
            raise ValueError("the masked family requires a mask")
        return solve_masked_affine(pred, gt, mask, eps, formulation)
    if mask is not None:
        raise ValueError(f"family {family.value!r} does not take a mask")
    if family is AlignmentFamily.FULL_AFFINE:
        return solve_affine(pred, gt, eps, formulation)
    return _SOLVERS[family](pred, gt)


def sse(a: ImageRGB, b: ImageRGB) -> float:
    """Sum of squared differences over all pixels and channels."""
    d = a.pixels() - b.pixels()
    return float(np.sum(d * d))
