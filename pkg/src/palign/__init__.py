"""Closed-form photometric alignment between paired images.

The package exposes the alignment families (:mod:`palign.align`), the
alignment loss with stop-gradient semantics (:mod:`palign.loss`), the
photometric/structural residual split (:mod:`palign.diagnose`), dataset
statistics (:mod:`palign.dataset`), a toy training simulator
(:mod:`palign.simulate`) and brute-force oracles (:mod:`palign.oracle`).
"""

__version__ = "0.1.0"

from .align import (  # noqa: E402
    AffineTransform,
    AlignmentFamily,
    Formulation,
    MaskedTransform,
    apply_transform,
    solve_affine,
    solve_family,
)
from .diagnose import ResidualDecomposition, decompose  # noqa: E402
from .errors import PalignError  # noqa: E402
from .loss import LossConfig, LossResult, Norm, pal_gradient, pal_loss  # noqa: E402
from .tensor import ImageRGB, Mask, compute_stats, load_png, save_png  # noqa: E402

__all__ = [
    "AffineTransform", "AlignmentFamily", "Formulation", "MaskedTransform", "apply_transform",
    "solve_affine", "solve_family", "ResidualDecomposition", "decompose", "PalignError",
    "LossConfig", "LossResult", "Norm", "pal_gradient", "pal_loss", "ImageRGB", "Mask",
    "compute_stats", "load_png", "save_png",
]
