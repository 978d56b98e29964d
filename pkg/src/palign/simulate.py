"""Desk-scale training simulator for the photometric gradient pathology.

A 33-parameter per-channel model (3x3 kernel, gain and bias per channel) is
trained by plain gradient descent to undo blur and noise on procedural
textures.  Each training target additionally carries its own random colour
transform, which the model cannot predict from its input.  Validation error
is decomposed into photometric and structural (content) parts after every
step, so baseline and alignment-loss runs can be compared under the same seed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy.ndimage import gaussian_filter

from . import diagnose
from .align import AffineTransform, Formulation, solve_affine_pixels
from .errors import TrainingDiverged
from .loss import LossConfig, Norm, pal_gradient, pal_loss, solve_alignment
from .tensor import ImageRGB

N_PARAMS = 33


@dataclass(frozen=True)
class SyntheticPairConfig:
    """Knobs of the synthetic pair generator.

    Structural degradation is a wrap-around Gaussian blur plus Gaussian
    noise, followed by an affine re-calibration that makes the exact colour
    fit of clean on input the identity (so channel means match exactly).  The photometric shift is ``gt = C0 clean + b0`` with
    ``C0 = diag(gains) + crosstalk * U(-1, 1)`` off the diagonal.
    """

    image_size: int = 16
    blur_sigma: float = 1.0
    noise_std: float = 0.05
    shifts: bool = True
    gain_range: tuple[float, float] = (0.5, 2.0)
    bias_range: tuple[float, float] = (-0.2, 0.2)
    crosstalk: float = 0.1
    seed: int = 0


def neighbourhoods(x: np.ndarray) -> np.ndarray:
    """Reflect-padded 3x3 neighbourhood stack, shape ``(9, 3, H, W)``.

    Entry ``3u + v`` holds the input shifted by ``(u - 1, v - 1)``.
    """
    h, w = x.shape[1:]
    padded = np.pad(x, ((0, 0), (1, 1), (1, 1)), mode="reflect")
    return np.stack([padded[:, u:u + h, v:v + w] for u in range(3) for v in range(3)])


@dataclass(frozen=True, eq=False)
class SyntheticPair:
    input: ImageRGB
    gt: ImageRGB
    clean: ImageRGB
    C0: np.ndarray
    b0: np.ndarray

    @cached_property
    def patches(self) -> np.ndarray:
        return neighbourhoods(self.input.data)


def _texture(rng: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] / size
    img = np.empty((3, size, size))
    img[:] = rng.uniform(0.3, 0.6, size=3)[:, None, None]
    for _ in range(3):
        freq = rng.uniform(1.0, 4.0)
        theta = rng.uniform(0, np.pi)
        phase = rng.uniform(0, 2 * np.pi)
        wave = np.sin(2 * np.pi * freq * (xx * np.cos(theta) + yy * np.sin(theta)) + phase)
        img += rng.uniform(-0.12, 0.12, size=3)[:, None, None] * wave
    for _ in range(3):
        y0, x0 = rng.integers(0, size, size=2)
        h, w = rng.integers(2, max(3, size // 2), size=2)
        img[:, y0:y0 + h, x0:x0 + w] += rng.uniform(-0.2, 0.2, size=3)[:, None, None]
    return np.clip(img, 0.05, 0.95)


def _photometric_shift(rng: np.random.Generator, cfg: SyntheticPairConfig):
    if not cfg.shifts:
        return np.eye(3), np.zeros(3)
    c0 = np.diag(rng.uniform(*cfg.gain_range, size=3))
    off = cfg.crosstalk * rng.uniform(-1.0, 1.0, size=(3, 3))
    np.fill_diagonal(off, 0.0)
    return c0 + off, rng.uniform(*cfg.bias_range, size=3)


def make_pair(rng: np.random.Generator, cfg: SyntheticPairConfig) -> SyntheticPair:
    clean = _texture(rng, cfg.image_size)
    blurred = gaussian_filter(clean, sigma=(0, cfg.blur_sigma, cfg.blur_sigma), mode="wrap")
    degraded = blurred + cfg.noise_std * rng.standard_normal(clean.shape)
    # Blur lowers contrast and noise dilutes it, both of which an affine fit
    # would read as a colour change.  Re-calibrating the degraded image by its
    # own exact fit to the clean one makes that fit the identity, so the only
    # photometric component of a pair is the injected (C0, b0).
    h, w = clean.shape[1:]
    d = degraded.reshape(3, -1)
    cal = solve_affine_pixels(d, clean.reshape(3, -1), 0.0, Formulation.COVARIANCE)
    inp = cal.apply_pixels(d).reshape(3, h, w)
    c0, b0 = _photometric_shift(rng, cfg)
    gt = np.einsum("ij,jhw->ihw", c0, clean) + b0[:, None, None]
    return SyntheticPair(ImageRGB(inp), ImageRGB(gt), ImageRGB(clean), c0, b0)


def generate_pairs(cfg: SyntheticPairConfig, count: int, stream: int = 0) -> list[SyntheticPair]:
    """Deterministic pairs; pair ``k`` depends only on ``(seed, stream, k)``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    seeds = np.random.SeedSequence([cfg.seed, stream]).spawn(count)
    return [make_pair(np.random.default_rng(s), cfg) for s in seeds]


# --------------------------------------------------------------------------
# model
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ToyModel:
    """``pred_c = gain_c * (kernel_c conv input_c) + bias_c``, reflect padding."""

    kernel: np.ndarray
    gain: np.ndarray
    bias: np.ndarray

    @classmethod
    def identity(cls) -> "ToyModel":
        k = np.zeros((3, 3, 3))
        k[:, 1, 1] = 1.0
        return cls(k, np.ones(3), np.zeros(3))

    @classmethod
    def initial(cls, rng: np.random.Generator, jitter: float = 0.05) -> "ToyModel":
        base = cls.identity()
        return cls(base.kernel + jitter * rng.standard_normal((3, 3, 3)), base.gain, base.bias)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.kernel.reshape(-1), self.gain, self.bias])

    @classmethod
    def from_vector(cls, v) -> "ToyModel":
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (N_PARAMS,):
            raise ValueError(f"expected {N_PARAMS} parameters, got {v.shape}")
        return cls(v[:27].reshape(3, 3, 3).copy(), v[27:30].copy(), v[30:33].copy())

    def conv(self, patches: np.ndarray) -> np.ndarray:
        return np.einsum("ck,kchw->chw", self.kernel.reshape(3, 9), patches)

    def forward(self, patches: np.ndarray) -> np.ndarray:
        return self.gain[:, None, None] * self.conv(patches) + self.bias[:, None, None]

    def predict(self, img: ImageRGB) -> ImageRGB:
        return ImageRGB(self.forward(neighbourhoods(img.data)))


def parameter_gradient(model: ToyModel, patches: np.ndarray, grad_pred: np.ndarray) -> np.ndarray:
    """Chain rule from ``dL/dpred`` to the 33 parameters.

    ``patches`` is the :func:`neighbourhoods` stack of the model input.
    """
    dk = np.einsum("chw,kchw->ck", model.gain[:, None, None] * grad_pred, patches)
    dg = np.sum(grad_pred * model.conv(patches), axis=(1, 2))
    db = np.sum(grad_pred, axis=(1, 2))
    return np.concatenate([dk.reshape(-1), dg, db])


def _objective_cfg(cfg: LossConfig, pal_enabled: bool) -> LossConfig:
    return cfg if pal_enabled else cfg.with_(alpha=0.0)


def batch_loss(model: ToyModel, batch, cfg: LossConfig, pal_enabled: bool = True,
               transforms=None) -> float:
    """Mean total loss over ``batch``; ``transforms`` freezes each pair's alignment."""
    cfg = _objective_cfg(cfg, pal_enabled)
    total = 0.0
    for k, pair in enumerate(batch):
        pred = ImageRGB(model.forward(pair.patches))
        m = transforms[k] if transforms is not None else None
        if not pal_enabled and m is None:
            m = _IDENTITY
        total += pal_loss(pred, pair.gt, cfg, transform=m).total_loss
    return total / len(batch)


def loss_and_gradient(model: ToyModel, batch, cfg: LossConfig, pal_enabled: bool = True):
    """Batch loss, its 33-parameter gradient and the frozen per-pair transforms.

    A non-finite model output yields a NaN loss and gradient instead of an error.
    """
    cfg = _objective_cfg(cfg, pal_enabled)
    grad = np.zeros(N_PARAMS)
    total = 0.0
    transforms = []
    for pair in batch:
        out = model.forward(pair.patches)
        if not np.isfinite(out).all():
            return float("nan"), np.full(N_PARAMS, np.nan), []
        pred = ImageRGB(out)
        m = solve_alignment(pred, pair.gt, cfg) if pal_enabled else _IDENTITY
        transforms.append(m)
        total += pal_loss(pred, pair.gt, cfg, transform=m).total_loss
        g = pal_gradient(pred, pair.gt, cfg, transform=m).total
        grad += parameter_gradient(model, pair.patches, g)
    n = len(batch)
    return total / n, grad / n, transforms


_IDENTITY = AffineTransform.identity()


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainingRecord:
    step: int
    val_phot_error: float
    val_content_error: float
    rho: float
    train_loss: float


@dataclass
class TrainingTrace:
    records: list[TrainingRecord] = field(default_factory=list)

    def append(self, rec: TrainingRecord) -> None:
        if self.records and rec.step <= self.records[-1].step:
            raise ValueError("trace steps must increase")
        self.records.append(rec)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    @property
    def final(self) -> TrainingRecord:
        return self.records[-1]

    def mean_rho(self) -> float:
        return float(self.column("rho").mean())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "val_phot_error", "val_content_error", "rho", "train_loss"])
            for r in self.records:
                w.writerow([r.step, f"{r.val_phot_error:.9g}", f"{r.val_content_error:.9g}",
                            f"{r.rho:.9g}", f"{r.train_loss:.9g}"])


def validation_errors(model: ToyModel, val_pairs) -> tuple[float, float, float]:
    """Mean per-sample photometric error, content error and rho over ``val_pairs``.

    Uses the exact (eps = 0, covariance form) least-squares decomposition.
    """
    phot, content, rho = [], [], []
    for pair in val_pairs:
        d = diagnose.decompose(ImageRGB(model.forward(pair.patches)), pair.gt, 0.0, Formulation.COVARIANCE)
        n3 = d.delta_p.size
        phot.append(float(np.sum(d.delta_p ** 2)) / n3)
        content.append(float(np.sum(d.delta_s ** 2)) / n3)
        rho.append(d.rho)
    return float(np.mean(phot)), float(np.mean(content)), float(np.mean(rho))


def train_step(model: ToyModel, batch, cfg: LossConfig, lr: float, val_pairs=(),
               pal_enabled: bool = True, step: int = 0):
    """One gradient-descent step; returns ``(new_model, TrainingRecord)``.

    The record's validation fields are NaN when ``val_pairs`` is empty.
    """
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    loss, grad, _ = loss_and_gradient(model, batch, cfg, pal_enabled)
    if not np.isfinite(loss) or not np.isfinite(grad).all():
        raise TrainingDiverged(step, loss)
    new = ToyModel.from_vector(model.to_vector() - lr * grad) if lr > 0 else model
    if val_pairs:
        phot, content, rho = validation_errors(new, val_pairs)
    else:
        phot = content = rho = float("nan")
    return new, TrainingRecord(step, phot, content, rho, loss)


@dataclass(frozen=True)
class SimulationConfig:
    pairs: SyntheticPairConfig = SyntheticPairConfig()
    loss: LossConfig = LossConfig(alpha=0.6, eps=1e-3, norm=Norm.L2, pixel_norm=Norm.L2)
    train_count: int = 64
    val_count: int = 4
    batch_size: int = 4
    lr: float = 0.5
    seed: int = 0

    def with_seed(self, seed: int) -> "SimulationConfig":
        return replace(self, seed=seed, pairs=replace(self.pairs, seed=seed))


def run_experiment(cfg: SimulationConfig, steps: int, pal_enabled: bool) -> TrainingTrace:
    """Train from a seeded initialization; identical data order for both arms."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    train = generate_pairs(cfg.pairs, cfg.train_count, stream=0)
    val = generate_pairs(cfg.pairs, cfg.val_count, stream=1)
    rng = np.random.default_rng([cfg.seed, 2])
    model = ToyModel.initial(rng)
    order = rng.integers(0, len(train), size=(steps, cfg.batch_size))
    trace = TrainingTrace()
    for step in range(1, steps + 1):
        batch = [train[i] for i in order[step - 1]]
        model, rec = train_step(model, batch, cfg.loss, cfg.lr, val, pal_enabled, step)
        trace.append(rec)
    return trace
