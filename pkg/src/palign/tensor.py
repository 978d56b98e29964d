"""Image data model, pixel statistics and PNG I/O.

Images are stored planar, shape ``(3, height, width)``, in float64.  The
unit-interval invariant is enforced on ingest (``load_png`` and
``ImageRGB.from_array(..., clamp=True)``); intermediate results such as an
unclamped aligned prediction may leave [0, 1] and are still valid images.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import png

from .errors import EmptyRegion, PngFormatError


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ImageRGB:
    """Planar RGB image with finite float64 intensities."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3 or data.shape[0] != 3:
            raise ValueError(f"expected planar (3, H, W) data, got shape {data.shape}")
        if data.shape[1] < 1 or data.shape[2] < 1:
            raise ValueError("image must contain at least one pixel")
        if not np.isfinite(data).all():
            raise ValueError("image contains non-finite values")
        if data.flags.writeable or not data.flags.c_contiguous:
            # private read-only copy; callers keep their buffer
            data = _frozen(data.copy())
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, arr, clamp: bool = False) -> "ImageRGB":
        """Build from a planar ``(3, H, W)`` or interleaved ``(H, W, 3)`` array."""
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 3 and arr.shape[0] != 3 and arr.shape[-1] == 3:
            arr = np.moveaxis(arr, -1, 0)
        if clamp:
            arr = np.clip(arr, 0.0, 1.0)
        return cls(arr)

    @classmethod
    def from_pixels(cls, pixels, height: int, width: int) -> "ImageRGB":
        """Inverse of :meth:`pixels`: a ``(3, N)`` matrix back to an image."""
        return cls(np.asarray(pixels, dtype=np.float64).reshape(3, height, width))

    @classmethod
    def constant(cls, value, height: int, width: int) -> "ImageRGB":
        value = np.broadcast_to(np.asarray(value, dtype=np.float64), (3,))
        return cls(np.broadcast_to(value[:, None, None], (3, height, width)).copy())

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def n_pixels(self) -> int:
        return self.height * self.width

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    def pixels(self) -> np.ndarray:
        """Read-only ``(3, N)`` view, one column per pixel in row-major order."""
        return self.data.reshape(3, -1)

    def interleaved(self) -> np.ndarray:
        return np.moveaxis(self.data, 0, -1)


@dataclass(frozen=True, eq=False)
class Mask:
    """Boolean pixel selector; ``True`` marks the inside region."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.array(self.bits, dtype=bool)
        if bits.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {bits.shape}")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    def flat(self) -> np.ndarray:
        return self.bits.reshape(-1)

    def invert(self) -> "Mask":
        return Mask(~self.bits)

    def count(self) -> int:
        return int(self.bits.sum())

    @classmethod
    def full(cls, height: int, width: int, value: bool = True) -> "Mask":
        return cls(np.full((height, width), value, dtype=bool))

    @classmethod
    def checkerboard(cls, height: int, width: int, cell: int = 1) -> "Mask":
        yy, xx = np.mgrid[0:height, 0:width]
        return cls(((yy // cell + xx // cell) % 2) == 0)

    @classmethod
    def from_image(cls, img: ImageRGB, threshold: float = 0.5) -> "Mask":
        """Threshold the channel mean of a mask image (e.g. a loaded PNG)."""
        return cls(img.data.mean(axis=0) > threshold)


@dataclass(frozen=True, eq=False)
class PixelStats:
    """First and second moments over a pixel selection.

    ``covariance`` is Cov(a, a); ``cross_covariance`` is Cov(b, a) with rows
    indexing channels of ``b``.  Normalization is by ``count`` (population
    moments), matching the expectation operator of the closed forms.
    """

    mean: np.ndarray
    covariance: np.ndarray
    count: int
    cross_covariance: np.ndarray | None = None
    mean_other: np.ndarray | None = None


def _check_same_shape(a: ImageRGB, b: ImageRGB | None, mask: Mask | None):
    if b is not None and b.shape != a.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    if mask is not None and mask.shape != a.shape:
        raise ValueError(f"mask shape {mask.shape} does not match image {a.shape}")


def select_pixels(img: ImageRGB, mask: Mask | None = None) -> np.ndarray:
    """``(3, n)`` pixel matrix, restricted to ``mask`` when given."""
    p = img.pixels()
    if mask is None:
        return p
    flat = mask.flat()
    if flat.all():
        # same buffer as the unmasked path, so the statistics agree bit for bit
        return p
    return p[:, flat]


def moments(a: np.ndarray, b: np.ndarray | None = None):
    """Two-pass mean and centered second moments of ``(3, n)`` samples.

    Returns ``(mu_a, cov_aa, mu_b, cov_ba)``; the last two are ``None`` when
    ``b`` is omitted.
    """
    n = a.shape[1]
    mu_a = a.mean(axis=1)
    ca = a - mu_a[:, None]
    cov_aa = (ca @ ca.T) / n
    cov_aa = 0.5 * (cov_aa + cov_aa.T)
    if b is None:
        return mu_a, cov_aa, None, None
    mu_b = b.mean(axis=1)
    cb = b - mu_b[:, None]
    return mu_a, cov_aa, mu_b, (cb @ ca.T) / n


def compute_stats(a: ImageRGB, b: ImageRGB | None = None, mask: Mask | None = None) -> PixelStats:
    """Per-channel mean, covariance and optional cross-covariance Cov(b, a)."""
    _check_same_shape(a, b, mask)
    pa = select_pixels(a, mask)
    n = pa.shape[1]
    if n == 0:
        raise EmptyRegion("mask selects no pixels")
    pb = select_pixels(b, mask) if b is not None else None
    mu_a, cov, mu_b, cross = moments(pa, pb)
    return PixelStats(mean=mu_a, covariance=cov, count=n, cross_covariance=cross, mean_other=mu_b)


# --------------------------------------------------------------------------
# PNG I/O
# --------------------------------------------------------------------------


def load_png(path) -> ImageRGB:
    """Decode an 8- or 16-bit grey/RGB(A) PNG into [0, 1] intensities.

    Alpha is dropped, grey is replicated to three channels and palette images
    are expanded to RGB.  Values are divided by the bit-depth maximum.
    """
    path = Path(path)
    try:
        reader = png.Reader(filename=str(path))
        width, height, rows, info = reader.asDirect()
        rows = list(rows)
    except png.Error as exc:
        raise PngFormatError(f"{path}: {exc}") from exc

    bitdepth = info["bitdepth"]
    if bitdepth not in (8, 16):
        raise PngFormatError(
            f"{path}: unsupported bit depth {bitdepth} (only 8- and 16-bit PNGs are decoded)"
        )
    planes = info["planes"]
    greyscale = info["greyscale"]
    alpha = info["alpha"]
    expected = (1 if greyscale else 3) + (1 if alpha else 0)
    if planes != expected:
        raise PngFormatError(f"{path}: unsupported PNG color layout with {planes} planes")

    arr = np.array(rows, dtype=np.float64).reshape(height, width, planes)
    arr /= float(2**bitdepth - 1)
    if alpha:
        arr = arr[..., :-1]
    if greyscale:
        arr = np.repeat(arr, 3, axis=-1)
    return ImageRGB.from_array(np.moveaxis(arr, -1, 0), clamp=True)


def to_bytes(values: np.ndarray) -> np.ndarray:
    """Quantize to uint8 with round-half-up and clamping."""
    q = np.floor(np.asarray(values, dtype=np.float64) * 255.0 + 0.5)
    return np.clip(q, 0, 255).astype(np.uint8)


def save_png(img: ImageRGB, path) -> None:
    """Write an 8-bit RGB PNG (value v stored as round(255 v) clamped)."""
    q = to_bytes(img.interleaved())
    writer = png.Writer(width=img.width, height=img.height, greyscale=False, bitdepth=8)
    with open(path, "wb") as fh:
        writer.write(fh, q.reshape(img.height, img.width * 3))


def save_gray_png(values: np.ndarray, path) -> None:
    """Write an ``(H, W)`` array in [0, 1] as an 8-bit greyscale PNG."""
    values = np.asarray(values, dtype=np.float64)
    q = to_bytes(values)
    writer = png.Writer(width=values.shape[1], height=values.shape[0], greyscale=True, bitdepth=8)
    with open(path, "wb") as fh:
        writer.write(fh, q)


def save_png16(img: ImageRGB, path) -> None:
    """Write a 16-bit RGB PNG; used for fixtures that need finer quantization."""
    q = np.clip(np.floor(img.interleaved() * 65535.0 + 0.5), 0, 65535).astype(np.uint16)
    writer = png.Writer(width=img.width, height=img.height, greyscale=False, bitdepth=16)
    with open(path, "wb") as fh:
        writer.write(fh, q.reshape(img.height, img.width * 3))
