"""Raster primitives: image buffers, blur, Canny edges, bilinear sampling, codecs.

Intensities are normalized floats in [0, 1]; 8-bit only at file/wire
boundaries. Convolution and sampling clamp to the border.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage
from PIL import ImageOps
from scipy import ndimage

from .errors import DimensionMismatch

# Rec.601 luma weights.
_LUMA = np.array([0.299, 0.587, 0.114])


def _check_unit_range(arr: np.ndarray, what: str) -> None:
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError(f"{what} values must lie in [0, 1]")


@dataclass
class Image:
    """RGB raster, shape (height, width, 3), float64 in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3 or self.data.shape[2] != 3:
            raise ValueError(f"Image data must have shape (H, W, 3), got {self.data.shape}")
        _check_unit_range(self.data, "Image")

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def to_rgb8(self) -> np.ndarray:
        """Quantize to an 8-bit (H, W, 3) uint8 buffer."""
        return np.clip(np.round(self.data * 255.0), 0, 255).astype(np.uint8)


@dataclass
class GrayImage:
    """Single-channel luma raster, shape (height, width), float64 in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValueError(f"GrayImage data must have shape (H, W), got {self.data.shape}")
        _check_unit_range(self.data, "GrayImage")

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass
class SoftMask:
    """Alpha raster, shape (height, width), float64 in [0, 1]; 1 = fully masked."""

    alpha: np.ndarray

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        if self.alpha.ndim != 2:
            raise ValueError(f"SoftMask alpha must have shape (H, W), got {self.alpha.shape}")
        _check_unit_range(self.alpha, "SoftMask")

    @property
    def width(self) -> int:
        return self.alpha.shape[1]

    @property
    def height(self) -> int:
        return self.alpha.shape[0]

    def support(self) -> np.ndarray:
        """Boolean array of pixels with any masking at all (alpha > 0)."""
        return self.alpha > 0.0


def to_grayscale(img: Image) -> GrayImage:
    """Rec.601 luma: 0.299 R + 0.587 G + 0.114 B."""
    return GrayImage(img.data @ _LUMA)


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian taps truncated at 3 sigma."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    radius = int(np.ceil(3.0 * sigma))
    if sigma == 0 or radius == 0:
        return np.array([1.0])
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _blur_array(data: np.ndarray, sigma: float) -> np.ndarray:
    k = gaussian_kernel1d(sigma)
    if k.size == 1:
        return data.copy()
    out = ndimage.correlate1d(data, k, axis=0, mode="nearest")
    out = ndimage.correlate1d(out, k, axis=1, mode="nearest")
    return np.clip(out, 0.0, 1.0)


def gaussian_blur(img, sigma: float):
    """Separable Gaussian blur of a GrayImage or SoftMask; sigma = 0 is identity."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if isinstance(img, SoftMask):
        return SoftMask(_blur_array(img.alpha, sigma))
    if isinstance(img, GrayImage):
        return GrayImage(_blur_array(img.data, sigma))
    raise TypeError(f"gaussian_blur expects GrayImage or SoftMask, got {type(img).__name__}")


def sobel_gradients(data: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sobel gradients normalized so a unit step yields |g| = 1; clamped borders."""
    deriv = np.array([-1.0, 0.0, 1.0])
    smooth = np.array([1.0, 2.0, 1.0])
    gx = ndimage.correlate1d(data, deriv, axis=1, mode="nearest")
    gx = ndimage.correlate1d(gx, smooth, axis=0, mode="nearest") / 4.0
    gy = ndimage.correlate1d(data, deriv, axis=0, mode="nearest")
    gy = ndimage.correlate1d(gy, smooth, axis=1, mode="nearest") / 4.0
    return gx, gy


def canny_edges(img: GrayImage, low: float, high: float, sigma: float = 1.0) -> SoftMask:
    """Standard Canny: Gaussian smooth, Sobel, non-maximum suppression, hysteresis.

    Thresholds apply to the normalized gradient magnitude. The result is a
    binary-valued SoftMask.
    """
    if not (0.0 <= low <= high <= 1.0):
        raise ValueError(f"thresholds must satisfy 0 <= low <= high <= 1, got low={low}, high={high}")
    smoothed = _blur_array(img.data, sigma) if sigma > 0 else img.data
    gx, gy = sobel_gradients(smoothed)
    mag = np.hypot(gx, gy)

    # Non-maximum suppression with directions quantized to 4 bins. The
    # asymmetric comparison (> backward, >= forward) keeps exactly one pixel
    # of a two-pixel plateau, which a hard step produces.
    h, w = mag.shape
    padded = np.pad(mag, 1, mode="edge")
    angle = np.degrees(np.arctan2(gy, gx)) % 180.0
    offsets = {
        0: (0, 1),   # horizontal gradient: compare left/right
        1: (1, 1),   # 45 degrees
        2: (1, 0),   # vertical gradient: compare up/down
        3: (1, -1),  # 135 degrees
    }
    bins = np.floor(((angle + 22.5) % 180.0) / 45.0).astype(int) % 4
    nms = np.zeros_like(mag)
    ys, xs = np.mgrid[0:h, 0:w]
    for b, (dy, dx) in offsets.items():
        sel = bins == b
        if not sel.any():
            continue
        y, x = ys[sel], xs[sel]
        forward = padded[y + 1 + dy, x + 1 + dx]
        backward = padded[y + 1 - dy, x + 1 - dx]
        m = mag[sel]
        keep = (m > backward) & (m >= forward)
        nms[y[keep], x[keep]] = m[keep]

    # Hysteresis: keep weak components connected (8-neighborhood) to a strong pixel.
    weak = (nms >= low) & (nms > 0)
    strong = (nms >= high) & (nms > 0)
    if not strong.any():
        return SoftMask(np.zeros_like(mag))
    labels, n = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    keep_ids = np.unique(labels[strong])
    keep_ids = keep_ids[keep_ids != 0]
    edges = np.isin(labels, keep_ids).astype(np.float64)
    return SoftMask(edges)


def sample_bilinear_many(data: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Vectorized bilinear sampling with clamp-to-edge coordinates.

    `data` is (H, W) or (H, W, C); returns samples with matching trailing shape.
    """
    h, w = data.shape[:2]
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(int)
    y0 = np.floor(ys).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    if data.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    top = data[y0, x0] * (1.0 - fx) + data[y0, x1] * fx
    bot = data[y1, x0] * (1.0 - fx) + data[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def sample_bilinear(img: Image, x: float, y: float) -> np.ndarray:
    """Bilinear sample of one pixel; out-of-range coordinates clamp to the border."""
    return sample_bilinear_many(img.data, np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64))


# --- codecs -----------------------------------------------------------------

def decode_image(blob: bytes) -> Image:
    """Decode PNG/JPEG bytes to a normalized RGB Image (EXIF orientation applied)."""
    with PILImage.open(io.BytesIO(blob)) as pil:
        pil = ImageOps.exif_transpose(pil)
        arr = np.asarray(pil.convert("RGB"), dtype=np.float64) / 255.0
    return Image(arr)


def encode_image(img: Image, format: str = "png", jpeg_quality: int = 95) -> bytes:
    """Encode to PNG (lossless) or JPEG with fixed settings so runs reproduce."""
    pil = PILImage.fromarray(img.to_rgb8(), mode="RGB")
    buf = io.BytesIO()
    fmt = format.lower()
    if fmt == "png":
        pil.save(buf, format="PNG", compress_level=6)
    elif fmt in ("jpg", "jpeg"):
        pil.save(buf, format="JPEG", quality=jpeg_quality, subsampling=0)
    else:
        raise ValueError(f"unsupported format: {format}")
    return buf.getvalue()


def load_image(path: str | Path) -> Image:
    return decode_image(Path(path).read_bytes())


def save_image(img: Image, path: str | Path, jpeg_quality: int = 95) -> None:
    path = Path(path)
    fmt = "jpeg" if path.suffix.lower() in (".jpg", ".jpeg") else "png"
    path.write_bytes(encode_image(img, format=fmt, jpeg_quality=jpeg_quality))


def save_mask_png(mask: SoftMask, path: str | Path) -> None:
    """Save mask alpha as single-channel 8-bit PNG (UI preview helper)."""
    arr = np.clip(np.round(mask.alpha * 255.0), 0, 255).astype(np.uint8)
    PILImage.fromarray(arr, mode="L").save(Path(path), format="PNG")


def ensure_same_shape(a, b, what: str = "images") -> None:
    sa = a.alpha.shape if isinstance(a, SoftMask) else a.data.shape[:2]
    sb = b.alpha.shape if isinstance(b, SoftMask) else b.data.shape[:2]
    if sa != sb:
        raise DimensionMismatch(f"{what} differ in size: {sa} vs {sb}")


def psnr(a: Image, b: Image, region: np.ndarray | None = None) -> float:
    """Peak signal-to-noise ratio in dB over an optional boolean region."""
    diff = a.data - b.data
    if region is not None:
        diff = diff[region]
    mse = float(np.mean(diff * diff))
    if mse == 0:
        return float("inf")
    return -10.0 * np.log10(mse)
