"""Identity-mask construction and the masked composite.

The identity-sensitive region is the convex hull of the inner-face
landmarks, scaled about its centroid by the mask ratio (the privacy knob),
rasterized and feathered. The composite replaces masked pixels with a
constant fill so the transmitted image carries no facial pixel data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CollinearInput, DimensionMismatch, FewerThanThreePoints
from .facemesh import DEFAULT_INDEX_MAP, FaceIndexMap
from .imaging import GrayImage, Image, SoftMask, canny_edges, gaussian_blur, to_grayscale
from .landmarks import LandmarkSet


@dataclass
class Polygon:
    """Ordered (x, y) vertices in pixels, counter-clockwise."""

    vertices: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2 or len(self.vertices) < 3:
            raise ValueError(f"polygon needs an (n>=3, 2) vertex array, got {self.vertices.shape}")

    def signed_area(self) -> float:
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def area(self) -> float:
        return abs(self.signed_area())

    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)


@dataclass
class MaskConfig:
    """Tunable masking knobs: ratio, hull expansion, feathering, fill, overlay."""

    mask_ratio: float = 1.0
    hull_expansion: float = 1.05
    feather_sigma: float = 3.0
    fill: tuple[float, float, float] = (0.0, 0.0, 0.0)
    edge_overlay: bool = False
    edge_low: float = 0.08
    edge_high: float = 0.16

    def __post_init__(self):
        if self.mask_ratio <= 0:
            raise ValueError("mask_ratio must be > 0")
        if self.feather_sigma < 0:
            raise ValueError("feather_sigma must be >= 0")
        if any(not (0.0 <= c <= 1.0) for c in self.fill):
            raise ValueError("fill must lie in [0, 1] per channel")


def _cross(o: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    return float((a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]))


def convex_hull(points) -> Polygon:
    """Minimal convex polygon (monotone chain), CCW, no collinear vertices."""
    pts = np.unique(np.asarray(points, dtype=np.float64).reshape(-1, 2), axis=0)
    if len(pts) < 3:
        raise FewerThanThreePoints(f"need >= 3 distinct points, got {len(pts)}")
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def half(iterable):
        out: list[np.ndarray] = []
        for p in iterable:
            while len(out) >= 2 and _cross(out[-2], out[-1], p) <= 0:
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise CollinearInput("all points are collinear")
    poly = Polygon(np.array(hull))
    # Normalize orientation to shoelace-positive (CCW).
    if poly.signed_area() < 0:
        poly = Polygon(poly.vertices[::-1].copy())
    return poly


def scale_polygon(poly: Polygon, factor: float) -> Polygon:
    """Scale every vertex about the vertex-average centroid."""
    if factor <= 0:
        raise ValueError("scale factor must be > 0")
    c = poly.centroid()
    return Polygon(c + factor * (poly.vertices - c))


def rasterize_mask(poly: Polygon, width: int, height: int) -> SoftMask:
    """Binary mask: 1 where the pixel center is inside or on the convex polygon."""
    alpha = np.zeros((height, width), dtype=np.float64)
    if poly.area() < 1e-12:
        return SoftMask(alpha)
    verts = poly.vertices if poly.signed_area() > 0 else poly.vertices[::-1]
    xs = np.arange(width, dtype=np.float64)
    ys = np.arange(height, dtype=np.float64)
    gx, gy = np.meshgrid(xs, ys)
    inside = np.ones((height, width), dtype=bool)
    n = len(verts)
    for i in range(n):
        x1, y1 = verts[i]
        x2, y2 = verts[(i + 1) % n]
        cross = (x2 - x1) * (gy - y1) - (y2 - y1) * (gx - x1)
        inside &= cross >= 0
        if not inside.any():
            break
    alpha[inside] = 1.0
    return SoftMask(alpha)


def feather_mask(mask: SoftMask, sigma: float) -> SoftMask:
    """Gaussian-soften the mask boundary; sigma = 0 is identity."""
    if sigma == 0:
        return SoftMask(mask.alpha.copy())
    return gaussian_blur(mask, sigma)


def apply_mask(img: Image, mask: SoftMask, fill) -> Image:
    """Masked composite: out = (1 - alpha) * img + alpha * fill, per channel."""
    if (img.height, img.width) != (mask.height, mask.width):
        raise DimensionMismatch(
            f"image {img.data.shape[:2]} vs mask {mask.alpha.shape}"
        )
    c = np.asarray(fill, dtype=np.float64)
    if c.shape != (3,):
        raise ValueError("fill must be a 3-channel constant")
    a = mask.alpha[:, :, None]
    return Image((1.0 - a) * img.data + a * c)


def build_face_mask(
    img: Image,
    lms: LandmarkSet,
    cfg: MaskConfig,
    index_map: FaceIndexMap = DEFAULT_INDEX_MAP,
) -> SoftMask:
    """Inner-face hull, scaled by hull_expansion * mask_ratio, rasterized, feathered."""
    if (lms.source_width, lms.source_height) != (img.width, img.height):
        raise DimensionMismatch(
            f"landmarks are for {lms.source_width}x{lms.source_height}, "
            f"image is {img.width}x{img.height}"
        )
    pts = lms.pixel_points(index_map.inner_face)
    hull = convex_hull(pts)
    scaled = scale_polygon(hull, cfg.hull_expansion * cfg.mask_ratio)
    mask = rasterize_mask(scaled, img.width, img.height)
    return feather_mask(mask, cfg.feather_sigma)


def mask_image(
    img: Image,
    lms: LandmarkSet,
    cfg: MaskConfig,
    index_map: FaceIndexMap = DEFAULT_INDEX_MAP,
) -> tuple[Image, SoftMask]:
    """Build the face mask and return (masked composite, mask)."""
    mask = build_face_mask(img, lms, cfg, index_map)
    composite = apply_mask(img, mask, cfg.fill)
    if cfg.edge_overlay:
        composite = edge_overlay(composite, img, mask, cfg)
    return composite, mask


def edge_overlay(masked: Image, context: Image, mask: SoftMask, cfg: MaskConfig) -> Image:
    """Blend context-derived Canny edges into the mask boundary band.

    Edges are computed only from pixels with alpha < 0.5; facial pixels are
    replaced by the fill luma before edge detection and are never read, so
    the overlay cannot leak masked content.
    """
    if not cfg.edge_overlay:
        return masked
    if (context.height, context.width) != (mask.height, mask.width):
        raise DimensionMismatch("context and mask sizes differ")
    facial = mask.alpha >= 0.5
    gray = to_grayscale(context).data.copy()
    gray[facial] = float(np.dot(cfg.fill, (0.299, 0.587, 0.114)))
    edges = canny_edges(GrayImage(gray), cfg.edge_low, cfg.edge_high).alpha
    # Band weight peaks mid-feather and vanishes at both ends, confining the
    # overlay to the transition zone.
    band = 4.0 * mask.alpha * (1.0 - mask.alpha)
    w = (band * edges)[:, :, None]
    return Image(np.clip(masked.data * (1.0 - w) + w, 0.0, 1.0))


def masked_pixel_count(mask: SoftMask, threshold: float = 0.5) -> int:
    return int(np.count_nonzero(mask.alpha >= threshold))
