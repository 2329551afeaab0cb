"""Piecewise affine warping over a Delaunay mesh of facial landmarks.

The warp iterates destination pixels (inverse mapping, no holes): each
pixel inside the requested region is located in its mesh triangle, mapped
back to the source by that triangle's affine transform, and bilinearly
sampled. A validity mask records which pixels were covered by a triangle
and sampled in-frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay, QhullError

from .errors import CollinearInput, DegenerateTriangle, FewerThanThreePoints
from .facemesh import DEFAULT_INDEX_MAP, FaceIndexMap
from .imaging import Image, SoftMask, sample_bilinear_many
from .landmarks import LandmarkSet, fit_similarity, similarity_transform_points

# Barycentric boundary tolerance; boundary pixels go to the lowest-index triangle.
_BARY_EPS = 1e-9
# Sub-noise source coordinates snap to the lattice so identity and integer
# translations reproduce pixels byte-exactly.
_SNAP_EPS = 1e-6


@dataclass
class Triangulation:
    """Vertices (n, 2) in pixels and CCW vertex-index triples."""

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)


@dataclass
class AffineTransform:
    """2x3 matrix [a b tx; c d ty] mapping (x, y) -> (ax + by + tx, cx + dy + ty)."""

    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.shape != (2, 3):
            raise ValueError(f"affine matrix must be 2x3, got {self.matrix.shape}")
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("affine matrix entries must be finite")

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.matrix[:, :2].T + self.matrix[:, 2]


def _tri_ccw(vertices: np.ndarray, tri: np.ndarray) -> np.ndarray:
    a, b, c = vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]
    cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    if cross < 0:
        return tri[[0, 2, 1]]
    return tri


def delaunay(points) -> Triangulation:
    """Delaunay triangulation with CCW triangles sorted for stable ordering."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) < 3:
        raise FewerThanThreePoints(f"need >= 3 points, got {len(pts)}")
    try:
        tess = Delaunay(pts)
    except QhullError as exc:
        raise CollinearInput(f"points do not span 2-D: {exc}") from exc
    if tess.simplices.size == 0:
        raise CollinearInput("points do not span 2-D")
    tris = np.array([_tri_ccw(pts, t) for t in tess.simplices], dtype=np.int64)
    # Canonical order: rotate each triple to start at its smallest index,
    # then sort rows, so equal point sets give identical triangulations.
    rolled = []
    for t in tris:
        k = int(np.argmin(t))
        rolled.append(np.roll(t, -k))
    tris = np.array(sorted(rolled, key=tuple), dtype=np.int64)
    return Triangulation(vertices=pts, triangles=tris)


def affine_from_triangles(src, dst) -> AffineTransform:
    """The unique affine map sending the src triangle vertices to dst, exactly."""
    s = np.asarray(src, dtype=np.float64).reshape(3, 2)
    d = np.asarray(dst, dtype=np.float64).reshape(3, 2)
    m = np.column_stack([s, np.ones(3)])
    det = np.linalg.det(m)
    if abs(det) < 1e-12:
        raise DegenerateTriangle(f"source triangle is degenerate (|det| = {abs(det):.3g})")
    # Columns of coef solve m @ [a, b, tx] = dst_x and m @ [c, d, ty] = dst_y.
    coef = np.linalg.solve(m, d)
    return AffineTransform(coef.T)


def _snap(values: np.ndarray) -> np.ndarray:
    rounded = np.round(values)
    return np.where(np.abs(values - rounded) <= _SNAP_EPS, rounded, values)


def ring_anchor_points(dst_pts: np.ndarray, region: SoftMask, margin: float = 2.0) -> np.ndarray | None:
    """Eight rectangle anchors around the region so the mesh covers all of it.

    Face landmarks only span the inner hull; Poisson blending needs source
    content out to the region boundary. Anchors extend the mesh there.
    """
    sel = region.alpha > 0
    if not sel.any():
        return None
    ys, xs = np.nonzero(sel)
    x0, x1 = xs.min() - margin, xs.max() + margin
    y0, y1 = ys.min() - margin, ys.max() + margin
    # Keep anchors clear of the landmark bounding box as well.
    x0 = min(x0, dst_pts[:, 0].min() - margin)
    x1 = max(x1, dst_pts[:, 0].max() + margin)
    y0 = min(y0, dst_pts[:, 1].min() - margin)
    y1 = max(y1, dst_pts[:, 1].max() + margin)
    xm, ym = (x0 + x1) / 2.0, (y0 + y1) / 2.0
    return np.array([
        [x0, y0], [xm, y0], [x1, y0],
        [x1, ym], [x1, y1], [xm, y1],
        [x0, y1], [x0, ym],
    ])


def warp_region(
    src: Image,
    src_lms: LandmarkSet,
    dst_lms: LandmarkSet,
    region: SoftMask,
    index_map: FaceIndexMap = DEFAULT_INDEX_MAP,
    extend_mesh: bool = True,
) -> tuple[Image, SoftMask]:
    """Warp src facial content onto the destination landmark geometry.

    Triangulates the destination inner-face landmarks (optionally extended
    with similarity-mapped ring anchors so the mesh covers the whole region),
    inverse-maps every region pixel and samples src bilinearly. Returns the
    warped image and the validity mask.
    """
    src_pts = src_lms.pixel_points(index_map.inner_face)
    dst_pts = dst_lms.pixel_points(index_map.inner_face)

    if extend_mesh:
        anchors_dst = ring_anchor_points(dst_pts, region)
        if anchors_dst is not None:
            scale, theta, translation, _ = fit_similarity(src_pts, dst_pts)
            # Map dst anchors back through the inverse similarity.
            inv_scale = 1.0 / scale
            anchors_src = similarity_transform_points(
                anchors_dst - translation, inv_scale, -theta, np.zeros(2)
            )
            src_pts = np.vstack([src_pts, anchors_src])
            dst_pts = np.vstack([dst_pts, anchors_dst])

    tess = delaunay(dst_pts)

    h, w = region.alpha.shape
    warped = np.zeros((h, w, 3), dtype=np.float64)
    validity = np.zeros((h, w), dtype=np.float64)
    wanted = region.alpha > 0
    if not wanted.any():
        return Image(warped), SoftMask(validity)
    assigned = np.zeros((h, w), dtype=bool)

    for tri in tess.triangles:
        d0, d1, d2 = tess.vertices[tri]
        s0, s1, s2 = src_pts[tri[0]], src_pts[tri[1]], src_pts[tri[2]]
        xmin = max(int(np.floor(min(d0[0], d1[0], d2[0]))), 0)
        xmax = min(int(np.ceil(max(d0[0], d1[0], d2[0]))), w - 1)
        ymin = max(int(np.floor(min(d0[1], d1[1], d2[1]))), 0)
        ymax = min(int(np.ceil(max(d0[1], d1[1], d2[1]))), h - 1)
        if xmin > xmax or ymin > ymax:
            continue
        window = wanted[ymin:ymax + 1, xmin:xmax + 1] & ~assigned[ymin:ymax + 1, xmin:xmax + 1]
        if not window.any():
            continue
        yy, xx = np.nonzero(window)
        px = xx + xmin
        py = yy + ymin
        det = (d1[0] - d0[0]) * (d2[1] - d0[1]) - (d2[0] - d0[0]) * (d1[1] - d0[1])
        if abs(det) < 1e-12:
            continue
        w1 = ((px - d0[0]) * (d2[1] - d0[1]) - (d2[0] - d0[0]) * (py - d0[1])) / det
        w2 = ((d1[0] - d0[0]) * (py - d0[1]) - (px - d0[0]) * (d1[1] - d0[1])) / det
        w0 = 1.0 - w1 - w2
        inside = (w0 >= -_BARY_EPS) & (w1 >= -_BARY_EPS) & (w2 >= -_BARY_EPS)
        if not inside.any():
            continue
        px, py = px[inside], py[inside]
        inverse = affine_from_triangles(np.array([d0, d1, d2]), np.array([s0, s1, s2]))
        coords = inverse.apply(np.column_stack([px, py]).astype(np.float64))
        sx = _snap(coords[:, 0])
        sy = _snap(coords[:, 1])
        in_frame = (sx >= 0.0) & (sx <= src.width - 1.0) & (sy >= 0.0) & (sy <= src.height - 1.0)
        warped[py, px] = sample_bilinear_many(src.data, sx, sy)
        validity[py[in_frame], px[in_frame]] = 1.0
        assigned[py, px] = True

    return Image(np.clip(warped, 0.0, 1.0)), SoftMask(validity)
