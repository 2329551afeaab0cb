"""Deterministic synthetic portraits with matching landmark sets.

Real face photos cannot ship with the repository, so tests and demos use a
procedurally rendered portrait: an oval head with eyes, brows, nose, mouth
and textured skin, plus a 468-point landmark set whose feature indices sit
exactly on the rendered features. Rendering is a pure function of its
arguments, byte-stable across runs and platforms.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .facemesh import DEFAULT_INDEX_MAP, LANDMARK_COUNT, FaceIndexMap
from .imaging import Image, save_image
from .landmarks import LandmarkSet, landmark_document

# Feature layout in face-local units (x right, y down, 1.0 = face scale).
_LEFT_EYE_C = (-0.35, -0.20)
_RIGHT_EYE_C = (0.35, -0.20)
_EYE_RX, _EYE_RY = 0.13, 0.07
_MOUTH_C = (0.0, 0.45)
_MOUTH_RX, _MOUTH_RY = 0.27, 0.10
_CHEEK_C = (0.0, 0.05)
_CHEEK_RX, _CHEEK_RY = 0.68, 0.55


def _rot(points: np.ndarray, roll_rad: float) -> np.ndarray:
    c, s = math.cos(roll_rad), math.sin(roll_rad)
    return points @ np.array([[c, -s], [s, c]]).T


def _ring(center, rx, ry, count, phase=0.0) -> np.ndarray:
    t = 2.0 * np.pi * np.arange(count) / count + phase
    return np.column_stack([center[0] + rx * np.cos(t), center[1] + ry * np.sin(t)])


def _local_feature_points(index_map: FaceIndexMap) -> dict[int, np.ndarray]:
    """Face-local (x, y) for every inner-face landmark index."""
    out: dict[int, np.ndarray] = {}

    def place(indices, pts):
        for i, p in zip(indices, pts):
            out[i] = np.asarray(p, dtype=np.float64)

    place(index_map.left_eye, _ring(_LEFT_EYE_C, _EYE_RX, _EYE_RY, len(index_map.left_eye)))
    place(index_map.right_eye, _ring(_RIGHT_EYE_C, _EYE_RX, _EYE_RY, len(index_map.right_eye)))
    nb = len(index_map.left_brow)
    place(index_map.left_brow,
          [(-0.55 + 0.4 * k / max(nb - 1, 1), -0.38 - 0.04 * math.sin(math.pi * k / max(nb - 1, 1)))
           for k in range(nb)])
    place(index_map.right_brow,
          [(0.15 + 0.4 * k / max(nb - 1, 1), -0.42 + 0.04 * math.sin(math.pi * k / max(nb - 1, 1)) + 0.04)
           for k in range(len(index_map.right_brow))])
    bridge = [(0.0, -0.25 + 0.09 * k) for k in range(6)]
    wings = [(-0.10, 0.16), (0.10, 0.16), (-0.06, 0.22), (0.06, 0.22), (-0.03, 0.25), (0.03, 0.25)]
    place(index_map.nose, (bridge + wings)[: len(index_map.nose)])
    place(index_map.mouth, _ring(_MOUTH_C, _MOUTH_RX, _MOUTH_RY, len(index_map.mouth)))
    place(index_map.cheeks, _ring(_CHEEK_C, _CHEEK_RX, _CHEEK_RY, len(index_map.cheeks), phase=0.21))
    return out


def synthetic_landmarks(
    width: int,
    height: int,
    center: tuple[float, float] | None = None,
    scale: float | None = None,
    roll_deg: float = 0.0,
    index_map: FaceIndexMap = DEFAULT_INDEX_MAP,
) -> LandmarkSet:
    """Landmark set for the synthetic portrait at the given placement."""
    cx, cy = center if center is not None else (width / 2.0, height / 2.0)
    s = scale if scale is not None else 0.45 * min(width, height)
    roll = math.radians(roll_deg)

    local = _local_feature_points(index_map)
    pts = np.zeros((LANDMARK_COUNT, 3), dtype=np.float64)
    filled = np.zeros(LANDMARK_COUNT, dtype=bool)
    for i, p in local.items():
        pts[i, :2] = p
        pts[i, 2] = -0.02 * (1.0 - np.hypot(*p))
        filled[i] = True
    # Remaining indices scatter deterministically on the head oval.
    for i in np.nonzero(~filled)[0]:
        a = 2.399963229728653 * (i + 1)
        u = ((i * 2654435761) % 1000) / 1000.0
        r = 0.78 + 0.18 * u
        pts[i, 0] = 0.88 * r * math.cos(a)
        pts[i, 1] = 0.05 + 1.0 * r * math.sin(a)
        pts[i, 2] = 0.01 * math.sin(3.0 * a)

    xy = _rot(pts[:, :2], roll) * s + np.array([cx, cy])
    norm = xy / np.array([width, height])
    pts[:, 0] = np.clip(norm[:, 0], 0.002, 0.998)
    pts[:, 1] = np.clip(norm[:, 1], 0.002, 0.998)
    return LandmarkSet(points=pts, source_width=width, source_height=height)


def _soft_ellipse(
    xg: np.ndarray, yg: np.ndarray, cx: float, cy: float,
    rx: float, ry: float, roll: float, softness: float = 1.5,
) -> np.ndarray:
    """Anti-aliased inside-ellipse alpha via a smoothstep on the radial field."""
    dx = xg - cx
    dy = yg - cy
    if roll:
        c, s = math.cos(roll), math.sin(roll)
        dx, dy = c * dx + s * dy, -s * dx + c * dy
    q = np.sqrt((dx / rx) ** 2 + (dy / ry) ** 2)
    edge = softness / max(min(rx, ry), 1e-6)
    t = np.clip((1.0 + edge - q) / (2.0 * edge), 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def synthetic_portrait(
    width: int = 512,
    height: int = 512,
    seed: int = 0,
    center: tuple[float, float] | None = None,
    scale: float | None = None,
    roll_deg: float = 0.0,
    index_map: FaceIndexMap = DEFAULT_INDEX_MAP,
) -> tuple[Image, LandmarkSet]:
    """Render the portrait and its landmark set."""
    cx, cy = center if center is not None else (width / 2.0, height / 2.0)
    s = scale if scale is not None else 0.45 * min(width, height)
    roll = math.radians(roll_deg)
    rng = np.random.default_rng(seed)

    xs = np.arange(width, dtype=np.float64)
    ys = np.arange(height, dtype=np.float64)
    xg, yg = np.meshgrid(xs, ys)

    # Background: vertical gradient with a seeded hue tilt.
    base = 0.55 + 0.25 * (yg / max(height - 1, 1))
    tint = rng.uniform(-0.05, 0.05, size=3)
    img = np.stack([
        np.clip(base * (0.92 + tint[0]), 0, 1),
        np.clip(base * (0.95 + tint[1]), 0, 1),
        np.clip(base * (1.00 + tint[2]), 0, 1),
    ], axis=2)

    def paint(alpha: np.ndarray, color) -> None:
        a = alpha[:, :, None]
        img[:] = (1.0 - a) * img + a * np.asarray(color, dtype=np.float64)

    def feature(local_cx, local_cy, rx, ry, color, softness=1.5):
        c, si = math.cos(roll), math.sin(roll)
        gx = cx + s * (c * local_cx - si * local_cy)
        gy = cy + s * (si * local_cx + c * local_cy)
        paint(_soft_ellipse(xg, yg, gx, gy, rx * s, ry * s, roll, softness), color)

    # Hair cap, then skin oval over it.
    feature(0.0, -0.18, 0.97, 1.02, (0.23, 0.16, 0.11), softness=2.5)
    skin = (0.85, 0.67, 0.53)
    feature(0.0, 0.06, 0.86, 1.00, skin, softness=2.0)

    # Skin shading and texture inside the head region only.
    c0, s0 = math.cos(roll), math.sin(roll)
    hx = cx + s * (-s0 * 0.06)
    hy = cy + s * (c0 * 0.06)
    head = _soft_ellipse(xg, yg, hx, hy, 0.86 * s, 1.00 * s, roll, 2.0)
    shade = 0.16 * ((xg - hx) / (0.9 * s)) - 0.08 * ((yg - hy) / s) ** 2
    wave = 0.03 * np.sin(xg / 17.0 + seed) * np.sin(yg / 23.0 - seed)
    img += (head * (shade + wave))[:, :, None] * np.array([0.5, 0.4, 0.35])
    img = np.clip(img, 0.0, 1.0)

    # Features at the landmark locations.
    feature(*_LEFT_EYE_C, _EYE_RX, _EYE_RY, (0.97, 0.97, 0.96), softness=1.0)
    feature(*_RIGHT_EYE_C, _EYE_RX, _EYE_RY, (0.97, 0.97, 0.96), softness=1.0)
    feature(_LEFT_EYE_C[0], _LEFT_EYE_C[1], 0.045, 0.045, (0.24, 0.15, 0.08), softness=1.0)
    feature(_RIGHT_EYE_C[0], _RIGHT_EYE_C[1], 0.045, 0.045, (0.24, 0.15, 0.08), softness=1.0)
    feature(-0.35, -0.40, 0.17, 0.035, (0.25, 0.17, 0.10), softness=1.0)
    feature(0.35, -0.40, 0.17, 0.035, (0.25, 0.17, 0.10), softness=1.0)
    feature(0.0, 0.10, 0.055, 0.16, (0.78, 0.58, 0.45), softness=1.5)
    feature(*_MOUTH_C, _MOUTH_RX, _MOUTH_RY, (0.70, 0.33, 0.31), softness=1.2)
    feature(0.0, 0.45, 0.22, 0.016, (0.45, 0.18, 0.17), softness=0.8)

    return Image(np.clip(img, 0.0, 1.0)), synthetic_landmarks(
        width, height, center=(cx, cy), scale=s, roll_deg=roll_deg, index_map=index_map
    )


def write_sidecar(lms: LandmarkSet, path: str | Path) -> None:
    import json

    Path(path).write_text(json.dumps(landmark_document(lms)))


def make_workspace(
    root: str | Path,
    image_ids: tuple[str, ...] = ("000001", "000002", "000003", "000004", "000005"),
    size: int = 512,
) -> Path:
    """Create an offline-runnable workspace: inputs plus landmark sidecars.

    Sidecars are written for the original images and for the backend-output
    names the pipeline will query, which mock backends (geometry-preserving)
    make valid by construction.
    """
    root = Path(root)
    (root / "input_og_imgs").mkdir(parents=True, exist_ok=True)
    (root / "landmarks").mkdir(parents=True, exist_ok=True)
    for k, img_id in enumerate(image_ids):
        img, lms = synthetic_portrait(size, size, seed=k + 1)
        save_image(img, root / "input_og_imgs" / f"{img_id}.jpg")
        write_sidecar(lms, root / "landmarks" / f"{img_id}.landmarks.json")
        write_sidecar(lms, root / "landmarks" / f"{img_id}_private.landmarks.json")
    return root


def main() -> None:
    import argparse

    ap = argparse.ArgumentParser(description="Create a demo workspace with synthetic portraits")
    ap.add_argument("root", help="workspace directory to create")
    ap.add_argument("--count", type=int, default=5)
    ap.add_argument("--size", type=int, default=512)
    args = ap.parse_args()
    ids = tuple(f"{i + 1:06d}" for i in range(args.count))
    make_workspace(args.root, image_ids=ids, size=args.size)
    print(f"workspace ready at {args.root}")


if __name__ == "__main__":
    main()
