"""Facial landmark acquisition and head-pose-delta estimation.

Landmark detection is pluggable: a sidecar-file provider keeps the whole
pipeline testable offline, a remote-detector client talks to an HTTP
service. Pose change between two landmark sets is measured by a
least-squares 2-D similarity fit; its in-plane rotation is the roll and
the normalized post-fit misfit is the out-of-plane proxy.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, runtime_checkable

import httpx
import numpy as np

from .errors import (
    DegenerateFace,
    MalformedLandmarks,
    NoFaceFound,
    ProviderUnavailable,
)
from .facemesh import DEFAULT_INDEX_MAP, LANDMARK_COUNT, FaceIndexMap
from .imaging import Image


@dataclass
class LandmarkSet:
    """468 ordered (x, y, z) points; x, y normalized to [0, 1] of the source frame."""

    points: np.ndarray
    source_width: int
    source_height: int

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.shape != (LANDMARK_COUNT, 3):
            raise MalformedLandmarks(
                f"expected {LANDMARK_COUNT} (x, y, z) points, got shape {self.points.shape}"
            )
        xy = self.points[:, :2]
        if xy.min() < 0.0 or xy.max() > 1.0:
            raise MalformedLandmarks("landmark x, y coordinates must lie in [0, 1]")
        if self.source_width <= 0 or self.source_height <= 0:
            raise MalformedLandmarks("source dimensions must be positive")

    def pixel_points(self, indices: list[int] | None = None) -> np.ndarray:
        """(n, 2) array of x, y in source-pixel units."""
        pts = self.points if indices is None else self.points[indices]
        return pts[:, :2] * np.array([self.source_width, self.source_height], dtype=np.float64)


@dataclass
class PoseDelta:
    """In-plane rotation (degrees) and normalized residual of the similarity fit."""

    roll: float
    residual: float


@runtime_checkable
class LandmarkProvider(Protocol):
    def detect(self, image: Image, source: Path | None = None) -> LandmarkSet: ...


def parse_landmark_document(doc: dict) -> LandmarkSet:
    """Parse the sidecar/wire JSON document {width, height, points}."""
    try:
        width = int(doc["width"])
        height = int(doc["height"])
        points = doc["points"]
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedLandmarks(f"bad landmark document: {exc}") from exc
    if not points:
        raise NoFaceFound("landmark document reports no face")
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape != (LANDMARK_COUNT, 3):
        raise MalformedLandmarks(
            f"expected {LANDMARK_COUNT} [x, y, z] entries, got shape {arr.shape}"
        )
    return LandmarkSet(points=arr, source_width=width, source_height=height)


def landmark_document(lms: LandmarkSet) -> dict:
    return {
        "width": lms.source_width,
        "height": lms.source_height,
        "points": lms.points.tolist(),
    }


def sidecar_path(image_path: Path, directory: Path | None = None) -> Path:
    base = directory if directory is not None else image_path.parent
    return base / f"{image_path.stem}.landmarks.json"


@dataclass
class SidecarLandmarkProvider:
    """Reads `<image-stem>.landmarks.json` from `directory` (or next to the image)."""

    directory: Path | None = None

    def detect(self, image: Image, source: Path | None = None) -> LandmarkSet:
        if source is None:
            raise ProviderUnavailable("sidecar provider needs the image path")
        source = Path(source)
        candidates = []
        if self.directory is not None:
            candidates.append(sidecar_path(source, Path(self.directory)))
        candidates.append(sidecar_path(source))
        for path in candidates:
            if path.exists():
                try:
                    doc = json.loads(path.read_text())
                except (OSError, json.JSONDecodeError) as exc:
                    raise ProviderUnavailable(f"cannot read sidecar {path}: {exc}") from exc
                return parse_landmark_document(doc)
        raise ProviderUnavailable(f"no landmark sidecar found for {source}")


@dataclass
class RemoteLandmarkProvider:
    """POSTs image bytes to a detector service, expects the sidecar JSON back."""

    endpoint: str
    timeout: float = 10.0
    retries: int = 1
    client: httpx.Client | None = None

    def detect(self, image: Image, source: Path | None = None) -> LandmarkSet:
        from .imaging import encode_image

        blob = encode_image(image, format="png")
        client = self.client or httpx.Client()
        last_exc: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                resp = client.post(
                    self.endpoint, content=blob,
                    headers={"Content-Type": "image/png"}, timeout=self.timeout,
                )
            except httpx.HTTPError as exc:
                last_exc = exc
                continue
            if resp.status_code != 200:
                raise ProviderUnavailable(f"detector returned status {resp.status_code}")
            try:
                doc = resp.json()
            except ValueError as exc:
                raise MalformedLandmarks(f"detector returned non-JSON body: {exc}") from exc
            return parse_landmark_document(doc)
        raise ProviderUnavailable(f"detector unreachable: {last_exc}")


def detect_landmarks(image: Image, provider: LandmarkProvider, source: Path | None = None) -> LandmarkSet:
    return provider.detect(image, source=source)


def _eye_center(lms: LandmarkSet, indices: list[int]) -> np.ndarray:
    return lms.pixel_points(indices).mean(axis=0)


def interocular_distance(lms: LandmarkSet, index_map: FaceIndexMap = DEFAULT_INDEX_MAP) -> float:
    """Distance between eye centers in source-pixel units."""
    left = _eye_center(lms, index_map.left_eye)
    right = _eye_center(lms, index_map.right_eye)
    dist = float(np.linalg.norm(left - right))
    if dist < 1.0:
        raise DegenerateFace(f"interocular distance {dist:.3g} px is below 1 px")
    return dist


def fit_similarity(src: np.ndarray, dst: np.ndarray) -> tuple[float, float, np.ndarray, float]:
    """Least-squares 2-D similarity src -> dst.

    Returns (scale, theta_radians, translation, rms_residual). The transform
    maps p to scale * R(theta) @ p + translation.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    src_c = src.mean(axis=0)
    dst_c = dst.mean(axis=0)
    p = src - src_c
    q = dst - dst_c
    denom = float(np.sum(p * p))
    if denom < 1e-12:
        raise DegenerateFace("source landmarks are coincident; similarity fit undefined")
    a = float(np.sum(p[:, 0] * q[:, 0] + p[:, 1] * q[:, 1]))
    b = float(np.sum(p[:, 0] * q[:, 1] - p[:, 1] * q[:, 0]))
    scale = math.hypot(a, b) / denom
    theta = math.atan2(b, a)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    rot = np.array([[cos_t, -sin_t], [sin_t, cos_t]])
    fitted = scale * (p @ rot.T) + dst_c
    misfit = fitted - dst
    rms = float(np.sqrt(np.mean(np.sum(misfit * misfit, axis=1))))
    translation = dst_c - scale * (rot @ src_c)
    return scale, theta, translation, rms


def similarity_transform_points(points: np.ndarray, scale: float, theta: float, translation: np.ndarray) -> np.ndarray:
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    rot = np.array([[cos_t, -sin_t], [sin_t, cos_t]])
    return scale * (np.asarray(points, dtype=np.float64) @ rot.T) + translation


def estimate_pose_delta(
    src: LandmarkSet, dst: LandmarkSet, index_map: FaceIndexMap = DEFAULT_INDEX_MAP
) -> PoseDelta:
    """Pose change src -> dst: similarity-fit roll plus normalized residual.

    The residual is the RMS point misfit after the best similarity alignment,
    divided by the destination interocular distance; it is (near) zero exactly
    when the change stays within the affine-validity regime.
    """
    indices = index_map.inner_face
    p = src.pixel_points(indices)
    q = dst.pixel_points(indices)
    _, theta, _, rms = fit_similarity(p, q)
    scale_norm = interocular_distance(dst, index_map)
    roll = math.degrees(theta)
    if roll <= -180.0:
        roll += 360.0
    return PoseDelta(roll=roll, residual=rms / scale_norm)
