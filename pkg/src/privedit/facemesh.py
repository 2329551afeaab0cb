"""Facial landmark index conventions.

The pipeline pins the 468-point FaceMesh ordering. Which indices form the
identity-sensitive inner face (eyes, brows, nose, mouth, cheeks) is data,
not code: the default ships as ``data/face_indices.json`` and alternate
conventions can be loaded from a user file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

LANDMARK_COUNT = 468

_FEATURE_KEYS = ("left_eye", "right_eye", "left_brow", "right_brow", "nose", "mouth", "cheeks")


@dataclass
class FaceIndexMap:
    """Named landmark index groups plus the derived inner-face subset."""

    landmark_count: int
    left_eye: list[int]
    right_eye: list[int]
    left_brow: list[int] = field(default_factory=list)
    right_brow: list[int] = field(default_factory=list)
    nose: list[int] = field(default_factory=list)
    mouth: list[int] = field(default_factory=list)
    cheeks: list[int] = field(default_factory=list)

    @property
    def inner_face(self) -> list[int]:
        seen: set[int] = set()
        for key in _FEATURE_KEYS:
            seen.update(getattr(self, key))
        return sorted(seen)

    def validate(self) -> None:
        for key in _FEATURE_KEYS:
            for i in getattr(self, key):
                if not (0 <= i < self.landmark_count):
                    raise ValueError(f"index {i} in '{key}' outside [0, {self.landmark_count})")


def load_index_map(path: str | Path | None = None) -> FaceIndexMap:
    """Load an index map from a JSON file, or the packaged default."""
    if path is None:
        raw = resources.files("privedit.data").joinpath("face_indices.json").read_text()
    else:
        raw = Path(path).read_text()
    doc = json.loads(raw)
    m = FaceIndexMap(
        landmark_count=int(doc.get("landmark_count", LANDMARK_COUNT)),
        **{key: [int(i) for i in doc.get(key, [])] for key in _FEATURE_KEYS},
    )
    m.validate()
    return m


DEFAULT_INDEX_MAP = load_index_map()
