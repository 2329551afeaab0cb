"""Local identity reintegration: gate, warp, Poisson-blend.

Runs entirely on-device. The edited image is landmarked, the pose change
against the original is gated (in-plane roll and an out-of-plane residual
proxy), the original face is warped onto the edited geometry and
Poisson-blended into the edited context. On a gate failure the edited
image is returned untouched together with a re-prompt suggestion.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import NoFaceFound
from .facemesh import DEFAULT_INDEX_MAP, FaceIndexMap
from .imaging import Image, SoftMask
from .landmarks import LandmarkProvider, LandmarkSet, PoseDelta, estimate_pose_delta
from .masking import MaskConfig, build_face_mask
from .poisson import CgStats, seamless_clone
from .warp import warp_region

REPROMPT_SUGGESTION = (
    "Please regenerate the image with the subject in a front-facing pose, "
    "keeping the requested style."
)


@dataclass
class ReintegrationConfig:
    """Geometric gate bounds, blend mode, and solver passthrough."""

    tau_roll: float = 15.0
    max_residual: float = 0.08
    blend: str = "poisson"          # "poisson" | "alpha-only"
    solver_tol: float = 1e-6
    solver_max_iter: int | None = None
    mask: MaskConfig = field(default_factory=MaskConfig)

    def __post_init__(self):
        if self.tau_roll <= 0:
            raise ValueError("tau_roll must be > 0")
        if self.max_residual <= 0:
            raise ValueError("max_residual must be > 0")
        if self.blend not in ("poisson", "alpha-only"):
            raise ValueError(f"unknown blend mode: {self.blend}")


@dataclass
class ValidityCheck:
    passed: bool
    reason: str | None = None


@dataclass
class ReintegrationResult:
    image: Image
    validity: ValidityCheck
    pose_delta: PoseDelta | None = None
    solver_stats: CgStats | None = None
    region: SoftMask | None = None
    reprompt_suggestion: str | None = None
    warnings: list[str] = field(default_factory=list)


def check_geometric_validity(delta: PoseDelta, cfg: ReintegrationConfig) -> ValidityCheck:
    """Pass iff |roll| <= tau_roll and residual <= max_residual (inclusive)."""
    if abs(delta.roll) > cfg.tau_roll:
        return ValidityCheck(
            passed=False,
            reason=f"roll {delta.roll:.1f} deg exceeds tolerance {cfg.tau_roll:.1f} deg",
        )
    if delta.residual > cfg.max_residual:
        return ValidityCheck(
            passed=False,
            reason=(
                f"out-of-plane geometry change: residual {delta.residual:.3f} "
                f"exceeds {cfg.max_residual:.3f}"
            ),
        )
    return ValidityCheck(passed=True)


def _alpha_composite(src: Image, dst: Image, alpha: np.ndarray) -> Image:
    a = alpha[:, :, None]
    return Image(np.clip(a * src.data + (1.0 - a) * dst.data, 0.0, 1.0))


def swap_face_back(
    original: Image,
    original_lms: LandmarkSet,
    edited: Image,
    provider: LandmarkProvider,
    cfg: ReintegrationConfig | None = None,
    edited_source: Path | None = None,
    index_map: FaceIndexMap = DEFAULT_INDEX_MAP,
) -> ReintegrationResult:
    """Reinject the original face into the edited image.

    Steps: landmark the edited image, estimate the pose delta, gate it, build
    the face region on the edited geometry (mask machinery at ratio 1.0),
    warp the original across the region, Poisson-blend. Only the configured
    landmark provider is ever contacted; with the sidecar provider the whole
    operation is offline.
    """
    cfg = cfg or ReintegrationConfig()

    try:
        edited_lms = provider.detect(edited, source=edited_source)
    except NoFaceFound as exc:
        return ReintegrationResult(
            image=edited,
            validity=ValidityCheck(passed=False, reason=f"no face found in edited image: {exc}"),
            reprompt_suggestion=REPROMPT_SUGGESTION,
        )

    delta = estimate_pose_delta(original_lms, edited_lms, index_map)
    validity = check_geometric_validity(delta, cfg)
    if not validity.passed:
        return ReintegrationResult(
            image=edited,
            validity=validity,
            pose_delta=delta,
            reprompt_suggestion=REPROMPT_SUGGESTION,
        )

    # Face region on the edited geometry; ratio pinned to 1.0 so the whole
    # identity area is restored regardless of the masking ratio used upstream.
    swap_cfg = replace(cfg.mask, mask_ratio=1.0)
    feathered = build_face_mask(edited, edited_lms, swap_cfg, index_map)
    region_arr = feathered.support()
    region = SoftMask(region_arr.astype(np.float64))

    # Warp one pixel beyond the region so boundary-crossing guidance edges
    # read true source content.
    warp_target = SoftMask(ndimage.binary_dilation(region_arr).astype(np.float64))
    warped, validity_mask = warp_region(
        original, original_lms, edited_lms, warp_target, index_map
    )

    warnings: list[str] = []
    covered = validity_mask.alpha > 0
    uncovered = region_arr & ~covered
    if uncovered.any():
        warnings.append(
            f"{int(uncovered.sum())} region pixels had no valid warp sample and were left edited"
        )
        region_arr = region_arr & covered
        region = SoftMask(region_arr.astype(np.float64))
    if not region_arr.any():
        return ReintegrationResult(
            image=edited,
            validity=ValidityCheck(passed=False, reason="face region fell outside the warped area"),
            pose_delta=delta,
            reprompt_suggestion=REPROMPT_SUGGESTION,
            warnings=warnings,
        )

    src_full = Image(np.where(covered[:, :, None], warped.data, edited.data))

    if cfg.blend == "alpha-only":
        alpha = np.where(covered, feathered.alpha, 0.0)
        return ReintegrationResult(
            image=_alpha_composite(src_full, edited, alpha),
            validity=validity,
            pose_delta=delta,
            region=region,
            warnings=warnings,
        )

    cloned, stats = seamless_clone(
        src_full, edited, region, tol=cfg.solver_tol, max_iter=cfg.solver_max_iter
    )
    if not stats.converged:
        warnings.append(
            "Poisson solver did not converge "
            f"(residuals {stats.residuals}); alpha-only fallback applied"
        )
        alpha = np.where(covered, feathered.alpha, 0.0)
        return ReintegrationResult(
            image=_alpha_composite(src_full, edited, alpha),
            validity=validity,
            pose_delta=delta,
            solver_stats=stats,
            region=region,
            warnings=warnings,
        )

    return ReintegrationResult(
        image=cloned,
        validity=validity,
        pose_delta=delta,
        solver_stats=stats,
        region=region,
        warnings=warnings,
    )
