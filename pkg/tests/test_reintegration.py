import json

import httpx
import numpy as np
import pytest

from privedit.errors import ProviderUnavailable
from privedit.fixtures import synthetic_landmarks, synthetic_portrait, write_sidecar
from privedit.imaging import Image, decode_image, encode_image, psnr, save_image
from privedit.landmarks import PoseDelta, SidecarLandmarkProvider
from privedit.masking import MaskConfig, mask_image
from privedit.reintegration import (
    ReintegrationConfig,
    check_geometric_validity,
    swap_face_back,
)


@pytest.fixture()
def round_trip_setup(tmp_path):
    """Original, its landmarks, and a mock-identity 'edited' image with sidecars."""
    img, lms = synthetic_portrait(256, 256, seed=7)
    original = decode_image(encode_image(img, "png"))
    composite, _ = mask_image(original, lms, MaskConfig())
    edited = decode_image(encode_image(composite, "png"))
    edited_path = tmp_path / "edited.png"
    save_image(edited, edited_path)
    write_sidecar(lms, tmp_path / "edited.landmarks.json")
    return original, lms, edited, edited_path


def test_gate_passes_zero_delta():
    assert check_geometric_validity(PoseDelta(0.0, 0.0), ReintegrationConfig()).passed


def test_gate_inclusive_at_tau():
    cfg = ReintegrationConfig()
    assert check_geometric_validity(PoseDelta(15.0, 0.0), cfg).passed
    failed = check_geometric_validity(PoseDelta(15.1, 0.0), cfg)
    assert not failed.passed
    assert "roll" in failed.reason


def test_gate_out_of_plane_reason():
    check = check_geometric_validity(PoseDelta(0.0, 0.2), ReintegrationConfig())
    assert not check.passed
    assert "out-of-plane geometry change" in check.reason


def test_gate_residual_inclusive():
    cfg = ReintegrationConfig()
    assert check_geometric_validity(PoseDelta(0.0, 0.08), cfg).passed
    assert not check_geometric_validity(PoseDelta(0.0, 0.081), cfg).passed


def test_swap_round_trip_restores_identity(round_trip_setup):
    original, lms, edited, edited_path = round_trip_setup
    result = swap_face_back(
        original, lms, edited, SidecarLandmarkProvider(), edited_source=edited_path
    )
    assert result.validity.passed
    region = result.region.alpha > 0
    assert psnr(result.image, original, region) >= 40.0
    outside = ~region
    assert np.array_equal(result.image.data[outside], edited.data[outside])


def test_swap_gate_rejects_rotation(tmp_path):
    img, lms = synthetic_portrait(256, 256, seed=8)
    rotated = synthetic_landmarks(256, 256, roll_deg=30.0)
    edited_path = tmp_path / "edited.png"
    save_image(img, edited_path)
    write_sidecar(rotated, tmp_path / "edited.landmarks.json")
    result = swap_face_back(img, lms, img, SidecarLandmarkProvider(), edited_source=edited_path)
    assert not result.validity.passed
    assert "roll" in result.validity.reason
    assert result.reprompt_suggestion
    assert np.array_equal(result.image.data, img.data)


def test_swap_no_face_on_edited(tmp_path):
    img, lms = synthetic_portrait(128, 128, seed=9)
    edited_path = tmp_path / "edited.png"
    save_image(img, edited_path)
    (tmp_path / "edited.landmarks.json").write_text(
        json.dumps({"width": 128, "height": 128, "points": []})
    )
    result = swap_face_back(img, lms, img, SidecarLandmarkProvider(), edited_source=edited_path)
    assert not result.validity.passed
    assert "no face" in result.validity.reason


def test_swap_provider_unavailable_propagates(tmp_path):
    img, lms = synthetic_portrait(128, 128, seed=9)
    with pytest.raises(ProviderUnavailable):
        swap_face_back(img, lms, img, SidecarLandmarkProvider(), edited_source=tmp_path / "x.png")


def test_swap_offline_no_network(round_trip_setup, monkeypatch):
    """With the sidecar provider the operation makes zero network calls."""
    original, lms, edited, edited_path = round_trip_setup

    def explode(*args, **kwargs):
        raise AssertionError("network I/O attempted during offline reintegration")

    monkeypatch.setattr(httpx.Client, "send", explode)
    monkeypatch.setattr("socket.socket.connect", explode, raising=True)
    result = swap_face_back(
        original, lms, edited, SidecarLandmarkProvider(), edited_source=edited_path
    )
    assert result.validity.passed


def test_swap_idempotent_within_tolerance(round_trip_setup, tmp_path):
    original, lms, edited, edited_path = round_trip_setup
    provider = SidecarLandmarkProvider()
    first = swap_face_back(original, lms, edited, provider, edited_source=edited_path)
    second_path = tmp_path / "second.png"
    save_image(first.image, second_path)
    write_sidecar(lms, tmp_path / "second.landmarks.json")
    second_input = decode_image(encode_image(first.image, "png"))
    second = swap_face_back(original, lms, second_input, provider, edited_source=second_path)
    assert np.abs(second.image.data - first.image.data).max() < 2.0 / 255.0


def test_swap_alpha_only_blend(round_trip_setup):
    original, lms, edited, edited_path = round_trip_setup
    cfg = ReintegrationConfig(blend="alpha-only")
    result = swap_face_back(
        original, lms, edited, SidecarLandmarkProvider(), cfg, edited_source=edited_path
    )
    assert result.validity.passed
    assert result.solver_stats is None
    # The solid mask core is copied verbatim; only the feather band blends
    # against the edited pixels (the fidelity cost of skipping the solve).
    from privedit.masking import build_face_mask

    core = build_face_mask(edited, lms, MaskConfig()).alpha >= 0.999
    assert psnr(result.image, original, core) >= 45.0
    region = result.region.alpha > 0
    assert psnr(result.image, original, region) >= 20.0


def test_swap_solver_fallback_on_nonconvergence(round_trip_setup):
    original, lms, edited, edited_path = round_trip_setup
    # Forbid iterations while demanding an unreachable hard tolerance: the
    # plane-fitted start cannot satisfy atol=0-style targets on its own.
    cfg = ReintegrationConfig(solver_tol=1e-300, solver_max_iter=0)
    result = swap_face_back(
        original, lms, edited, SidecarLandmarkProvider(), cfg, edited_source=edited_path
    )
    assert result.validity.passed
    assert result.solver_stats is not None and not result.solver_stats.converged
    assert any("fallback" in w for w in result.warnings)
