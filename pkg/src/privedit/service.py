"""Local HTTP service backing the companion UI.

Sessions hold the uploaded original entirely on this machine; the only
bytes that ever leave through the backend adapter are the approved masked
composite. State machine: uploaded -> masked (approve) -> edited ->
reintegrated, with re-tuning (edited -> masked) allowed on a new approve.
Binds loopback by default; see the serve command.
"""

from __future__ import annotations

import base64
import json
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, File, HTTPException, Response, UploadFile
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .backend import EditRequest, edit as backend_edit
from .errors import MalformedLandmarks, NoFaceFound, PriveditError, ProviderUnavailable
from .imaging import Image, decode_image, encode_image
from .landmarks import LandmarkSet, parse_landmark_document
from .masking import MaskConfig, build_face_mask, apply_mask, masked_pixel_count
from .pipeline import PipelineConfig, RESULT_SCHEMA
from .reintegration import swap_face_back


@dataclass
class Session:
    session_id: str
    original: Image
    landmarks: LandmarkSet | None
    state: str = "uploaded"
    ratio: float | None = None
    masked: Image | None = None
    wire_bytes: bytes | None = None
    prompt: str | None = None
    edited: Image | None = None
    final: Image | None = None
    validity: dict = field(default_factory=dict)
    pose_delta: dict | None = None
    warnings: list[str] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)


class ApproveBody(BaseModel):
    ratio: float


class EditBody(BaseModel):
    prompt: str


def create_app(cfg: PipelineConfig, ui_dir: Path | None = None) -> FastAPI:
    app = FastAPI(title="privedit service")
    sessions: dict[str, Session] = {}
    backend = cfg.build_backend()
    provider = cfg.build_provider()

    def get_session(session_id: str) -> Session:
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return session

    def transition(session: Session):
        if not session.lock.acquire(blocking=False):
            raise HTTPException(status_code=409, detail="another transition is in flight")
        return session.lock

    def mask_config(ratio: float) -> MaskConfig:
        base = cfg.mask
        return MaskConfig(
            mask_ratio=ratio, hull_expansion=base.hull_expansion,
            feather_sigma=base.feather_sigma, fill=base.fill, edge_overlay=base.edge_overlay,
        )

    def check_ratio(ratio: float) -> float:
        if not (0.0 < ratio <= 2.0):
            raise HTTPException(status_code=422, detail="ratio must lie in (0, 2]")
        return ratio

    @app.get("/")
    def root():
        return {"service": "privedit", "sessions": len(sessions)}

    @app.post("/session")
    async def create_session(image: UploadFile = File(...), landmarks: UploadFile | None = File(None)):
        blob = await image.read()
        try:
            img = decode_image(blob)
        except Exception:
            raise HTTPException(status_code=422, detail="image bytes are not decodable")
        lms: LandmarkSet | None = None
        status = "missing"
        if landmarks is not None:
            try:
                lms = parse_landmark_document(json.loads((await landmarks.read()).decode()))
                status = "provided"
            except (ValueError, MalformedLandmarks, NoFaceFound) as exc:
                raise HTTPException(status_code=422, detail=f"bad landmarks: {exc}")
        else:
            try:
                lms = provider.detect(img, source=None)
                status = "detected"
            except PriveditError:
                status = "missing"
        if lms is not None and (lms.source_width, lms.source_height) != (img.width, img.height):
            raise HTTPException(status_code=422, detail="landmarks are for a different image size")
        session = Session(session_id=uuid.uuid4().hex, original=img, landmarks=lms)
        sessions[session.session_id] = session
        return {"session_id": session.session_id, "landmark_status": status, "state": session.state}

    @app.get("/session/{session_id}/preview")
    def preview(session_id: str, ratio: float):
        session = get_session(session_id)
        check_ratio(ratio)
        if session.state not in ("uploaded", "masked", "edited"):
            raise HTTPException(status_code=409, detail=f"cannot preview in state '{session.state}'")
        if session.landmarks is None:
            raise HTTPException(status_code=409, detail="session has no landmarks")
        mask = build_face_mask(session.original, session.landmarks, mask_config(ratio))
        composite = apply_mask(session.original, mask, cfg.mask.fill)
        return Response(
            content=encode_image(composite, format="png"),
            media_type="image/png",
            headers={"X-Masked-Pixels": str(masked_pixel_count(mask))},
        )

    @app.post("/session/{session_id}/approve")
    def approve(session_id: str, body: ApproveBody):
        session = get_session(session_id)
        check_ratio(body.ratio)
        if session.state not in ("uploaded", "masked", "edited"):
            raise HTTPException(status_code=409, detail=f"cannot approve in state '{session.state}'")
        if session.landmarks is None:
            raise HTTPException(status_code=409, detail="session has no landmarks")
        lock = transition(session)
        try:
            mask = build_face_mask(session.original, session.landmarks, mask_config(body.ratio))
            session.masked = apply_mask(session.original, mask, cfg.mask.fill)
            session.wire_bytes = encode_image(session.masked, format=cfg.wire_format,
                                              jpeg_quality=cfg.jpeg_quality)
            session.ratio = body.ratio
            session.state = "masked"
            session.edited = None
            session.final = None
        finally:
            lock.release()
        return {"state": session.state, "ratio": session.ratio}

    @app.post("/session/{session_id}/edit")
    def edit(session_id: str, body: EditBody):
        session = get_session(session_id)
        if session.state != "masked":
            raise HTTPException(
                status_code=409,
                detail=f"edit requires an approved mask (state is '{session.state}'; approve first)",
            )
        lock = transition(session)
        try:
            result = backend_edit(
                EditRequest(image=session.wire_bytes, prompt=body.prompt,
                            request_id=f"{session.session_id}-edit"),
                backend,
            )
            session.prompt = body.prompt
            session.edited = result.image
            session.state = "edited"
        except PriveditError as exc:
            raise HTTPException(status_code=502, detail=f"backend failed: {exc}")
        finally:
            lock.release()
        return Response(content=encode_image(session.edited, format="png"), media_type="image/png")

    @app.post("/session/{session_id}/reintegrate")
    def reintegrate(session_id: str):
        session = get_session(session_id)
        if session.state != "edited":
            raise HTTPException(
                status_code=409,
                detail=f"reintegrate requires an edited image (state is '{session.state}')",
            )
        lock = transition(session)
        try:
            # The configured provider cannot landmark an in-memory edited
            # image without a sidecar; geometry-preserving backends make the
            # session landmarks a faithful fallback, recorded in warnings.
            class _Chain:
                def detect(_self, image, source=None):
                    try:
                        return provider.detect(image, source=source)
                    except ProviderUnavailable:
                        session.warnings.append(
                            "edited-image landmarks unavailable from provider; "
                            "session landmarks reused"
                        )
                        return session.landmarks

            result = swap_face_back(
                session.original, session.landmarks, session.edited, _Chain(),
                cfg.reintegration,
            )
            session.final = result.image
            session.validity = {"passed": result.validity.passed, "reason": result.validity.reason}
            if result.pose_delta:
                session.pose_delta = {
                    "roll": result.pose_delta.roll, "residual": result.pose_delta.residual
                }
            session.warnings.extend(result.warnings)
            if result.validity.passed:
                session.state = "reintegrated"
            payload = {
                "state": session.state,
                "validity": session.validity,
                "pose_delta": session.pose_delta,
                "image": base64.b64encode(encode_image(result.image, format="png")).decode(),
            }
            if result.reprompt_suggestion and not result.validity.passed:
                payload["reprompt_suggestion"] = result.reprompt_suggestion
            return payload
        finally:
            lock.release()

    @app.get("/session/{session_id}/report")
    def report(session_id: str):
        session = get_session(session_id)
        if session.state != "reintegrated":
            raise HTTPException(
                status_code=409, detail=f"no report before reintegration (state is '{session.state}')"
            )
        return {
            "schema": RESULT_SCHEMA,
            "img_id": session.session_id,
            "prompt": session.prompt,
            "paths": {},
            "scores": None,
            "pose_delta": session.pose_delta,
            "validity": session.validity,
            "probe": "skipped",
            "warnings": session.warnings,
            "mask_ratio": session.ratio,
        }

    @app.delete("/session/{session_id}")
    def delete(session_id: str):
        get_session(session_id)
        del sessions[session_id]
        return {"deleted": session_id}

    ui = ui_dir if ui_dir is not None else Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if ui.is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui), html=True), name="ui")

    return app
