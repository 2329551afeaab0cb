"""End-to-end pipeline: mask, probe, edit, reintegrate, score, persist.

The workspace follows a fixed layout (input_og_imgs/, masked_imgs/,
gpt_generated/, ours_edited/). All artifacts are staged under a hidden
directory and moved into place only when the whole run succeeded, so a
failed run leaves nothing behind. With mock backends and the stub embedder
a run is byte-deterministic.
"""

from __future__ import annotations

import json
import os
import shutil
import time
import uuid
from dataclasses import dataclass, field, asdict
from pathlib import Path

from .backend import EditBackend, EditRequest, build_backend, edit as backend_edit, reconstruction_probe
from .errors import BackendError, PipelineStageError, PriveditError, Timeout
from .evaluation import EmbeddingProvider, RemoteEmbeddingProvider, StubEmbeddingProvider, clip_score
from .imaging import Image, encode_image, load_image, save_image
from .landmarks import (
    LandmarkProvider,
    RemoteLandmarkProvider,
    SidecarLandmarkProvider,
)
from .masking import MaskConfig, mask_image
from .reintegration import ReintegrationConfig, swap_face_back

RESULT_SCHEMA = "privedit-result/1"

ENV_PREFIX = "PRIVEDIT_"


@dataclass
class PipelineConfig:
    """Everything a run needs; built from flat dotted config keys plus env."""

    workspace: Path = Path(".")
    mask: MaskConfig = field(default_factory=MaskConfig)
    reintegration: ReintegrationConfig = field(default_factory=ReintegrationConfig)
    backend_kind: str = "mock-identity"
    backend_options: dict = field(default_factory=dict)
    provider_kind: str = "sidecar"
    provider_options: dict = field(default_factory=dict)
    embedder_kind: str = "stub"
    embedder_options: dict = field(default_factory=dict)
    probe_enabled: bool = True
    report_format: str = "json"
    wire_format: str = "png"
    jpeg_quality: int = 95

    def __post_init__(self):
        self.workspace = Path(self.workspace)
        if not (0.0 < self.mask.mask_ratio <= 2.0):
            raise ValueError("mask ratio must lie in (0, 2]")

    @property
    def landmarks_dir(self) -> Path:
        configured = self.provider_options.get("directory")
        return Path(configured) if configured else self.workspace / "landmarks"

    def build_backend(self) -> EditBackend:
        return build_backend(self.backend_kind, **self.backend_options)

    def build_provider(self) -> LandmarkProvider:
        if self.provider_kind == "sidecar":
            directory = self.landmarks_dir
            return SidecarLandmarkProvider(directory=directory if directory.exists() else None)
        if self.provider_kind == "remote":
            return RemoteLandmarkProvider(
                endpoint=self.provider_options["endpoint"],
                timeout=float(self.provider_options.get("timeout", 10.0)),
                retries=int(self.provider_options.get("retries", 1)),
            )
        raise ValueError(f"unknown provider kind: {self.provider_kind}")

    def build_embedder(self) -> EmbeddingProvider | None:
        if self.embedder_kind in (None, "", "none"):
            return None
        if self.embedder_kind == "stub":
            return StubEmbeddingProvider(
                dim=int(self.embedder_options.get("dim", 64)),
                seed=int(self.embedder_options.get("seed", 0)),
            )
        if self.embedder_kind == "remote":
            return RemoteEmbeddingProvider(
                endpoint=self.embedder_options["endpoint"],
                dim=int(self.embedder_options.get("dim", 512)),
            )
        raise ValueError(f"unknown embedder kind: {self.embedder_kind}")


_OPTION_GROUPS = ("backend", "provider", "embedder")


def config_from_mapping(entries: dict, base: PipelineConfig | None = None) -> PipelineConfig:
    """Apply flat dotted keys ('mask.ratio', 'backend.kind', ...) over a base config."""
    cfg = base or PipelineConfig()
    mask_kwargs = {
        "mask_ratio": cfg.mask.mask_ratio,
        "hull_expansion": cfg.mask.hull_expansion,
        "feather_sigma": cfg.mask.feather_sigma,
        "fill": cfg.mask.fill,
        "edge_overlay": cfg.mask.edge_overlay,
    }
    reint_kwargs = {
        "tau_roll": cfg.reintegration.tau_roll,
        "max_residual": cfg.reintegration.max_residual,
        "blend": cfg.reintegration.blend,
        "solver_tol": cfg.reintegration.solver_tol,
        "solver_max_iter": cfg.reintegration.solver_max_iter,
    }
    simple = {
        "workspace": cfg.workspace,
        "backend_kind": cfg.backend_kind,
        "provider_kind": cfg.provider_kind,
        "embedder_kind": cfg.embedder_kind,
        "probe_enabled": cfg.probe_enabled,
        "report_format": cfg.report_format,
        "wire_format": cfg.wire_format,
        "jpeg_quality": cfg.jpeg_quality,
    }
    options = {g: dict(getattr(cfg, f"{g}_options")) for g in _OPTION_GROUPS}

    for key, value in entries.items():
        parts = key.split(".")
        if key == "workspace":
            simple["workspace"] = Path(value)
        elif parts[0] == "mask" and len(parts) == 2:
            name = {"ratio": "mask_ratio"}.get(parts[1], parts[1])
            if name not in mask_kwargs:
                raise KeyError(f"unknown config key: {key}")
            if name == "fill":
                if isinstance(value, str):
                    value = value.split(",")
                value = tuple(float(v) for v in value)
            elif name == "edge_overlay":
                value = _as_bool(value)
            else:
                value = float(value)
            mask_kwargs[name] = value
        elif parts[0] == "reintegration" and len(parts) == 2:
            name = parts[1]
            if name not in reint_kwargs:
                raise KeyError(f"unknown config key: {key}")
            if name == "blend":
                reint_kwargs[name] = str(value)
            elif name == "solver_max_iter":
                reint_kwargs[name] = None if value in (None, "", "none") else int(value)
            else:
                reint_kwargs[name] = float(value)
        elif parts[0] in _OPTION_GROUPS and len(parts) == 2:
            if parts[1] == "kind":
                simple[f"{parts[0]}_kind"] = str(value)
            else:
                options[parts[0]][parts[1]] = value
        elif key == "probe.enabled":
            simple["probe_enabled"] = _as_bool(value)
        elif key == "report.format":
            simple["report_format"] = str(value)
        elif key == "wire.format":
            simple["wire_format"] = str(value)
        elif key == "output.jpeg_quality":
            simple["jpeg_quality"] = int(value)
        else:
            raise KeyError(f"unknown config key: {key}")

    reint_kwargs["mask"] = MaskConfig(**{**mask_kwargs, "mask_ratio": 1.0})
    return PipelineConfig(
        mask=MaskConfig(**mask_kwargs),
        reintegration=ReintegrationConfig(**reint_kwargs),
        backend_options=options["backend"],
        provider_options=options["provider"],
        embedder_options=options["embedder"],
        **simple,
    )


def _as_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    return str(value).lower() in ("1", "true", "yes", "on")


def load_config(path: str | Path | None = None, env: dict | None = None) -> PipelineConfig:
    """Read the flat JSON config file, then apply PRIVEDIT_* env overrides.

    Environment variables map dots to underscores: PRIVEDIT_BACKEND_KIND
    overrides "backend.kind". Credentials are never read from the file; the
    backend only receives the *name* of its credential variable.
    """
    entries: dict = {}
    if path is not None:
        entries.update(json.loads(Path(path).read_text()))
    env = os.environ if env is None else env
    for key, value in env.items():
        if not key.startswith(ENV_PREFIX):
            continue
        flat = key[len(ENV_PREFIX):].lower()
        # Group names carry no underscores, so the first one is the dot:
        # PRIVEDIT_BACKEND_KIND -> backend.kind, PRIVEDIT_MASK_RATIO -> mask.ratio.
        if "_" in flat and flat != "workspace":
            flat = flat.replace("_", ".", 1)
        entries[flat] = value
    return config_from_mapping(entries)


@dataclass
class PipelineResult:
    img_id: str
    prompt: str
    paths: dict[str, str] = field(default_factory=dict)
    scores: dict[str, float] | None = None
    pose_delta: dict[str, float] | None = None
    validity: dict = field(default_factory=dict)
    probe: str = "skipped"
    warnings: list[str] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)

    def to_json(self, include_timings: bool = False) -> str:
        doc = {"schema": RESULT_SCHEMA, **asdict(self)}
        if not include_timings:
            # Wall-clock noise would break byte-reproducibility of runs.
            doc.pop("timings", None)
        return json.dumps(doc, indent=2, sort_keys=True)


def _stage(timings: dict[str, float], name: str):
    class _Timer:
        def __enter__(self):
            self.start = time.perf_counter()
            return self

        def __exit__(self, exc_type, exc, tb):
            timings[name] = (time.perf_counter() - self.start) * 1000.0
            if exc is not None and not isinstance(exc, PipelineStageError):
                raise PipelineStageError(name, exc) from exc
            return False

    return _Timer()


def run_pipeline(img_id: str, edit_task: str, cfg: PipelineConfig) -> PipelineResult:
    """Execute the full flow for one image id and persist the layout.

    Writes masked_imgs/<id>_mask.jpg, gpt_generated/<id>_recon.jpg (probe),
    gpt_generated/<id>_private.jpg, ours_edited/<id>_final.jpg and
    ours_edited/<id>_result.json, atomically.
    """
    workspace = cfg.workspace
    backend = cfg.build_backend()
    provider = cfg.build_provider()
    embedder = cfg.build_embedder()
    result = PipelineResult(img_id=img_id, prompt=edit_task)
    timings = result.timings

    staging = workspace / ".staging" / uuid.uuid4().hex
    targets: list[tuple[Path, Path]] = []

    def stage_file(subdir: str, name: str) -> Path:
        path = staging / subdir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        targets.append((path, workspace / subdir / name))
        return path

    try:
        with _stage(timings, "ingest"):
            input_path = workspace / "input_og_imgs" / f"{img_id}.jpg"
            if not input_path.exists():
                alt = workspace / "input_og_imgs" / f"{img_id}.png"
                if alt.exists():
                    input_path = alt
                else:
                    raise FileNotFoundError(f"input image not found: {input_path}")
            original = load_image(input_path)
            result.paths["input"] = str(input_path.relative_to(workspace))

        with _stage(timings, "landmarks"):
            original_lms = provider.detect(original, source=input_path)

        with _stage(timings, "mask"):
            composite, mask = mask_image(original, original_lms, cfg.mask)
            mask_path = stage_file("masked_imgs", f"{img_id}_mask.jpg")
            save_image(composite, mask_path, jpeg_quality=cfg.jpeg_quality)
            wire_bytes = encode_image(composite, format=cfg.wire_format, jpeg_quality=cfg.jpeg_quality)
            result.paths["mask"] = f"masked_imgs/{img_id}_mask.jpg"

        if cfg.probe_enabled:
            with _stage(timings, "probe"):
                try:
                    probe_res = reconstruction_probe(
                        EditRequest(image=wire_bytes, prompt=edit_task, request_id=f"{img_id}-recon"),
                        backend,
                    )
                    recon_path = stage_file("gpt_generated", f"{img_id}_recon.jpg")
                    save_image(probe_res.image, recon_path, jpeg_quality=cfg.jpeg_quality)
                    result.paths["gen_recon"] = f"gpt_generated/{img_id}_recon.jpg"
                    result.probe = "ok"
                except (Timeout, BackendError) as exc:
                    result.probe = f"failed: {exc}"
                    result.warnings.append(f"reconstruction probe failed: {exc}")
        else:
            result.probe = "skipped"

        with _stage(timings, "edit"):
            edit_res = backend_edit(
                EditRequest(image=wire_bytes, prompt=edit_task, request_id=f"{img_id}-edit"),
                backend,
            )
            edited = edit_res.image
            private_path = stage_file("gpt_generated", f"{img_id}_private.jpg")
            save_image(edited, private_path, jpeg_quality=cfg.jpeg_quality)
            result.paths["gen_private"] = f"gpt_generated/{img_id}_private.jpg"

        with _stage(timings, "reintegrate"):
            swap = swap_face_back(
                original, original_lms, edited, provider, cfg.reintegration,
                edited_source=private_path,
            )
            final = swap.image
            final_path = stage_file("ours_edited", f"{img_id}_final.jpg")
            save_image(final, final_path, jpeg_quality=cfg.jpeg_quality)
            result.paths["final"] = f"ours_edited/{img_id}_final.jpg"
            result.validity = {"passed": swap.validity.passed, "reason": swap.validity.reason}
            if swap.reprompt_suggestion:
                result.validity["reprompt_suggestion"] = swap.reprompt_suggestion
            if swap.pose_delta:
                result.pose_delta = {"roll": swap.pose_delta.roll, "residual": swap.pose_delta.residual}
            result.warnings.extend(swap.warnings)

        if embedder is not None:
            with _stage(timings, "score"):
                result.scores = {
                    "s_orig": clip_score(original, edit_task, embedder),
                    "s_gpt": clip_score(edited, edit_task, embedder),
                    "s_ours": clip_score(final, edit_task, embedder),
                }

        with _stage(timings, "persist"):
            result_path = stage_file("ours_edited", f"{img_id}_result.json")
            result_path.write_text(result.to_json())
            result.paths["result"] = f"ours_edited/{img_id}_result.json"
            for src, dst in targets:
                dst.parent.mkdir(parents=True, exist_ok=True)
                os.replace(src, dst)
    finally:
        shutil.rmtree(staging, ignore_errors=True)

    return result
