"""Command-line interface.

Exit codes: 0 success, 1 stage failure, 2 usage error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .backend import EditRequest, build_backend, edit as backend_edit
from .errors import PipelineStageError, PriveditError
from .evaluation import (
    ImagePair,
    MetricsReport,
    RemoteVlmOracle,
    ScriptedAttributeOracle,
    default_attribute_specs,
    emit_report,
    ingest_celeba_attributes,
    parse_report,
    run_attribute_benchmark,
)
from .imaging import load_image, save_image, save_mask_png
from .landmarks import SidecarLandmarkProvider
from .masking import MaskConfig, mask_image
from .pipeline import load_config, run_pipeline
from .reintegration import ReintegrationConfig, swap_face_back


def _ratio_in_range(ctx, param, value):
    if value is not None and not (0.0 < value <= 2.0):
        raise click.BadParameter("--ratio must lie in (0, 2]", ctx=ctx, param=param)
    return value


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Flat JSON config file; PRIVEDIT_* env vars override it.")
@click.pass_context
def main(ctx, config_path):
    """Privacy-preserving face editing pipeline."""
    ctx.ensure_object(dict)
    try:
        ctx.obj["config"] = load_config(config_path)
    except (KeyError, ValueError) as exc:
        raise click.UsageError(f"bad configuration: {exc}")


@main.command()
@click.argument("image", type=click.Path(exists=True, dir_okay=False))
@click.option("--ratio", type=float, default=None, callback=_ratio_in_range,
              help="Mask ratio in (0, 2].")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Masked image output path.")
@click.option("--mask-out", type=click.Path(dir_okay=False), default=None,
              help="Optional single-channel PNG of the mask alpha.")
@click.pass_context
def mask(ctx, image, ratio, out, mask_out):
    """Mask the identity region of IMAGE using its landmark sidecar."""
    cfg = ctx.obj["config"]
    mask_cfg = cfg.mask
    if ratio is not None:
        mask_cfg = MaskConfig(
            mask_ratio=ratio, hull_expansion=mask_cfg.hull_expansion,
            feather_sigma=mask_cfg.feather_sigma, fill=mask_cfg.fill,
            edge_overlay=mask_cfg.edge_overlay,
        )
    image_path = Path(image)
    try:
        img = load_image(image_path)
        lms = SidecarLandmarkProvider().detect(img, source=image_path)
        composite, face_mask = mask_image(img, lms, mask_cfg)
        out_path = Path(out) if out else image_path.with_name(f"{image_path.stem}_mask.jpg")
        save_image(composite, out_path, jpeg_quality=cfg.jpeg_quality)
        if mask_out:
            save_mask_png(face_mask, mask_out)
    except PriveditError as exc:
        click.echo(f"mask failed: {exc}", err=True)
        sys.exit(1)
    click.echo(str(out_path))


@main.command(name="edit")
@click.argument("masked", type=click.Path(exists=True, dir_okay=False))
@click.option("--prompt", required=True, help="Edit instruction sent to the backend.")
@click.option("--backend", "backend_kind", default=None, help="Backend kind override.")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def edit_cmd(ctx, masked, prompt, backend_kind, out):
    """Send the already-masked image MASKED to the editing backend."""
    cfg = ctx.obj["config"]
    try:
        backend = build_backend(backend_kind, **cfg.backend_options) if backend_kind else cfg.build_backend()
        blob = Path(masked).read_bytes()
        result = backend_edit(EditRequest(image=blob, prompt=prompt), backend)
        out_path = Path(out) if out else Path(masked).with_name(f"{Path(masked).stem}_edited.jpg")
        save_image(result.image, out_path, jpeg_quality=cfg.jpeg_quality)
    except PriveditError as exc:
        click.echo(f"edit failed: {exc}", err=True)
        sys.exit(1)
    click.echo(f"{out_path} ({result.backend_name}, {result.latency_ms:.0f} ms)")


@main.command()
@click.argument("original", type=click.Path(exists=True, dir_okay=False))
@click.argument("edited", type=click.Path(exists=True, dir_okay=False))
@click.option("--tau", type=float, default=None, help="Roll tolerance override in degrees.")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def reintegrate(ctx, original, edited, tau, out):
    """Warp and blend the ORIGINAL face back into the EDITED image."""
    cfg = ctx.obj["config"]
    r_cfg = cfg.reintegration
    if tau is not None:
        if tau <= 0:
            raise click.BadParameter("--tau must be > 0")
        r_cfg = ReintegrationConfig(
            tau_roll=tau, max_residual=r_cfg.max_residual, blend=r_cfg.blend,
            solver_tol=r_cfg.solver_tol, solver_max_iter=r_cfg.solver_max_iter, mask=r_cfg.mask,
        )
    provider = SidecarLandmarkProvider()
    try:
        orig_img = load_image(original)
        orig_lms = provider.detect(orig_img, source=Path(original))
        edited_img = load_image(edited)
        result = swap_face_back(
            orig_img, orig_lms, edited_img, provider, r_cfg, edited_source=Path(edited)
        )
    except PriveditError as exc:
        click.echo(f"reintegrate failed: {exc}", err=True)
        sys.exit(1)
    if not result.validity.passed:
        click.echo(f"geometric validity failed: {result.validity.reason}", err=True)
        if result.reprompt_suggestion:
            click.echo(f"suggestion: {result.reprompt_suggestion}", err=True)
        sys.exit(1)
    out_path = Path(out) if out else Path(edited).with_name(f"{Path(edited).stem}_final.jpg")
    save_image(result.image, out_path, jpeg_quality=cfg.jpeg_quality)
    click.echo(str(out_path))


@main.command()
@click.argument("img_ids", nargs=-1, required=True)
@click.option("--prompt", required=True)
@click.option("--probe/--no-probe", default=None, help="Run the reconstruction probe.")
@click.option("--strict", is_flag=True, help="Exit nonzero on geometric-validity failure.")
@click.option("--workers", type=int, default=1, help="Worker pool size for batch runs.")
@click.pass_context
def run(ctx, img_ids, prompt, probe, strict, workers):
    """Run the full pipeline for one or more IMG_IDS in the configured workspace."""
    from concurrent.futures import ThreadPoolExecutor

    cfg = ctx.obj["config"]
    if probe is not None:
        cfg.probe_enabled = probe
    if workers < 1:
        raise click.BadParameter("--workers must be >= 1")

    def one(img_id):
        try:
            return img_id, run_pipeline(img_id, prompt, cfg), None
        except PipelineStageError as exc:
            return img_id, None, exc

    if workers == 1 or len(img_ids) == 1:
        outcomes = list(map(one, img_ids))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one, img_ids))

    failed = False
    validity_failed = False
    for img_id, result, error in outcomes:
        if error is not None:
            click.echo(f"{img_id}: pipeline failed at stage '{error.stage}': {error.cause}", err=True)
            failed = True
            continue
        click.echo(result.to_json(include_timings=True))
        if not result.validity.get("passed", False):
            validity_failed = True
    if failed or (strict and validity_failed):
        sys.exit(1)


@main.group()
def eval():
    """Evaluation utilities."""


@eval.command()
@click.option("--images", "images_dir", type=click.Path(exists=True, file_okay=False), required=True,
              help="Directory with <id>.png|jpg and <id>_masked.png|jpg pairs.")
@click.option("--truth", type=click.Path(exists=True, dir_okay=False), required=True,
              help="CelebA-format attribute file.")
@click.option("--oracle", default="demo",
              help="'demo' (scripted stub) or 'remote:<endpoint>' for a live VLM.")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def attrs(images_dir, truth, oracle, out):
    """Run the masked-vs-unmasked attribute-inference benchmark."""
    truth_table = ingest_celeba_attributes(Path(truth).read_text())
    specs = default_attribute_specs()
    pairs = []
    for path in sorted(Path(images_dir).iterdir()):
        if path.suffix.lower() not in (".png", ".jpg", ".jpeg") or path.stem.endswith("_masked"):
            continue
        masked_path = None
        for ext in (".png", ".jpg", ".jpeg"):
            candidate = path.with_name(f"{path.stem}_masked{ext}")
            if candidate.exists():
                masked_path = candidate
                break
        if masked_path is None:
            continue
        pairs.append(ImagePair(image_id=path.name, unmasked=load_image(path), masked=load_image(masked_path)))
    if not pairs:
        raise click.UsageError(f"no <id>/<id>_masked image pairs found in {images_dir}")

    if oracle == "demo":
        def script(img, spec, image_id, condition):
            actual = truth_table.rows[image_id][spec.truth_column]
            if condition == "unmasked":
                if spec.kind == "category":
                    return spec.positive_categories[0] if actual else spec.categories[-1]
                return "yes" if actual else "no"
            if spec.kind == "category":
                return spec.categories[-1] if actual else spec.positive_categories[0]
            return "no" if actual else "yes"

        oracle_impl = ScriptedAttributeOracle(script=script, name="demo")
    elif oracle.startswith("remote:"):
        oracle_impl = RemoteVlmOracle(endpoint=oracle.split(":", 1)[1])
    else:
        raise click.UsageError(f"unknown oracle: {oracle}")

    try:
        rows = run_attribute_benchmark(pairs, specs, oracle_impl, truth_table)
    except PriveditError as exc:
        click.echo(f"benchmark failed: {exc}", err=True)
        sys.exit(1)
    report = MetricsReport(attribute_rows=rows, metadata={"oracle": getattr(oracle_impl, "name", oracle)})
    text = emit_report(report, format="json")
    if out:
        Path(out).write_text(text)
        click.echo(out)
    else:
        click.echo(text)


@eval.command()
@click.option("--report", "report_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--format", "fmt", type=click.Choice(["json", "markdown"]), default="markdown")
def metrics(report_path, fmt):
    """Render a stored metrics report."""
    report = parse_report(Path(report_path).read_text())
    click.echo(emit_report(report, format=fmt))


@main.command()
@click.option("--port", type=int, default=8765)
@click.option("--host", default="127.0.0.1",
              help="Bind address; non-loopback values require --allow-remote.")
@click.option("--allow-remote", is_flag=True,
              help="Required to bind anything but loopback (the service holds unmasked biometrics).")
@click.pass_context
def serve(ctx, port, host, allow_remote):
    """Run the local HTTP service that backs the companion UI."""
    if host not in ("127.0.0.1", "localhost", "::1") and not allow_remote:
        raise click.UsageError("refusing non-loopback bind without --allow-remote")
    import uvicorn

    from .service import create_app

    app = create_app(ctx.obj["config"])
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
