"""Quantitative evaluation: embeddings, similarity metrics, Frechet distance,
the masked-vs-unmasked attribute-inference benchmark, and report emission.

Embedding models and the attribute oracle are provider interfaces; the
deterministic stubs make every metric computable and reproducible offline,
while remote clients plug in real models for full-scale runs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict
from typing import Callable, Protocol, runtime_checkable

import httpx
import numpy as np

from .errors import (
    AbstentionRateExceeded,
    DimensionMismatch,
    MalformedHeader,
    NonBinaryValue,
    ProviderUnavailable,
    RowArityMismatch,
    TooFewSamples,
    UnknownImageId,
    ZeroVector,
)
from .imaging import Image

REPORT_SCHEMA = "privedit-report/1"


# --- embedding providers -----------------------------------------------------

@runtime_checkable
class EmbeddingProvider(Protocol):
    dim: int

    def embed_image(self, img: Image) -> np.ndarray: ...

    def embed_text(self, text: str) -> np.ndarray: ...


@dataclass
class StubEmbeddingProvider:
    """Deterministic stand-in: unit vectors from a seeded projection of a content hash.

    Byte-identical input (8-bit image buffer or text) always maps to the
    identical vector, across processes and platforms.
    """

    dim: int = 64
    seed: int = 0

    def _vector(self, material: bytes) -> np.ndarray:
        digest = hashlib.sha256(material + self.seed.to_bytes(8, "little")).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        v = rng.standard_normal(self.dim)
        return v / np.linalg.norm(v)

    def embed_image(self, img: Image) -> np.ndarray:
        h = img.height.to_bytes(4, "little") + img.width.to_bytes(4, "little")
        return self._vector(b"image:" + h + img.to_rgb8().tobytes())

    def embed_text(self, text: str) -> np.ndarray:
        return self._vector(b"text:" + text.encode("utf-8"))


@dataclass
class RemoteEmbeddingProvider:
    """Client for a scoring service exposing /embed_image and /embed_text."""

    endpoint: str
    dim: int = 512
    timeout: float = 30.0
    client: httpx.Client | None = None

    def _post(self, path: str, **kwargs) -> np.ndarray:
        client = self.client or httpx.Client()
        try:
            resp = client.post(self.endpoint.rstrip("/") + path, timeout=self.timeout, **kwargs)
        except httpx.HTTPError as exc:
            raise ProviderUnavailable(f"embedding service unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise ProviderUnavailable(f"embedding service returned {resp.status_code}")
        vec = np.asarray(resp.json()["vector"], dtype=np.float64)
        norm = np.linalg.norm(vec)
        if norm == 0:
            raise ZeroVector("embedding service returned a zero vector")
        return vec / norm

    def embed_image(self, img: Image) -> np.ndarray:
        from .imaging import encode_image

        blob = encode_image(img, format="png")
        return self._post("/embed_image", content=blob, headers={"Content-Type": "image/png"})

    def embed_text(self, text: str) -> np.ndarray:
        return self._post("/embed_text", json={"text": text})


# --- similarity metrics ------------------------------------------------------

def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimensionMismatch(f"vector dims differ: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine similarity is undefined for zero vectors")
    return float(a @ b / (na * nb))


def clip_score(img: Image, prompt: str, provider: EmbeddingProvider) -> float:
    """Semantic alignment: cosine between image and prompt embeddings."""
    return cosine_similarity(provider.embed_image(img), provider.embed_text(prompt))


def frechet_distance(a, b, eps: float = 1e-6) -> float:
    """Frechet distance between Gaussian fits of two embedding sets.

    ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)), with eps * I added
    to both covariances and the matrix square root taken by eigendecomposition
    of the symmetrized product (negative eigenvalues clipped to zero).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if len(a) < 2 or len(b) < 2:
        raise TooFewSamples("frechet distance needs at least 2 samples per set")
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"embedding dims differ: {a.shape[1]} vs {b.shape[1]}")
    d = a.shape[1]
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    cov_a = np.cov(a, rowvar=False).reshape(d, d) + eps * np.eye(d)
    cov_b = np.cov(b, rowvar=False).reshape(d, d) + eps * np.eye(d)

    # sqrt(cov_a) via eigendecomposition, then the symmetrized product trick.
    w, v = np.linalg.eigh(cov_a)
    sqrt_a = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
    prod = sqrt_a @ cov_b @ sqrt_a
    w2 = np.linalg.eigvalsh((prod + prod.T) / 2.0)
    tr_sqrt = float(np.sqrt(np.clip(w2, 0.0, None)).sum())

    diff = mu_a - mu_b
    value = float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * tr_sqrt)
    return max(value, 0.0)


# --- attribute benchmark -----------------------------------------------------

@dataclass
class AttributeGroundTruth:
    """Filename -> {attribute name -> bool}, parsed from the CelebA list format."""

    attributes: list[str]
    rows: dict[str, dict[str, bool]]


def ingest_celeba_attributes(text: str) -> AttributeGroundTruth:
    """Parse the CelebA list-attr format, bit-exactly.

    Line 1: row count. Line 2: attribute names. Rows: filename then one
    value in {-1, 1} per attribute.
    """
    lines = text.splitlines()
    if len(lines) < 2:
        raise MalformedHeader("attribute file needs a count line and a header line")
    try:
        declared = int(lines[0].strip())
    except ValueError as exc:
        raise MalformedHeader(f"first line must be the row count: {exc}") from exc
    names = lines[1].split()
    if not names:
        raise MalformedHeader("second line must list attribute names")
    rows: dict[str, dict[str, bool]] = {}
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != len(names) + 1:
            raise RowArityMismatch(
                f"line {lineno}: expected {len(names)} values, got {len(parts) - 1}"
            )
        values: dict[str, bool] = {}
        for name, raw in zip(names, parts[1:]):
            if raw == "1":
                values[name] = True
            elif raw == "-1":
                values[name] = False
            else:
                raise NonBinaryValue(f"line {lineno}: value '{raw}' is not -1 or 1")
        rows[parts[0]] = values
    if declared != len(rows):
        # The count line is advisory in the wild; keep parsing strict elsewhere.
        pass
    return AttributeGroundTruth(attributes=names, rows=rows)


@dataclass
class AttributePrediction:
    image_id: str
    attribute: str
    value: bool | None  # None = abstain


@dataclass
class AttributeMetrics:
    attribute: str
    accuracy: float
    precision: float
    recall: float
    f1: float
    n: int
    condition: str | None = None


def attribute_metrics(
    preds: list[AttributePrediction], truth: AttributeGroundTruth
) -> dict[str, AttributeMetrics]:
    """Confusion-matrix metrics per attribute.

    Abstentions count as incorrect and as non-positive predictions:
    they hurt accuracy, become false negatives on positive truths, and
    never enter the precision denominator. 0/0 ratios resolve to 0.
    """
    counts: dict[str, dict[str, int]] = {}
    for p in preds:
        if p.image_id not in truth.rows:
            raise UnknownImageId(f"prediction references unknown image '{p.image_id}'")
        actual = truth.rows[p.image_id].get(p.attribute)
        if actual is None:
            raise UnknownImageId(
                f"prediction references unknown attribute '{p.attribute}'"
            )
        c = counts.setdefault(p.attribute, {"tp": 0, "fp": 0, "fn": 0, "tn": 0, "abstain": 0, "n": 0})
        c["n"] += 1
        if p.value is None:
            c["abstain"] += 1
            if actual:
                c["fn"] += 1
            continue
        if p.value and actual:
            c["tp"] += 1
        elif p.value and not actual:
            c["fp"] += 1
        elif not p.value and actual:
            c["fn"] += 1
        else:
            c["tn"] += 1

    out: dict[str, AttributeMetrics] = {}
    for attr, c in counts.items():
        correct = c["tp"] + c["tn"]
        accuracy = correct / c["n"] if c["n"] else 0.0
        precision = c["tp"] / (c["tp"] + c["fp"]) if (c["tp"] + c["fp"]) else 0.0
        recall = c["tp"] / (c["tp"] + c["fn"]) if (c["tp"] + c["fn"]) else 0.0
        f1 = 2.0 * precision * recall / (precision + recall) if (precision + recall) else 0.0
        out[attr] = AttributeMetrics(
            attribute=attr, accuracy=accuracy, precision=precision,
            recall=recall, f1=f1, n=c["n"],
        )
    return out


@dataclass
class AttributeSpec:
    """One benchmark attribute: oracle prompt, parse rule, truth column."""

    name: str
    prompt: str
    truth_column: str
    kind: str = "yesno"                      # "yesno" | "category"
    categories: list[str] = field(default_factory=list)
    positive_categories: list[str] = field(default_factory=list)

    def parse(self, answer: str) -> bool | None:
        text = answer.strip().lower().strip(".!,:;\"'")
        if self.kind == "yesno":
            if text.startswith("yes"):
                return True
            if text.startswith("no"):
                return False
            return None
        for cat in self.categories:
            if text.startswith(cat.lower()):
                return cat.lower() in (c.lower() for c in self.positive_categories)
        return None


def default_attribute_specs() -> list[AttributeSpec]:
    """The shipped benchmark attributes, mapped onto CelebA truth columns."""
    yesno = "Answer strictly yes or no: does the person in this image have {}?"
    return [
        AttributeSpec(
            name="age group",
            prompt="Answer with exactly one word (young, middle-aged, or old): "
                   "what is the age group of the person in this image?",
            truth_column="Young", kind="category",
            categories=["young", "middle-aged", "old"],
            positive_categories=["young"],
        ),
        AttributeSpec(
            name="gender",
            prompt="Answer strictly yes or no: is the person in this image male?",
            truth_column="Male",
        ),
        AttributeSpec(name="mustache", prompt=yesno.format("a mustache"), truth_column="Mustache"),
        AttributeSpec(
            name="beard",
            prompt="Answer strictly yes or no: is the person in this image clean-shaven "
                   "with no beard?",
            truth_column="No_Beard",
        ),
        AttributeSpec(
            name="lipstick", prompt=yesno.format("lipstick on"), truth_column="Wearing_Lipstick"
        ),
    ]


@runtime_checkable
class AttributeOracle(Protocol):
    def answer(self, img: Image, spec: AttributeSpec, image_id: str, condition: str) -> str: ...


@dataclass
class ScriptedAttributeOracle:
    """Offline oracle driven by a callback; handy shapes live in tests."""

    script: Callable[[Image, AttributeSpec, str, str], str]
    name: str = "scripted"

    def answer(self, img: Image, spec: AttributeSpec, image_id: str, condition: str) -> str:
        return self.script(img, spec, image_id, condition)


@dataclass
class RemoteVlmOracle:
    """HTTP VLM client: POST image + the fixed prompt, read the text answer."""

    endpoint: str
    timeout: float = 30.0
    name: str = "remote-vlm"
    client: httpx.Client | None = None

    def answer(self, img: Image, spec: AttributeSpec, image_id: str, condition: str) -> str:
        from .imaging import encode_image

        client = self.client or httpx.Client()
        resp = client.post(
            self.endpoint,
            files={"image": ("image.png", encode_image(img, format="png"), "image/png")},
            data={"prompt": spec.prompt},
            timeout=self.timeout,
        )
        if resp.status_code != 200:
            raise ProviderUnavailable(f"VLM returned status {resp.status_code}")
        return resp.text


@dataclass
class ImagePair:
    image_id: str
    unmasked: Image
    masked: Image


def run_attribute_benchmark(
    image_pairs: list[ImagePair],
    attributes: list[AttributeSpec],
    oracle: AttributeOracle,
    truth: AttributeGroundTruth,
    retries: int = 1,
    max_abstention_rate: float = 0.5,
) -> list[AttributeMetrics]:
    """Query the oracle per (image, attribute) on masked and unmasked inputs.

    Unparseable or persistently failing queries become abstentions; the run
    fails only if more than half of all queries abstained. Results are
    aggregated in a deterministic order regardless of query completion order.
    """
    rows: list[AttributeMetrics] = []
    total = 0
    abstained = 0
    per_condition: dict[str, list[AttributePrediction]] = {"unmasked": [], "masked": []}
    for condition in ("unmasked", "masked"):
        for pair in sorted(image_pairs, key=lambda p: p.image_id):
            img = pair.unmasked if condition == "unmasked" else pair.masked
            for spec in attributes:
                total += 1
                value: bool | None = None
                for _ in range(retries + 1):
                    try:
                        value = spec.parse(oracle.answer(img, spec, pair.image_id, condition))
                    except Exception:
                        value = None
                    if value is not None:
                        break
                if value is None:
                    abstained += 1
                per_condition[condition].append(
                    AttributePrediction(image_id=pair.image_id, attribute=spec.truth_column, value=value)
                )
    if total and abstained / total > max_abstention_rate:
        raise AbstentionRateExceeded(
            f"{abstained}/{total} queries abstained (> {max_abstention_rate:.0%})"
        )
    for condition in ("unmasked", "masked"):
        metrics = attribute_metrics(per_condition[condition], truth)
        spec_by_column = {s.truth_column: s for s in attributes}
        for column in sorted(metrics):
            m = metrics[column]
            m.condition = condition
            m.attribute = spec_by_column[column].name if column in spec_by_column else column
            rows.append(m)
    return rows


def aggregate_across_models(runs: dict[str, list[AttributeMetrics]]) -> list[dict]:
    """Per-model metrics in, mean and std across models out."""
    keyed: dict[tuple[str, str], list[AttributeMetrics]] = {}
    for rows in runs.values():
        for m in rows:
            keyed.setdefault((m.attribute, m.condition or ""), []).append(m)
    out = []
    for (attribute, condition), items in sorted(keyed.items()):
        entry = {"attribute": attribute, "condition": condition, "models": len(items)}
        for metric in ("accuracy", "precision", "recall", "f1"):
            values = np.array([getattr(m, metric) for m in items])
            entry[f"{metric}_mean"] = float(values.mean())
            entry[f"{metric}_std"] = float(values.std())
        out.append(entry)
    return out


# --- report ------------------------------------------------------------------

@dataclass
class ImageMetricsRow:
    id: str
    face_fid_ref: float | None = None
    cosine: float | None = None
    clip_orig: float | None = None
    clip_gpt: float | None = None
    clip_ours: float | None = None


@dataclass
class MethodSummaryRow:
    method: str
    face_fid: float
    cosine: float
    clip: float
    privacy: str = "NA"


@dataclass
class AblationRow:
    mask_ratio: float
    face_fid: float | None = None
    cosine: float | None = None
    clip: float | None = None
    attribute_f1: dict[str, float] = field(default_factory=dict)


@dataclass
class MetricsReport:
    image_rows: list[ImageMetricsRow] = field(default_factory=list)
    attribute_rows: list[AttributeMetrics] = field(default_factory=list)
    summary_rows: list[MethodSummaryRow] = field(default_factory=list)
    ablation_rows: list[AblationRow] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)


def emit_report(report: MetricsReport, format: str = "json") -> str:
    if format == "json":
        doc = {"schema": REPORT_SCHEMA, **asdict(report)}
        return json.dumps(doc, indent=2, sort_keys=True)
    if format == "markdown":
        return _markdown_report(report)
    raise ValueError(f"unknown report format: {format}")


def parse_report(text: str) -> MetricsReport:
    doc = json.loads(text)
    if doc.get("schema") != REPORT_SCHEMA:
        raise ValueError(f"unsupported report schema: {doc.get('schema')}")
    return MetricsReport(
        image_rows=[ImageMetricsRow(**r) for r in doc.get("image_rows", [])],
        attribute_rows=[AttributeMetrics(**r) for r in doc.get("attribute_rows", [])],
        summary_rows=[MethodSummaryRow(**r) for r in doc.get("summary_rows", [])],
        ablation_rows=[AblationRow(**r) for r in doc.get("ablation_rows", [])],
        metadata=doc.get("metadata", {}),
    )


def _fmt(value) -> str:
    return "" if value is None else f"{value:.2f}"


def _markdown_report(report: MetricsReport) -> str:
    parts: list[str] = []
    if report.summary_rows:
        parts.append("| Method | Face-FID | Cosine | CLIP | Privacy |")
        parts.append("|---|---|---|---|---|")
        for r in report.summary_rows:
            parts.append(
                f"| {r.method} | {_fmt(r.face_fid)} | {_fmt(r.cosine)} | {_fmt(r.clip)} | {r.privacy} |"
            )
        parts.append("")
    if report.ablation_rows:
        attr_names: list[str] = []
        for row in report.ablation_rows:
            for name in row.attribute_f1:
                if name not in attr_names:
                    attr_names.append(name)
        header = ["Mask Ratio", "Face-FID", "Cosine", "CLIP", *attr_names]
        parts.append("| " + " | ".join(header) + " |")
        parts.append("|" + "---|" * len(header))
        for row in report.ablation_rows:
            cells = [f"{row.mask_ratio:.2f}", _fmt(row.face_fid), _fmt(row.cosine), _fmt(row.clip)]
            cells += [_fmt(row.attribute_f1.get(a)) for a in attr_names]
            parts.append("| " + " | ".join(cells) + " |")
        parts.append("")
    if report.attribute_rows:
        parts.append("| Attribute | Condition | Accuracy | Precision | Recall | F1 | n |")
        parts.append("|---|---|---|---|---|---|---|")
        for m in report.attribute_rows:
            parts.append(
                f"| {m.attribute} | {m.condition or ''} | {_fmt(m.accuracy)} | "
                f"{_fmt(m.precision)} | {_fmt(m.recall)} | {_fmt(m.f1)} | {m.n} |"
            )
        parts.append("")
    if report.image_rows:
        parts.append("| Image | Face-FID ref | Cosine | CLIP orig | CLIP edited | CLIP ours |")
        parts.append("|---|---|---|---|---|---|")
        for r in report.image_rows:
            parts.append(
                f"| {r.id} | {_fmt(r.face_fid_ref)} | {_fmt(r.cosine)} | {_fmt(r.clip_orig)} | "
                f"{_fmt(r.clip_gpt)} | {_fmt(r.clip_ours)} |"
            )
        parts.append("")
    return "\n".join(parts)
