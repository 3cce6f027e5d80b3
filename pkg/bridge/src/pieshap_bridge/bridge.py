"""Build core case files from real images and answer coalition requests.

A *job directory* holds everything needed to re-answer queries later:
``case.json`` (the core case file), ``job.json`` (segmenter + classifier
config), and ``masks/concept_NN.png`` (one boolean mask per concept).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from pieshap.coalitions import Coalition, coalition_from_text
from pieshap.fileformat import SchemaError
from pieshap.oracle import OracleCase, save_case, read_request, write_response
from pieshap.oracle import TABLE_MAX_CONCEPTS

from .classifier import DATASET_MEAN, build_classifier, export_head, infer_probs
from .segmentation import extract_concepts

JOB_FILE = "job.json"
CASE_FILE = "case.json"
MASK_DIR = "masks"


@dataclass(frozen=True)
class BridgeJob:
    """Everything needed to turn one image into a reproducible case."""

    image: str
    classifier_id: str = "resnet18-rand"
    n_classes: int = 10
    classifier_seed: int = 0
    mask_source: str = "felzenszwalb"
    max_concepts: int = 8
    max_coalitions: int = 1024  # mirrors the core's default training budget
    sample_seed: int = 0
    image_size: int = 128

    def __post_init__(self) -> None:
        if self.max_concepts < 1:
            raise ValueError("max_concepts must be >= 1")
        if self.max_coalitions < 2:
            raise ValueError("max_coalitions must allow at least empty + full")
        if self.image_size < 32:
            raise ValueError("image_size must be >= 32")


def load_image(path: str | Path, size: int) -> np.ndarray:
    """Decode and resize to (size, size, 3) float64 in [0, 1]."""
    with Image.open(path) as img:
        rgb = img.convert("RGB").resize((size, size), Image.BILINEAR)
    return np.asarray(rgb, dtype=np.float64) / 255.0


def composite(image: np.ndarray, masks: list[np.ndarray], coalition_mask: int) -> np.ndarray:
    """Masked variant: pixels covered by a present concept keep the image,
    everything else gets the neutral fill color."""
    visible = np.zeros(image.shape[:2], dtype=bool)
    for i, m in enumerate(masks):
        if (coalition_mask >> i) & 1:
            visible |= m
    out = np.broadcast_to(DATASET_MEAN, image.shape).copy()
    out[visible] = image[visible]
    return out


def _sample_coalition_masks(n: int, budget: int, seed: int) -> list[int]:
    """Empty + full + seeded distinct random coalitions, up to ``budget`` total."""
    total = 1 << n
    want = min(total, budget)
    full = total - 1
    if want >= total:
        return list(range(total))
    chosen = {0, full}
    rng = np.random.default_rng([seed, n])
    while len(chosen) < want:
        chosen.add(int(rng.integers(0, total)))
    return sorted(chosen)


def _case_probs(
    model, image: np.ndarray, masks: list[np.ndarray], coalition_masks: list[int]
) -> dict[str, np.ndarray]:
    n = len(masks)
    batch = np.stack([composite(image, masks, m) for m in coalition_masks])
    probs = infer_probs(model, batch)
    return {Coalition(m, n).to_text(): probs[i] for i, m in enumerate(coalition_masks)}


def build_case(job: BridgeJob, out_dir: str | Path, case_id: str | None = None) -> Path:
    """Segment, infer, and emit a validated case file; returns the case path."""
    out = Path(out_dir)
    image = load_image(job.image, job.image_size)
    masks = extract_concepts(image, job.mask_source, job.max_concepts, job.sample_seed)
    n = len(masks)
    model = build_classifier(job.classifier_id, job.n_classes, job.classifier_seed)
    head = export_head(model)

    table = n <= TABLE_MAX_CONCEPTS and (1 << n) <= job.max_coalitions
    coalition_masks = (
        list(range(1 << n)) if table
        else _sample_coalition_masks(n, job.max_coalitions, job.sample_seed)
    )
    entries = _case_probs(model, image, masks, coalition_masks)
    full_probs = entries["1" * n]
    case = OracleCase(
        case_id=case_id or f"{Path(job.image).stem}-seed{job.classifier_seed}",
        n_concepts=n,
        n_classes=job.n_classes,
        feature_dim=head.feature_dim,
        predicted_class=int(np.argmax(full_probs)),
        head=head,
        oracle_kind="table" if table else "pairs",
        entries=entries,
    )

    out.mkdir(parents=True, exist_ok=True)
    mask_dir = out / MASK_DIR
    mask_dir.mkdir(exist_ok=True)
    for i, m in enumerate(masks):
        Image.fromarray(m.astype(np.uint8) * 255).save(mask_dir / f"concept_{i:02d}.png")
    (out / JOB_FILE).write_text(
        json.dumps({"case_id": case.case_id, **asdict(job)}, indent=2) + "\n"
    )
    return save_case(case, out / CASE_FILE)


def load_job(job_dir: str | Path) -> tuple[BridgeJob, str]:
    payload = json.loads((Path(job_dir) / JOB_FILE).read_text())
    case_id = payload.pop("case_id")
    return BridgeJob(**payload), case_id


def load_masks(job_dir: str | Path) -> list[np.ndarray]:
    paths = sorted((Path(job_dir) / MASK_DIR).glob("concept_*.png"))
    if not paths:
        raise SchemaError(f"no concept masks found under {job_dir}")
    return [np.asarray(Image.open(p)) > 0 for p in paths]


def answer_requests(job_dir: str | Path, request_path: str | Path,
                    out_path: str | Path) -> Path:
    """Answer a core request file by masked inference; emits a response file."""
    job, case_id = load_job(job_dir)
    req_case_id, texts = read_request(request_path)
    if req_case_id != case_id:
        raise SchemaError(
            f"field 'case_id': request is for {req_case_id!r}, job holds {case_id!r}"
        )
    image = load_image(job.image, job.image_size)
    masks = load_masks(job_dir)
    n = len(masks)
    coalition_masks = sorted({coalition_from_text(t, n).mask for t in texts})
    if coalition_masks:
        model = build_classifier(job.classifier_id, job.n_classes, job.classifier_seed)
        entries = _case_probs(model, image, masks, coalition_masks)
    else:
        entries = {}
    return write_response(case_id, entries, n, out_path)
