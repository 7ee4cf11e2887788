"""Retrieval index plus the evaluation metrics: reciprocal-rank retrieval,
ROC-AUC recognition splits, and object/context accuracy for generated images.

All scoring is exact exhaustive cosine against unit-normalized features;
metrics match their brute-force definitions exactly on small inputs.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .embedding import TokenEmbedding
from .encoders import PromptTemplate, render_plain
from .errors import (
    DimensionMismatch,
    DuplicateId,
    EmptyIndex,
    EmptyInput,
    OneClassMissing,
    ZeroVector,
)
from .serialization import canonical_json, fingerprint_bytes

INDEX_FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class RetrievalIndex:
    """Unit-normalized image features keyed by unique ids."""

    ids: tuple[str, ...]
    features: np.ndarray  # (n, dim), unit rows
    labels: tuple[str | None, ...]
    dim: int

    def __post_init__(self) -> None:
        if len(set(self.ids)) != len(self.ids):
            raise DuplicateId("index ids must be unique")
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape != (len(self.ids), self.dim):
            raise ValueError("features must be (len(ids), dim)")
        norms = np.linalg.norm(feats, axis=1)
        if len(self.ids) and np.max(np.abs(norms - 1.0)) > 1e-6:
            raise ValueError("index features must be unit-normalized")
        object.__setattr__(self, "features", feats)

    def __len__(self) -> int:
        return len(self.ids)


@dataclass(frozen=True, eq=False)
class EvalReport:
    metric: str
    value: float
    details: dict = field(default_factory=dict)
    std: float | None = None


def build_index(entries: Sequence[tuple], encoders) -> RetrievalIndex:
    """Encode images once, unit-normalize, and freeze into an index.

    Entries are (image_id, image) or (image_id, image, class_label).
    """
    if not entries:
        raise ValueError("cannot build an empty index")
    ids: list[str] = []
    labels: list[str | None] = []
    feats: list[np.ndarray] = []
    for entry in entries:
        image_id, image = entry[0], entry[1]
        label = entry[2] if len(entry) > 2 else None
        if image_id in ids:
            raise DuplicateId(f"duplicate image id {image_id!r}")
        vec = np.asarray(encoders.encode_image(image), dtype=np.float64)
        norm = np.linalg.norm(vec)
        if norm < 1e-12:
            raise ZeroVector(f"image {image_id!r} encodes to a zero feature")
        ids.append(str(image_id))
        labels.append(label)
        feats.append(vec / norm)
    features = np.asarray(feats)
    return RetrievalIndex(tuple(ids), features, tuple(labels), features.shape[1])


def rank_with_scores(query_feature, index: RetrievalIndex) -> list[tuple[str, float]]:
    """Ids sorted by descending cosine score; ties break by ascending id."""
    if len(index) == 0:
        raise EmptyIndex("cannot rank against an empty index")
    query = np.asarray(
        query_feature.values if hasattr(query_feature, "values") else query_feature,
        dtype=np.float64,
    ).reshape(-1)
    if query.shape[0] != index.dim:
        raise DimensionMismatch(f"query dim {query.shape[0]} != index dim {index.dim}")
    norm = np.linalg.norm(query)
    if norm < 1e-12:
        raise ZeroVector("query feature is zero")
    scores = index.features @ (query / norm)
    order = sorted(range(len(index)), key=lambda i: (-scores[i], index.ids[i]))
    return [(index.ids[i], float(scores[i])) for i in order]


def rank(query_feature, index: RetrievalIndex) -> list[str]:
    return [image_id for image_id, _ in rank_with_scores(query_feature, index)]


def mrr(gt_ranks: Sequence[int]) -> float:
    """Mean reciprocal rank over ground-truth ranks (1 = best)."""
    ranks = list(gt_ranks)
    if not ranks:
        raise EmptyInput("mrr needs at least one rank")
    if any(r < 1 for r in ranks):
        raise ValueError("ranks must be >= 1")
    return float(np.mean([1.0 / r for r in ranks]))


def auc_roc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Probability a random positive outscores a random negative; ties count 0.5.

    Computed from midranks, which equals the exhaustive pair count exactly.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length 1-D sequences")
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise OneClassMissing("auc needs both classes present")

    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0  # midrank, 1-based
        i = j + 1
    pos_rank_sum = float(np.sum(ranks[labels == 1]))
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def _prompt_feature(encoders, template_text: str, token: TokenEmbedding | None, parent: str) -> np.ndarray:
    from .encoders import assemble_rows  # local to avoid import cycles in docs

    if token is not None:
        rows = assemble_rows(encoders, template_text, token.vectors, parent)
        vec = np.asarray(encoders.encode_text(rows), dtype=np.float64)
    else:
        vec = np.asarray(encoders.encode_text(render_plain(template_text, parent)), dtype=np.float64)
    return vec / np.linalg.norm(vec)


def _image_scores(encoders, images, prompt_feature: np.ndarray) -> list[float]:
    out = []
    for img in images:
        feat = np.asarray(encoders.encode_image(img), dtype=np.float64)
        out.append(float(prompt_feature @ feat / np.linalg.norm(feat)))
    return out


def recognition_splits(
    token: TokenEmbedding,
    parent: str,
    target_images: Sequence,
    parent_images: Sequence,
    other_images: Sequence,
    encoders,
    template_text: str | None = None,
) -> dict[str, EvalReport]:
    """ROC-AUC for the three recognition questions: token prompt vs parent
    images, token prompt vs other-class images, parent prompt vs other-class
    images."""
    if not target_images or not parent_images or not other_images:
        raise ValueError("all three image splits must be nonempty")
    template_text = template_text or PromptTemplate.default().context_text

    tau_star = _prompt_feature(encoders, template_text, token, parent)
    tau_parent = _prompt_feature(encoders, template_text, None, parent)

    target_s = _image_scores(encoders, target_images, tau_star)
    parent_s_star = _image_scores(encoders, parent_images, tau_star)
    other_s_star = _image_scores(encoders, other_images, tau_star)
    parent_s_par = _image_scores(encoders, parent_images, tau_parent)
    other_s_par = _image_scores(encoders, other_images, tau_parent)

    def report(name: str, pos: list[float], neg: list[float]) -> EvalReport:
        value = auc_roc(pos + neg, [1] * len(pos) + [0] * len(neg))
        return EvalReport(metric=f"auc_roc:{name}", value=value,
                          details={"n_pos": len(pos), "n_neg": len(neg)})

    return {
        "target_vs_parent": report("target_vs_parent", target_s, parent_s_star),
        "target_vs_other": report("target_vs_other", target_s, other_s_star),
        "parent_vs_other": report("parent_vs_other", parent_s_par, other_s_par),
    }


def object_context_accuracy(
    token: TokenEmbedding,
    parent: str,
    contexts: Sequence[str],
    class_references: Mapping[str, Sequence],
    true_class: str,
    backbone,
    encoders,
    images_per_context: int = 8,
    seed: int = 0,
) -> tuple[EvalReport, EvalReport]:
    """Generate images per context and classify them back.

    Context accuracy: image feature correlates most with the generating
    context's text feature.  Object accuracy: image feature correlates most
    with the true class's mean reference-image feature.
    """
    from .encoders import assemble_rows
    from .serialization import derive_seed

    contexts = list(contexts)
    if len(contexts) < 2:
        raise ValueError("need at least two contexts")
    if len(class_references) < 2:
        raise ValueError("need at least two classes")
    if true_class not in class_references:
        raise ValueError(f"true class {true_class!r} missing from references")

    context_feats = np.asarray(
        [_prompt_feature(encoders, c, None, parent) for c in contexts]
    )
    class_names = sorted(class_references)
    class_feats = []
    for name in class_names:
        feats = []
        for img in class_references[name]:
            v = np.asarray(encoders.encode_image(img), dtype=np.float64)
            feats.append(v / np.linalg.norm(v))
        mean = np.mean(feats, axis=0)
        class_feats.append(mean / np.linalg.norm(mean))
    class_feats = np.asarray(class_feats)
    true_idx = class_names.index(true_class)

    ctx_hits = 0
    obj_hits = 0
    total = 0
    for ci, context in enumerate(contexts):
        rows = assemble_rows(encoders, context, token.vectors, parent)
        condition = np.asarray(encoders.encode_text(rows), dtype=np.float64)
        images = backbone.generate_batch(
            condition, images_per_context, seed=derive_seed(seed, "context", ci)
        )
        for img in images:
            feat = np.asarray(encoders.encode_image(img), dtype=np.float64)
            feat = feat / np.linalg.norm(feat)
            ctx_hits += int(np.argmax(context_feats @ feat) == ci)
            obj_hits += int(np.argmax(class_feats @ feat) == true_idx)
            total += 1

    object_report = EvalReport(
        metric="object_accuracy", value=obj_hits / total,
        details={"classes": class_names, "images": total},
    )
    context_report = EvalReport(
        metric="context_accuracy", value=ctx_hits / total,
        details={"contexts": len(contexts), "images": total},
    )
    return object_report, context_report


# --- persistence -------------------------------------------------------------

def index_to_bytes(index: RetrievalIndex) -> bytes:
    header = canonical_json(
        {
            "version": INDEX_FORMAT_VERSION,
            "dim": index.dim,
            "count": len(index),
            "ids": list(index.ids),
            "labels": list(index.labels),
        }
    ).encode("utf-8")
    block = np.ascontiguousarray(index.features, dtype="<f4").tobytes()
    return header + b"\n" + block


def index_from_bytes(data: bytes) -> RetrievalIndex:
    header_raw, _, block = data.partition(b"\n")
    header = json.loads(header_raw.decode("utf-8"))
    if header.get("version") != INDEX_FORMAT_VERSION:
        raise ValueError(f"unsupported index format version {header.get('version')!r}")
    count, dim = int(header["count"]), int(header["dim"])
    feats = np.frombuffer(block, dtype="<f4").astype(np.float64).reshape(count, dim)
    return RetrievalIndex(
        ids=tuple(header["ids"]),
        features=feats,
        labels=tuple(header["labels"]),
        dim=dim,
    )


def save_index(index: RetrievalIndex, path: str | Path) -> None:
    Path(path).write_bytes(index_to_bytes(index))


def load_index(path: str | Path) -> RetrievalIndex:
    return index_from_bytes(Path(path).read_bytes())


def index_fingerprint(index: RetrievalIndex) -> str:
    return fingerprint_bytes(index_to_bytes(index))


def read_manifest(path: str | Path) -> list[dict]:
    """Dataset manifest rows: image_path, class_id, caption (CSV with header)."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"image_path", "class_id", "caption"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(f"manifest must have columns {sorted(required)}")
        for row in reader:
            rows.append(
                {
                    "image_path": row["image_path"],
                    "class_id": row["class_id"],
                    "caption": row["caption"],
                }
            )
    if not rows:
        raise EmptyInput("manifest has no rows")
    return rows
