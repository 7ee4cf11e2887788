"""Concept-token embeddings, the attribute subspace, and embedding diagnostics.

Learned token rows live in the same space as ordinary word embeddings.  An
attribute subspace is the affine span (mean plus top principal directions) of
attribute-word embeddings for a parent concept; projecting token rows onto it
keeps them in the region where words are known to compose with that concept.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

import json

import numpy as np

from .errors import (
    DegenerateInput,
    DimensionMismatch,
    EmptyCandidates,
    RankTooLarge,
    UnknownToken,
    ZeroVector,
)
from .serialization import canonical_json, decode_f32, encode_f32, fingerprint

ORTHONORMAL_TOL = 1e-6
# Principal directions below this singular value carry no usable variance and
# are dropped (with a note) instead of polluting the basis with noise.
TINY_SINGULAR_VALUE = 1e-10

SUBSPACE_FORMAT_VERSION = 1


class EmbedTable(Protocol):
    """Anything that can turn a word into embedding rows."""

    def tokenize(self, text: str) -> list[int]: ...

    def embed(self, ids: Sequence[int]) -> np.ndarray: ...


class DualEncoderHandle(EmbedTable, Protocol):
    """Adapter-level dual encoder: raw feature vectors, no wrapping."""

    @property
    def dim(self) -> int: ...

    def encode_text(self, text) -> np.ndarray: ...

    def encode_image(self, image) -> np.ndarray: ...


def _as_matrix(vectors: Iterable[np.ndarray]) -> np.ndarray:
    mat = np.asarray(list(vectors), dtype=np.float64)
    if mat.ndim != 2:
        raise ValueError("expected a sequence of equal-length 1-D vectors")
    return mat


@dataclass(frozen=True, eq=False)
class TokenEmbedding:
    """Learned custom-token rows plus projection state and provenance."""

    concept_id: str
    parent_concept: str
    vectors: np.ndarray  # (k, d)
    subspace_id: str | None = None
    is_projected: bool = False
    training_fingerprint: str = ""

    def __post_init__(self) -> None:
        vec = np.asarray(self.vectors, dtype=np.float64)
        if vec.ndim != 2 or vec.shape[0] < 1 or vec.shape[1] < 1:
            raise ValueError("token vectors must be a (k, d) array with k >= 1")
        if not np.all(np.isfinite(vec)):
            raise DegenerateInput("token vectors contain non-finite entries")
        object.__setattr__(self, "vectors", vec)

    @property
    def num_tokens(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def mean_vector(self) -> np.ndarray:
        """Average over the k token rows; the default vector for diagnostics."""
        return self.vectors.mean(axis=0)

    def row_norms(self) -> np.ndarray:
        return np.linalg.norm(self.vectors, axis=1)


@dataclass(frozen=True, eq=False)
class AttributeSubspace:
    """Affine subspace spanned by attribute embeddings: mean + orthonormal basis."""

    attributes: tuple[str, ...]
    mean: np.ndarray  # (d,)
    basis: np.ndarray  # (r, d), orthonormal rows
    rank: int
    source: str = "manual"  # "manual" | "correlation-selected"
    notes: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=np.float64)
        basis = np.asarray(self.basis, dtype=np.float64).reshape(self.rank, mean.shape[0])
        if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(basis)):
            raise DegenerateInput("subspace mean/basis contain non-finite entries")
        if self.rank > 0:
            gram = basis @ basis.T
            if np.max(np.abs(gram - np.eye(self.rank))) > ORTHONORMAL_TOL:
                raise ValueError("basis rows are not orthonormal")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "attributes", tuple(self.attributes))
        object.__setattr__(self, "notes", tuple(self.notes))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True, eq=False)
class AffinityReport:
    """Pairwise cosine similarities between labeled vectors."""

    labels: tuple[str, ...]
    matrix: np.ndarray  # square, symmetric, unit diagonal
    clip_at: float = 0.4  # display clipping only; the data is unclipped


@dataclass(frozen=True, eq=False)
class NormReport:
    """Norm statistics of attribute embeddings vs a learned token."""

    per_attribute_norms: np.ndarray
    mean: float
    std: float  # population convention (divide by n)
    learned_token_norm: float


def attribute_embedding(attribute: str, embed_table: EmbedTable) -> np.ndarray:
    """Average embedding over an attribute word's sub-tokens.

    Raises UnknownToken if the word does not tokenize into known sub-tokens.
    """
    ids = embed_table.tokenize(attribute)
    if not ids:
        raise UnknownToken(f"{attribute!r} has no sub-tokens in the vocabulary")
    rows = np.asarray(embed_table.embed(ids), dtype=np.float64)
    return rows.mean(axis=0)


def build_subspace(
    attribute_vectors: Sequence[np.ndarray],
    rank: int | None = None,
    attributes: Sequence[str] | None = None,
    source: str = "manual",
) -> AttributeSubspace:
    """PCA of attribute embeddings: mean + top-`rank` principal directions.

    Default rank is min(count - 1, d), retaining the full attribute span.
    Directions whose singular value falls below TINY_SINGULAR_VALUE are
    dropped and the effective rank reduced, with a note in the result.
    """
    mat = _as_matrix(attribute_vectors)
    if mat.shape[0] < 1:
        raise ValueError("need at least one attribute vector")
    if not np.all(np.isfinite(mat)):
        raise DegenerateInput("attribute vectors contain non-finite entries")
    n, d = mat.shape
    if rank is None:
        rank = min(n - 1, d)
    if rank < 0 or rank > min(n, d):
        raise RankTooLarge(f"rank {rank} exceeds min(count={n}, dim={d})")

    mean = mat.mean(axis=0)
    centered = mat - mean
    notes: list[str] = []
    if rank == 0:
        basis = np.zeros((0, d))
    else:
        _, singular, vt = np.linalg.svd(centered, full_matrices=False)
        keep = int(np.sum(singular[:rank] >= TINY_SINGULAR_VALUE))
        if keep < rank:
            notes.append(f"dropped {rank - keep} zero-variance direction(s)")
        basis = vt[:keep]

    names = tuple(attributes) if attributes is not None else ()
    return AttributeSubspace(
        attributes=names,
        mean=mean,
        basis=basis,
        rank=basis.shape[0],
        source=source,
        notes=tuple(notes),
    )


def project(v: np.ndarray, subspace: AttributeSubspace) -> np.ndarray:
    """Affine projection onto the subspace: basisT·basis·(v - mean) + mean.

    Accepts a single vector or a stack of row vectors.
    """
    arr = np.asarray(v, dtype=np.float64)
    if arr.shape[-1] != subspace.dim:
        raise DimensionMismatch(
            f"vector dim {arr.shape[-1]} != subspace dim {subspace.dim}"
        )
    centered = arr - subspace.mean
    coords = centered @ subspace.basis.T
    return coords @ subspace.basis + subspace.mean


def select_attributes(
    candidate_attributes: Sequence[str],
    concept_images: Sequence[np.ndarray],
    top_n: int,
    encoders: DualEncoderHandle,
) -> list[str]:
    """Top candidates by cosine similarity of attribute text features to the
    mean of unit-normalized concept-image features.  Ties break lexicographically.
    """
    if not candidate_attributes:
        raise EmptyCandidates("no candidate attributes")
    if not concept_images:
        raise ValueError("need at least one concept image")

    image_feats = []
    for image in concept_images:
        feat = np.asarray(encoders.encode_image(image), dtype=np.float64)
        image_feats.append(feat / np.linalg.norm(feat))
    mean_feat = np.mean(image_feats, axis=0)
    mean_norm = np.linalg.norm(mean_feat)
    if mean_norm < 1e-12:
        raise ZeroVector("mean image feature is zero")

    sims: dict[str, float] = {}
    for cand in candidate_attributes:
        feat = np.asarray(encoders.encode_text(cand), dtype=np.float64)
        denom = np.linalg.norm(feat) * mean_norm
        sims[cand] = float(feat @ mean_feat / denom) if denom > 0 else 0.0

    ranked = sorted(sims, key=lambda c: (-sims[c], c))
    return ranked[: min(top_n, len(ranked))]


def affinity(labeled_vectors: Sequence[tuple[str, np.ndarray]], clip_at: float = 0.4) -> AffinityReport:
    """Cosine-similarity matrix between normalized vectors."""
    if len(labeled_vectors) < 2:
        raise ValueError("need at least two vectors")
    labels = tuple(label for label, _ in labeled_vectors)
    mat = _as_matrix(v for _, v in labeled_vectors)
    norms = np.linalg.norm(mat, axis=1)
    if np.any(norms < 1e-12):
        raise ZeroVector("affinity input contains a zero vector")
    unit = mat / norms[:, None]
    sim = unit @ unit.T
    sim = np.clip((sim + sim.T) / 2.0, -1.0, 1.0)
    return AffinityReport(labels=labels, matrix=sim, clip_at=clip_at)


def norm_report(
    attribute_vectors: Sequence[np.ndarray], learned: TokenEmbedding
) -> NormReport:
    """Attribute-norm distribution vs the learned token's mean row norm."""
    mat = _as_matrix(attribute_vectors)
    if mat.shape[1] != learned.dim:
        raise DimensionMismatch("attribute vectors and token have different dims")
    norms = np.linalg.norm(mat, axis=1)
    return NormReport(
        per_attribute_norms=norms,
        mean=float(norms.mean()),
        std=float(norms.std()),
        learned_token_norm=float(learned.row_norms().mean()),
    )


# --- subspace persistence -------------------------------------------------

def subspace_to_doc(subspace: AttributeSubspace) -> dict:
    return {
        "version": SUBSPACE_FORMAT_VERSION,
        "attributes": list(subspace.attributes),
        "dim": subspace.dim,
        "rank": subspace.rank,
        "mean": encode_f32(subspace.mean),
        "basis": encode_f32(subspace.basis),
    }


def subspace_from_doc(doc: Mapping) -> AttributeSubspace:
    if doc.get("version") != SUBSPACE_FORMAT_VERSION:
        raise ValueError(f"unsupported subspace format version {doc.get('version')!r}")
    dim = int(doc["dim"])
    rank = int(doc["rank"])
    return AttributeSubspace(
        attributes=tuple(doc["attributes"]),
        mean=decode_f32(doc["mean"], (dim,)),
        basis=decode_f32(doc["basis"], (rank, dim)),
        rank=rank,
    )


def subspace_fingerprint(subspace: AttributeSubspace) -> str:
    return fingerprint(subspace_to_doc(subspace))


def save_subspace(subspace: AttributeSubspace, path: str | Path) -> None:
    Path(path).write_text(canonical_json(subspace_to_doc(subspace)), encoding="utf-8")


def load_subspace(path: str | Path) -> AttributeSubspace:
    return subspace_from_doc(json.loads(Path(path).read_text(encoding="utf-8")))
