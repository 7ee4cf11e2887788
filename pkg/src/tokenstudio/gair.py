"""Generation-aided weight search for composed retrieval queries.

For each weight on a grid, preview images are generated from the composed
query and scored by min(similarity to the concept's reference images,
similarity to attribute-only context images); the weight with the best mean
preview score wins, ties going to the largest weight (closest to the pure
token query).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .embedding import TokenEmbedding
from .encoders import PromptTemplate, compose_query, encode_text, render_plain
from .errors import EmptyAttributes, NoWeights
from .serialization import derive_seed


@dataclass(frozen=True, eq=False)
class GairRequest:
    token: TokenEmbedding
    caption: str  # template text with the token slot
    parent: str
    attributes: tuple[str, ...]
    weight_grid: tuple[float, ...]
    reference_images: tuple
    previews_per_weight: int = 4
    seed: int = 0

    def __post_init__(self) -> None:
        grid = tuple(float(w) for w in self.weight_grid)
        if not grid:
            raise NoWeights("weight grid is empty")
        if any(not 0.0 <= w <= 1.0 for w in grid):
            raise ValueError("weights must lie in [0, 1]")
        if list(grid) != sorted(grid):
            raise ValueError("weight grid must be sorted ascending")
        if not self.attributes:
            raise EmptyAttributes("weight search needs at least one attribute")
        if self.previews_per_weight < 1:
            raise ValueError("previews_per_weight must be >= 1")
        if not self.reference_images:
            raise ValueError("need at least one reference concept image")
        object.__setattr__(self, "weight_grid", grid)
        object.__setattr__(self, "attributes", tuple(self.attributes))
        object.__setattr__(self, "reference_images", tuple(self.reference_images))

    @property
    def token_ref(self) -> str:
        return self.token.concept_id


@dataclass(frozen=True, eq=False)
class GairResult:
    optimal_weight: float
    weights: tuple[float, ...]
    scores: tuple[float, ...]
    object_scores: tuple[float, ...]
    context_scores: tuple[float, ...]
    preview_images: tuple  # tuple per weight of generated images
    context_images: tuple

    def __post_init__(self) -> None:
        if self.optimal_weight not in self.weights:
            raise ValueError("optimal weight must come from the grid")
        best = max(self.scores)
        if self.scores[self.weights.index(self.optimal_weight)] != best:
            raise ValueError("optimal weight must attain the maximum score")

    def curve_csv(self) -> str:
        lines = ["w,score"]
        lines += [f"{w},{s}" for w, s in zip(self.weights, self.scores)]
        return "\n".join(lines) + "\n"


def default_weight_grid() -> tuple[float, ...]:
    return tuple(round(w, 1) for w in np.linspace(0.0, 1.0, 11))


def context_images(
    encoders,
    backbone,
    caption: str,
    attributes: Sequence[str],
    parent: str,
    m: int,
    seed: int = 0,
) -> list[np.ndarray]:
    """Images for the attribute-averaged query (the token slot replaced by
    each attribute in turn, features averaged)."""
    attrs = tuple(attributes)
    if not attrs:
        raise EmptyAttributes("context images need at least one attribute")
    feats = []
    for attr in attrs:
        prompt = render_plain(caption, parent, star_text=attr)
        feats.append(encode_text(encoders, prompt).unit().values)
    mean_feature = np.mean(feats, axis=0)
    return backbone.generate_batch(mean_feature, m, seed=seed)


def _mean_cosine(feature: np.ndarray, reference_feats: np.ndarray) -> float:
    """Mean cosine between one feature and a stack of unit reference features."""
    unit = feature / np.linalg.norm(feature)
    return float(np.mean(reference_feats @ unit))


def _unit_image_features(encoders, images) -> np.ndarray:
    feats = []
    for img in images:
        v = np.asarray(encoders.encode_image(img), dtype=np.float64)
        feats.append(v / np.linalg.norm(v))
    return np.asarray(feats)


def run_gair(request: GairRequest, encoders, backbone) -> GairResult:
    """Sweep the weight grid and pick the argmax of the min(object, context) score.

    Per-weight preview seeds derive from (request seed, weight value) so weight
    evaluations are order-independent; ties break toward the largest weight.
    """
    template = PromptTemplate(request.caption)
    ref_feats = _unit_image_features(encoders, request.reference_images)
    ctx_imgs = context_images(
        encoders,
        backbone,
        request.caption,
        request.attributes,
        request.parent,
        request.previews_per_weight,
        seed=derive_seed(request.seed, "context"),
    )
    ctx_feats = _unit_image_features(encoders, ctx_imgs)

    composed = compose_query(
        encoders, template, request.token, request.parent,
        request.attributes, request.weight_grid[0],
    )

    scores: list[float] = []
    object_scores: list[float] = []
    context_scores: list[float] = []
    previews: list[tuple] = []
    for w in request.weight_grid:
        query = composed.with_weight(w)
        # seeds keyed by the weight value, so dropping one grid point leaves
        # every other weight's previews (and therefore scores) unchanged
        images = backbone.generate_batch(
            query.feature.values,
            request.previews_per_weight,
            seed=derive_seed(request.seed, "previews", w),
        )
        per_preview = []
        per_obj = []
        per_ctx = []
        for img in images:
            feat = np.asarray(encoders.encode_image(img), dtype=np.float64)
            obj = _mean_cosine(feat, ref_feats)
            ctx = _mean_cosine(feat, ctx_feats)
            per_obj.append(obj)
            per_ctx.append(ctx)
            per_preview.append(min(obj, ctx))
        scores.append(float(np.mean(per_preview)))
        object_scores.append(float(np.mean(per_obj)))
        context_scores.append(float(np.mean(per_ctx)))
        previews.append(tuple(images))

    best_idx = 0
    for i in range(len(scores)):
        if scores[i] >= scores[best_idx]:
            best_idx = i

    return GairResult(
        optimal_weight=request.weight_grid[best_idx],
        weights=request.weight_grid,
        scores=tuple(scores),
        object_scores=tuple(object_scores),
        context_scores=tuple(context_scores),
        preview_images=tuple(previews),
        context_images=tuple(ctx_imgs),
    )
