"""Joint training of concept-token rows under a subspace constraint.

The total objective mixes the diffusion denoising loss (generation) with a
balanced two-class cross-entropy against generated parent-concept negatives
(recognition).  Only the raw token rows are optimized; the projection is
applied inside the forward pass so the effective rows stay in the attribute
subspace, and every encoder/diffusion weight stays frozen.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .embedding import (
    AttributeSubspace,
    TokenEmbedding,
    attribute_embedding,
    subspace_fingerprint,
    subspace_from_doc,
    subspace_to_doc,
)
from .encoders import PromptTemplate, assemble_rows, render_plain
from .errors import (
    EmptyTrainingSet,
    NonFiniteLoss,
    OneClassMissing,
)
from .images import load_png, save_png
from .serialization import (
    canonical_json,
    decode_f32,
    derive_seed,
    encode_f32,
    fingerprint,
)

TOKEN_FORMAT_VERSION = 1
DTYPE = torch.float64


@dataclass(frozen=True)
class TrainingConfig:
    """Loss weights, optimizer settings, and sizes for one training run.

    Defaults mirror the full-scale recipe; desk-scale runs override
    `iterations` (and usually `lambda_ce`) explicitly.
    """

    lambda_sd: float = 1.0
    lambda_ce: float = 1e-5
    learning_rate: float = 5e-4
    iterations: int = 20000
    batch_size: int = 4
    num_tokens: int = 10
    subspace_rank: int | None = None
    negatives_k: int = 32
    seed: int = 0
    prompt_order: str = "star_first"
    temperature: float = 100.0
    optimizer: str = "sgd"
    momentum: float = 0.0

    def __post_init__(self) -> None:
        if self.lambda_sd < 0 or self.lambda_ce < 0:
            raise ValueError("loss weights must be non-negative")
        if self.lambda_sd == 0 and self.lambda_ce == 0:
            raise ValueError("at least one loss weight must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.batch_size < 1 or self.num_tokens < 1:
            raise ValueError("batch_size and num_tokens must be >= 1")
        if self.negatives_k < 0:
            raise ValueError("negatives_k must be >= 0")
        if self.learning_rate < 0:
            raise ValueError("learning rate must be >= 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.subspace_rank is not None and self.subspace_rank < 0:
            raise ValueError("subspace_rank must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    def fingerprint(self) -> str:
        return fingerprint(self.to_dict())


@dataclass(frozen=True, eq=False)
class TrainingBatch:
    """Concept images (label 1) merged with generated negatives (label 0)."""

    positives: tuple
    negatives: tuple

    @property
    def merged(self) -> tuple:
        return (*self.positives, *self.negatives)

    @property
    def labels(self) -> np.ndarray:
        return np.array([1] * len(self.positives) + [0] * len(self.negatives))


@dataclass(frozen=True)
class TrainingContext:
    """Frozen handles a training run computes its losses against."""

    encoders: object
    backbone: object
    parent: str
    subspace: AttributeSubspace | None = None


@dataclass(frozen=True, eq=False)
class TrainResult:
    token: TokenEmbedding
    metrics: dict = field(default_factory=dict)


def project_rows_t(rows: torch.Tensor, subspace: AttributeSubspace | None) -> torch.Tensor:
    """Torch version of the affine subspace projection (keeps gradients)."""
    if subspace is None:
        return rows
    mean = torch.from_numpy(subspace.mean)
    basis = torch.from_numpy(subspace.basis)
    centered = rows - mean
    return (centered @ basis.T) @ basis + mean


def sample_negatives(
    parent: str,
    k: int,
    backbone,
    encoders,
    seed: int = 0,
    cache_dir: str | Path | None = None,
) -> list[np.ndarray]:
    """Generate k parent-concept images from the prompt "image of a {parent}".

    Results are cached on disk keyed by (parent, backbone, encoder, seed, k) so
    a run always reuses the same negative set.
    """
    if k == 0:
        return []
    prompt = f"image of a {parent}" if parent else "image"
    feature = encoders.encode_text(prompt)

    cache_path = None
    if cache_dir is not None:
        key = fingerprint(
            {
                "parent": parent,
                "k": k,
                "seed": seed,
                "backbone": backbone.fingerprint(),
                "encoder": encoders.fingerprint(),
            }
        )[:16]
        cache_path = Path(cache_dir) / f"negatives-{key}"
        if cache_path.is_dir():
            files = sorted(cache_path.glob("*.png"))
            if len(files) == k:
                return [load_png(f) for f in files]

    images = backbone.generate_batch(feature, k, seed=seed)
    if cache_path is not None:
        cache_path.mkdir(parents=True, exist_ok=True)
        for i, img in enumerate(images):
            save_png(img, cache_path / f"{i:04d}.png")
    return images


def _unit_t(v: torch.Tensor) -> torch.Tensor:
    return v / torch.linalg.vector_norm(v)


def _token_rows_tensor(token) -> tuple[torch.Tensor, bool]:
    if isinstance(token, torch.Tensor):
        return token, True
    if isinstance(token, TokenEmbedding):
        return torch.from_numpy(token.vectors), False
    return torch.as_tensor(np.asarray(token, dtype=np.float64)), False


def _prompt_features(token_rows: torch.Tensor, parent: str, encoders, template_text: str):
    """Unit features of the token prompt and of the same prompt without the token."""
    star_rows = assemble_rows(encoders, template_text, token_rows, parent)
    tau_star = _unit_t(encoders.encode_rows_t(star_rows))
    parent_prompt = render_plain(template_text, parent)
    parent_ids = encoders.tokenize(parent_prompt)
    tau_parent = _unit_t(encoders.encode_rows_t(encoders.embed_t(parent_ids)))
    return tau_star, tau_parent


def classification_loss(
    token,
    batch: TrainingBatch,
    parent: str,
    encoders,
    template_text: str | None = None,
    temperature: float = 100.0,
):
    """Balanced two-class cross-entropy: token prompt vs parent prompt.

    Each image gets two logits (temperature-scaled cosine against the token
    prompt feature and the parent prompt feature); positives are labeled with
    the token class, negatives with the parent class.  Per-class means are
    averaged so class imbalance does not tilt the loss.
    """
    if not batch.positives or not batch.negatives:
        raise OneClassMissing("need at least one positive and one negative image")
    template_text = template_text or PromptTemplate.default().context_text

    rows, keep_tensor = _token_rows_tensor(token)
    tau_star, tau_parent = _prompt_features(rows, parent, encoders, template_text)

    feats = torch.stack(
        [_unit_t(encoders.encode_image_t(img)) for img in batch.merged]
    )
    logits = temperature * torch.stack([feats @ tau_star, feats @ tau_parent], dim=1)
    log_probs = torch.log_softmax(logits, dim=1)

    n_pos = len(batch.positives)
    pos_term = -log_probs[:n_pos, 0].mean()
    neg_term = -log_probs[n_pos:, 1].mean()
    loss = 0.5 * (pos_term + neg_term)
    return loss if keep_tensor else float(loss)


def total_loss(
    token,
    batch: TrainingBatch,
    ctx: TrainingContext,
    config: TrainingConfig,
    template_text: str | None = None,
    rng_seed: int = 0,
):
    """lambda_sd * diffusion loss + lambda_ce * classification loss.

    Both terms see the projected token rows; the diffusion term conditions on
    the encoded token prompt and is evaluated on the positive images only.
    """
    template_text = template_text or PromptTemplate.default(config.prompt_order).context_text
    rows, keep_tensor = _token_rows_tensor(token)
    rows_eff = project_rows_t(rows, ctx.subspace)

    loss = torch.zeros((), dtype=DTYPE)
    if config.lambda_sd > 0:
        star_rows = assemble_rows(ctx.encoders, template_text, rows_eff, ctx.parent)
        condition = ctx.encoders.encode_rows_t(star_rows)
        loss = loss + config.lambda_sd * ctx.backbone.diffusion_loss(
            batch.positives, condition, rng_seed
        )
    if config.lambda_ce > 0:
        loss = loss + config.lambda_ce * classification_loss(
            rows_eff, batch, ctx.parent, ctx.encoders, template_text, config.temperature
        )
    return loss if keep_tensor else float(loss)


def initial_rows(parent: str, config: TrainingConfig, encoders) -> np.ndarray:
    """Token rows start at the parent-word embedding plus small seeded jitter."""
    parent_vec = attribute_embedding(parent, encoders)
    gen = torch.Generator().manual_seed(derive_seed(config.seed, "init"))
    jitter = torch.randn((config.num_tokens, parent_vec.shape[0]), generator=gen, dtype=DTYPE)
    return np.tile(parent_vec, (config.num_tokens, 1)) + 1e-3 * jitter.numpy()


def train_token(
    images: Sequence[np.ndarray],
    parent: str,
    subspace: AttributeSubspace | None,
    config: TrainingConfig,
    encoders,
    backbone,
    concept_id: str = "concept",
    negatives: Sequence[np.ndarray] | None = None,
    cache_dir: str | Path | None = None,
) -> TrainResult:
    """Optimize token rows with SGD on the joint objective.

    Each iteration samples a paraphrase template and a positive mini-batch,
    projects the raw rows in the forward pass, and steps the raw rows only.
    The returned token stores the post-projection rows.  Deterministic for
    identical (images, parent, subspace, config).
    """
    images = list(images)
    if not images:
        raise EmptyTrainingSet("need at least one concept image")

    ctx = TrainingContext(encoders=encoders, backbone=backbone, parent=parent, subspace=subspace)
    if config.lambda_ce > 0:
        if negatives is None:
            negatives = sample_negatives(
                parent,
                config.negatives_k,
                backbone,
                encoders,
                seed=derive_seed(config.seed, "negatives"),
                cache_dir=cache_dir,
            )
        negatives = list(negatives)
        if not negatives:
            raise OneClassMissing("classification loss enabled but no negatives available")
    else:
        negatives = []

    templates = PromptTemplate.default(config.prompt_order).all_templates
    rng = np.random.default_rng(derive_seed(config.seed, "loop"))

    raw = torch.tensor(initial_rows(parent, config, encoders), requires_grad=True)
    if config.optimizer == "adam":
        opt: torch.optim.Optimizer = torch.optim.Adam([raw], lr=config.learning_rate)
    else:
        opt = torch.optim.SGD([raw], lr=config.learning_rate, momentum=config.momentum)

    last_loss = float("nan")
    for step in range(config.iterations):
        template_text = templates[int(rng.integers(len(templates)))]
        idx = rng.integers(0, len(images), size=config.batch_size)
        batch = TrainingBatch(
            positives=tuple(images[i] for i in idx),
            negatives=tuple(negatives),
        )
        loss = total_loss(
            raw, batch, ctx, config, template_text,
            rng_seed=derive_seed(config.seed, "iter", step),
        )
        if not torch.isfinite(loss):
            raise NonFiniteLoss(
                f"loss became {float(loss.detach())!r} at iteration {step} "
                f"(lambda_sd={config.lambda_sd}, lambda_ce={config.lambda_ce}, "
                f"lr={config.learning_rate})"
            )
        opt.zero_grad()
        loss.backward()
        opt.step()
        last_loss = float(loss.detach())

    with torch.no_grad():
        final_rows = project_rows_t(raw, subspace).numpy().copy()
        eval_batch = TrainingBatch(positives=tuple(images), negatives=tuple(negatives))
        metrics: dict = {"final_losses": {"total": last_loss}}
        if config.lambda_sd > 0:
            star = assemble_rows(encoders, templates[0], torch.from_numpy(final_rows), parent)
            metrics["final_losses"]["diffusion"] = float(
                backbone.diffusion_loss(
                    images, encoders.encode_rows_t(star), derive_seed(config.seed, "final")
                )
            )
        if config.lambda_ce > 0:
            metrics["final_losses"]["classification"] = classification_loss(
                TokenEmbedding(concept_id, parent, final_rows),
                eval_batch, parent, encoders, templates[0], config.temperature,
            )

    token = TokenEmbedding(
        concept_id=concept_id,
        parent_concept=parent,
        vectors=final_rows,
        subspace_id=subspace_fingerprint(subspace) if subspace is not None else None,
        is_projected=subspace is not None,
        training_fingerprint=config.fingerprint(),
    )
    return TrainResult(token=token, metrics=metrics)


def token_vs_parent_accuracy(
    token: TokenEmbedding,
    parent: str,
    positives: Sequence[np.ndarray],
    negatives: Sequence[np.ndarray],
    encoders,
    template_text: str | None = None,
) -> float:
    """Balanced accuracy of the token-prompt vs parent-prompt classifier."""
    template_text = template_text or PromptTemplate.default().context_text
    rows = torch.from_numpy(token.vectors)
    tau_star, tau_parent = _prompt_features(rows, parent, encoders, template_text)

    def hit_rate(images, want_star: bool) -> float:
        hits = 0
        for img in images:
            feat = _unit_t(encoders.encode_image_t(img))
            is_star = float(feat @ tau_star) > float(feat @ tau_parent)
            hits += int(is_star == want_star)
        return hits / len(images)

    return 0.5 * (hit_rate(positives, True) + hit_rate(negatives, False))


# --- token artifact persistence ---------------------------------------------

def token_to_doc(
    token: TokenEmbedding,
    subspace: AttributeSubspace | None = None,
    metrics: dict | None = None,
) -> dict:
    return {
        "version": TOKEN_FORMAT_VERSION,
        "concept_id": token.concept_id,
        "parent": token.parent_concept,
        "dim": token.dim,
        "num_tokens": token.num_tokens,
        "vectors": encode_f32(token.vectors),
        "is_projected": token.is_projected,
        "subspace": subspace_to_doc(subspace) if subspace is not None else None,
        "config_fingerprint": token.training_fingerprint,
        "metrics": metrics or {},
    }


def token_from_doc(doc: dict) -> tuple[TokenEmbedding, AttributeSubspace | None]:
    if doc.get("version") != TOKEN_FORMAT_VERSION:
        raise ValueError(f"unsupported token format version {doc.get('version')!r}")
    subspace = subspace_from_doc(doc["subspace"]) if doc.get("subspace") else None
    token = TokenEmbedding(
        concept_id=doc["concept_id"],
        parent_concept=doc["parent"],
        vectors=decode_f32(doc["vectors"], (doc["num_tokens"], doc["dim"])),
        subspace_id=subspace_fingerprint(subspace) if subspace is not None else None,
        is_projected=bool(doc.get("is_projected", False)),
        training_fingerprint=doc.get("config_fingerprint", ""),
    )
    return token, subspace


def save_token(
    token: TokenEmbedding,
    path: str | Path,
    subspace: AttributeSubspace | None = None,
    metrics: dict | None = None,
) -> None:
    Path(path).write_text(
        canonical_json(token_to_doc(token, subspace, metrics)), encoding="utf-8"
    )


def load_token(path: str | Path) -> tuple[TokenEmbedding, AttributeSubspace | None, dict]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    token, subspace = token_from_doc(doc)
    return token, subspace, doc
