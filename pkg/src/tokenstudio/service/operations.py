"""High-level studio operations shared by the HTTP API and the CLI."""
from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from ..diffusion import load_diffusion
from ..embedding import (
    AttributeSubspace,
    attribute_embedding,
    build_subspace,
    select_attributes,
)
from ..encoders import ComposedQuery, PromptTemplate, compose_query, load_encoder
from ..errors import ConceptNotTrained, NoImages
from ..gair import GairRequest, GairResult, default_weight_grid, run_gair
from ..images import load_png
from ..retrieval import RetrievalIndex, build_index, rank_with_scores, read_manifest
from ..serialization import fingerprint_bytes, f32_bytes
from ..training import TrainingConfig, token_from_doc, token_to_doc, train_token
from .config import StudioConfig
from .store import Store


@dataclass
class ComposeOutcome:
    query: ComposedQuery
    feature_fingerprint: str
    component_fingerprints: dict


class Studio:
    """One root directory, one frozen backbone pair, deterministic artifacts."""

    def __init__(self, config: StudioConfig) -> None:
        self.config = config
        self.store = Store(config.root)
        self.encoders = load_encoder(config.encoder_spec)
        self.diffusion = load_diffusion(config.diffusion_spec)

    # --- concepts -------------------------------------------------------------

    def ingest_concept(
        self,
        images: Sequence[np.ndarray],
        parent: str,
        attributes: Sequence[str] | None = None,
    ) -> dict:
        if not images:
            raise NoImages("a concept needs at least one image")
        if not parent:
            raise ValueError("parent concept must be nonempty")
        if attributes is None:
            attributes = select_attributes(
                list(self.config.attribute_candidates),
                list(images),
                self.config.select_top_n,
                self.encoders,
            )
        return self.store.create_concept(images, parent, attributes)

    def concept_subspace(self, concept: dict, rank: int | None = None) -> AttributeSubspace:
        attrs = concept["attributes"]
        vectors = [attribute_embedding(a, self.encoders) for a in attrs]
        return build_subspace(vectors, rank=rank, attributes=attrs,
                              source="correlation-selected")

    # --- training -------------------------------------------------------------

    def training_config(self, overrides: dict | None = None) -> TrainingConfig:
        merged = dict(self.config.training_defaults)
        merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return TrainingConfig(**merged)

    def train_concept(
        self,
        concept_id: str,
        overrides: dict | None = None,
        progress=None,
    ) -> tuple[str, dict]:
        """Train the concept's token and persist the artifact; returns
        (token artifact ref, metrics)."""
        concept = self.store.get_concept(concept_id)
        config = self.training_config(overrides)
        subspace = self.concept_subspace(concept, rank=config.subspace_rank)
        images = self.store.concept_images(concept)

        result = train_token(
            images,
            concept["parent_concept"],
            subspace,
            config,
            self.encoders,
            self.diffusion,
            concept_id=concept_id,
            cache_dir=self.store.root / "previews",
        )
        if progress is not None:
            progress(0.9)
        doc = token_to_doc(result.token, subspace, result.metrics)
        token_ref = self.store.save_token_doc(doc)
        concept["token_path"] = token_ref
        self.store.update_concept(concept)
        return token_ref, result.metrics

    def load_concept_token(self, concept_id: str):
        concept = self.store.get_concept(concept_id)
        if not concept.get("token_path"):
            raise ConceptNotTrained(f"concept {concept_id!r} has no trained token")
        token, subspace = token_from_doc(self.store.read_token_doc(concept["token_path"]))
        return concept, token, subspace

    # --- queries ---------------------------------------------------------------

    def compose(
        self,
        concept_id: str,
        weight: float,
        template: str | None = None,
        attributes: Sequence[str] | None = None,
    ) -> ComposeOutcome:
        concept, token, _ = self.load_concept_token(concept_id)
        attrs = list(attributes) if attributes is not None else concept["attributes"]
        tmpl = template or PromptTemplate.default().context_text
        query = compose_query(
            self.encoders, tmpl, token, concept["parent_concept"], attrs, weight
        )
        components = {
            "token": fingerprint_bytes(f32_bytes(query.token_component)),
            "attributes": {
                name: fingerprint_bytes(f32_bytes(vec))
                for name, vec in zip(query.attributes, query.attribute_components)
            },
        }
        return ComposeOutcome(
            query=query,
            feature_fingerprint=fingerprint_bytes(f32_bytes(query.feature.values)),
            component_fingerprints=components,
        )

    def preview(
        self,
        concept_id: str,
        weight: float,
        template: str | None = None,
        attributes: Sequence[str] | None = None,
        n: int = 1,
        seed: int = 0,
    ) -> tuple[ComposeOutcome, list[str]]:
        outcome = self.compose(concept_id, weight, template, attributes)
        images = self.diffusion.generate_batch(outcome.query.feature.values, n, seed=seed)
        return outcome, [self.store.save_preview(img) for img in images]

    def retrieve(
        self,
        index_id: str,
        concept_id: str,
        weight: float,
        template: str | None = None,
        attributes: Sequence[str] | None = None,
        top_k: int | None = None,
    ) -> tuple[ComposeOutcome, list[tuple[str, float]]]:
        index = self.store.load_index(index_id)
        outcome = self.compose(concept_id, weight, template, attributes)
        ranked = rank_with_scores(outcome.query.feature, index)
        if top_k is not None:
            ranked = ranked[:top_k]
        return outcome, ranked

    def gair(
        self,
        concept_id: str,
        template: str | None = None,
        attributes: Sequence[str] | None = None,
        grid: Sequence[float] | None = None,
        previews_per_weight: int = 4,
        seed: int = 0,
        progress=None,
    ) -> tuple[GairResult, dict]:
        """Run the weight search; persists previews and the score curve."""
        concept, token, _ = self.load_concept_token(concept_id)
        attrs = tuple(attributes) if attributes is not None else tuple(concept["attributes"])
        request = GairRequest(
            token=token,
            caption=template or PromptTemplate.default().context_text,
            parent=concept["parent_concept"],
            attributes=attrs,
            weight_grid=tuple(grid) if grid is not None else default_weight_grid(),
            reference_images=tuple(self.store.concept_images(concept)),
            previews_per_weight=previews_per_weight,
            seed=seed,
        )
        result = run_gair(request, self.encoders, self.diffusion)
        if progress is not None:
            progress(0.9)

        preview_refs = [
            [self.store.save_preview(img) for img in images]
            for images in result.preview_images
        ]
        context_refs = [self.store.save_preview(img) for img in result.context_images]
        curve_ref = self.store.write_text(
            f"previews/gair-{concept_id}-{seed}.csv", result.curve_csv()
        )
        payload = {
            "optimal_weight": result.optimal_weight,
            "weights": list(result.weights),
            "scores": list(result.scores),
            "object_scores": list(result.object_scores),
            "context_scores": list(result.context_scores),
            "preview_paths": preview_refs,
            "context_image_paths": context_refs,
            "curve_csv_path": curve_ref,
        }
        return result, payload

    # --- indexes ----------------------------------------------------------------

    def build_index_from_manifest(
        self, manifest_path: str | Path, name: str | None = None
    ) -> tuple[str, RetrievalIndex]:
        rows = read_manifest(manifest_path)
        base = Path(manifest_path).parent
        entries = []
        for row in rows:
            image_path = Path(row["image_path"])
            if not image_path.is_absolute():
                image_path = base / image_path
            entries.append((row["image_path"], load_png(image_path), row["class_id"]))
        index = build_index(entries, self.encoders)
        return self.store.save_index(index, name=name), index

    def build_index_from_images(
        self,
        entries: Sequence[tuple[str, np.ndarray, str | None]],
        name: str | None = None,
    ) -> tuple[str, RetrievalIndex]:
        index = build_index(entries, self.encoders)
        return self.store.save_index(index, name=name), index
