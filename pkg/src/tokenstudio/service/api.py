"""HTTP API over the studio operations.

JSON in/out; malformed bodies get 400 with the validation detail; unknown ids
404; a busy concept 409.  Request/response schemas are published under
/schema.  Long-running work (train, gair) runs as jobs.
"""
from __future__ import annotations

import base64

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import FileResponse, JSONResponse
from pydantic import BaseModel, Field

from ..errors import (
    BadImage,
    ConceptBusy,
    ConceptNotTrained,
    StudioError,
    UnknownConcept,
    UnknownIndex,
    UnknownJob,
)
from ..images import from_png_bytes
from .config import StudioConfig
from .jobs import JobQueue
from .operations import Studio


class ImageIn(BaseModel):
    name: str = ""
    png_base64: str


class ConceptIn(BaseModel):
    parent_concept: str = Field(min_length=1)
    images: list[ImageIn] = Field(min_length=1)
    attributes: list[str] | None = None


class TrainIn(BaseModel):
    lambda_sd: float | None = None
    lambda_ce: float | None = None
    learning_rate: float | None = None
    iterations: int | None = None
    batch_size: int | None = None
    num_tokens: int | None = None
    subspace_rank: int | None = None
    negatives_k: int | None = None
    seed: int | None = None
    temperature: float | None = None
    optimizer: str | None = None


class ComposeIn(BaseModel):
    concept_id: str
    weight: float = Field(ge=0.0, le=1.0)
    template: str | None = None
    attributes: list[str] | None = None


class PreviewIn(ComposeIn):
    n: int = Field(default=1, ge=1, le=64)
    seed: int = 0


class RetrieveIn(ComposeIn):
    index_id: str
    top_k: int | None = Field(default=None, ge=1)


class GairIn(BaseModel):
    concept_id: str
    template: str | None = None
    attributes: list[str] | None = None
    grid: list[float] | None = None
    previews_per_weight: int = Field(default=4, ge=1, le=32)
    seed: int = 0


class IndexIn(BaseModel):
    name: str | None = None
    manifest_path: str | None = None
    entries: list[dict] | None = None


REQUEST_MODELS = {
    "concept": ConceptIn,
    "train": TrainIn,
    "compose": ComposeIn,
    "preview": PreviewIn,
    "retrieve": RetrieveIn,
    "gair": GairIn,
    "index": IndexIn,
}

_ERROR_STATUS = {
    UnknownConcept: 404,
    UnknownJob: 404,
    UnknownIndex: 404,
    ConceptBusy: 409,
    ConceptNotTrained: 409,
}


def _job_body(job) -> dict:
    return job.to_doc()


def create_app(config: StudioConfig) -> FastAPI:
    studio = Studio(config)
    queue = JobQueue(studio.store)
    app = FastAPI(title="tokenstudio", version="0.1.0")
    app.state.studio = studio
    app.state.queue = queue

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    @app.exception_handler(StudioError)
    async def on_studio_error(request: Request, exc: StudioError):
        status = _ERROR_STATUS.get(type(exc), 400)
        return JSONResponse(status_code=status, content={"detail": str(exc)})

    @app.get("/health")
    def health():
        return {"status": "ok", "backbone": config.backbone_spec}

    @app.get("/schema")
    def schema():
        return {name: model.model_json_schema() for name, model in REQUEST_MODELS.items()}

    # --- concepts ---

    @app.post("/concepts", status_code=201)
    def create_concept(body: ConceptIn):
        images = [from_png_bytes(base64.b64decode(item.png_base64)) for item in body.images]
        return studio.ingest_concept(images, body.parent_concept, body.attributes)

    @app.get("/concepts/{concept_id}")
    def get_concept(concept_id: str):
        return studio.store.get_concept(concept_id)

    @app.post("/concepts/{concept_id}/train", status_code=202)
    def train_concept(concept_id: str, body: TrainIn):
        studio.store.get_concept(concept_id)  # 404 before queueing

        def work(progress):
            token_ref, metrics = studio.train_concept(
                concept_id, body.model_dump(), progress=progress
            )
            return token_ref, {"metrics": metrics}

        job = queue.submit("train", work, concept_id=concept_id)
        return _job_body(job)

    # --- jobs ---

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        return _job_body(queue.get(job_id))

    # --- queries ---

    @app.post("/queries/compose")
    def compose(body: ComposeIn):
        outcome = studio.compose(body.concept_id, body.weight, body.template, body.attributes)
        return {
            "weight": outcome.query.weight,
            "attributes": list(outcome.query.attributes),
            "template": outcome.query.template.context_text,
            "dim": outcome.query.feature.dim,
            "feature_fingerprint": outcome.feature_fingerprint,
            "components": outcome.component_fingerprints,
        }

    @app.post("/queries/preview")
    def preview(body: PreviewIn):
        outcome, refs = studio.preview(
            body.concept_id, body.weight, body.template, body.attributes,
            n=body.n, seed=body.seed,
        )
        return {
            "weight": outcome.query.weight,
            "feature_fingerprint": outcome.feature_fingerprint,
            "images": [{"path": ref, "url": f"/previews/{ref.split('/')[-1]}"} for ref in refs],
            "seed": body.seed,
        }

    @app.post("/queries/retrieve")
    def retrieve(body: RetrieveIn):
        outcome, ranked = studio.retrieve(
            body.index_id, body.concept_id, body.weight, body.template,
            body.attributes, body.top_k,
        )
        return {
            "index_id": body.index_id,
            "weight": outcome.query.weight,
            "feature_fingerprint": outcome.feature_fingerprint,
            "results": [
                {"image_id": image_id, "score": score, "rank": i + 1}
                for i, (image_id, score) in enumerate(ranked)
            ],
        }

    @app.post("/queries/gair", status_code=202)
    def gair(body: GairIn):
        studio.load_concept_token(body.concept_id)  # 404/409 before queueing

        def work(progress):
            _, payload = studio.gair(
                body.concept_id,
                template=body.template,
                attributes=body.attributes,
                grid=body.grid,
                previews_per_weight=body.previews_per_weight,
                seed=body.seed,
                progress=progress,
            )
            return payload["curve_csv_path"], payload

        job = queue.submit("gair", work, concept_id=body.concept_id)
        return _job_body(job)

    # --- indexes / previews ---

    @app.post("/indexes", status_code=201)
    def create_index(body: IndexIn):
        if body.manifest_path:
            index_id, index = studio.build_index_from_manifest(body.manifest_path, body.name)
        elif body.entries:
            parsed = []
            for entry in body.entries:
                image = from_png_bytes(base64.b64decode(entry["png_base64"]))
                parsed.append((entry["image_id"], image, entry.get("class_label")))
            index_id, index = studio.build_index_from_images(parsed, body.name)
        else:
            raise BadImage("index body needs manifest_path or entries")
        return {"id": index_id, "count": len(index), "dim": index.dim}

    @app.get("/indexes/{index_id}")
    def get_index(index_id: str):
        index = studio.store.load_index(index_id)
        return {
            "id": index_id,
            "count": len(index),
            "dim": index.dim,
            "ids": list(index.ids),
            "labels": list(index.labels),
        }

    @app.get("/previews/{name}")
    def get_preview(name: str):
        return FileResponse(studio.store.preview_path(name), media_type="image/png")

    return app
