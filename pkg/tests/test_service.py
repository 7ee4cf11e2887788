from __future__ import annotations

import base64
import json
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from tokenstudio.images import png_bytes, save_png
from tokenstudio.serialization import canonical_json
from tokenstudio.service.api import create_app
from tokenstudio.service.config import StudioConfig, load_config
from tokenstudio.service.operations import Studio
from tokenstudio.toydata import concept_images, distractor_images

FAST_TRAIN = {"iterations": 4, "num_tokens": 2, "negatives_k": 2, "learning_rate": 0.1}


def studio_config(tmp_path) -> StudioConfig:
    config = StudioConfig(root=tmp_path / "store")
    config.training_defaults = {}
    return config


@pytest.fixture()
def client(tmp_path):
    app = create_app(studio_config(tmp_path))
    with TestClient(app) as test_client:
        yield test_client


def b64_images(images) -> list[dict]:
    return [
        {"name": f"img{i}", "png_base64": base64.b64encode(png_bytes(img)).decode()}
        for i, img in enumerate(images)
    ]


def make_concept(client, n=3, parent="square", attributes=None, seed=20):
    body = {"parent_concept": parent, "images": b64_images(concept_images(n, seed=seed))}
    if attributes is not None:
        body["attributes"] = attributes
    response = client.post("/concepts", json=body)
    assert response.status_code == 201, response.text
    return response.json()


def wait_for_job(client, job_id, timeout=60.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        job = client.get(f"/jobs/{job_id}").json()
        if job["state"] in ("done", "failed"):
            return job
        time.sleep(0.05)
    raise AssertionError(f"job {job_id} did not finish")


def train_concept(client, concept_id, overrides=None):
    body = dict(FAST_TRAIN)
    body.update(overrides or {})
    response = client.post(f"/concepts/{concept_id}/train", json=body)
    assert response.status_code == 202, response.text
    job = wait_for_job(client, response.json()["id"])
    assert job["state"] == "done", job.get("error")
    return job


# --- config -------------------------------------------------------------------

def test_load_config_file_and_env(tmp_path):
    path = tmp_path / "studio.json"
    path.write_text(json.dumps({
        "root": str(tmp_path / "from_file"),
        "backbone": {"diffusion": {"kind": "toy", "T_sample": 5}},
        "training": {"iterations": 7},
    }))
    config = load_config(path, env={})
    assert config.root == tmp_path / "from_file"
    assert config.diffusion_spec["T_sample"] == 5
    assert config.training_defaults == {"iterations": 7}

    env = {"STUDIO_ROOT": str(tmp_path / "from_env"),
           "STUDIO_BACKBONE": json.dumps({"encoder": {"kind": "toy", "seed": 3}})}
    config = load_config(path, env=env)
    assert config.root == tmp_path / "from_env"
    assert config.encoder_spec == {"kind": "toy", "seed": 3}


def test_load_config_toml(tmp_path):
    path = tmp_path / "studio.toml"
    path.write_text('root = "toml_root"\n[training]\niterations = 3\n')
    config = load_config(path, env={})
    assert str(config.root) == "toml_root"
    assert config.training_defaults["iterations"] == 3


# --- concepts ------------------------------------------------------------------

def test_ingest_concept_selects_attributes(client):
    concept = make_concept(client, n=3, parent="teapot")
    assert len(concept["image_paths"]) == 3
    # candidate list is smaller than the default top_n=100, so all are kept,
    # ranked by correlation
    assert len(concept["attributes"]) > 10
    fetched = client.get(f"/concepts/{concept['id']}")
    assert fetched.status_code == 200
    assert fetched.json() == concept


def test_duplicate_ingest_new_id_same_fingerprint(client):
    a = make_concept(client, seed=21)
    b = make_concept(client, seed=21)
    assert a["id"] != b["id"]
    assert a["fingerprint"] == b["fingerprint"]


def test_ingest_rejects_zero_images(client):
    response = client.post("/concepts", json={"parent_concept": "square", "images": []})
    assert response.status_code == 400


def test_unknown_concept_404(client):
    assert client.get("/concepts/c9999").status_code == 404
    assert client.post("/concepts/c9999/train", json={}).status_code == 404


# --- jobs ------------------------------------------------------------------------

def test_get_job_idempotent(client):
    concept = make_concept(client)
    job = train_concept(client, concept["id"])
    first = client.get(f"/jobs/{job['id']}").json()
    second = client.get(f"/jobs/{job['id']}").json()
    assert first == second


def test_unknown_job_404(client):
    assert client.get("/jobs/j9999").status_code == 404


def test_completed_train_job_token_round_trips(client, tmp_path):
    concept = make_concept(client)
    job = train_concept(client, concept["id"])
    assert job["result_ref"].startswith("tokens/")

    updated = client.get(f"/concepts/{concept['id']}").json()
    assert updated["token_path"] == job["result_ref"]

    # round trip the artifact byte-exactly through the library loader
    from tokenstudio.training import load_token, save_token

    store_root = tmp_path / "store"
    token_path = store_root / job["result_ref"]
    blob = token_path.read_bytes()
    token, subspace, doc = load_token(token_path)
    save_token(token, token_path, subspace, doc["metrics"])
    assert token_path.read_bytes() == blob


def test_concurrent_train_conflict(tmp_path):
    app = create_app(studio_config(tmp_path))
    with TestClient(app) as client:
        concept = make_concept(client)
        slow = dict(FAST_TRAIN, iterations=300)
        first = client.post(f"/concepts/{concept['id']}/train", json=slow)
        assert first.status_code == 202
        second = client.post(f"/concepts/{concept['id']}/train", json=slow)
        assert second.status_code == 409
        wait_for_job(client, first.json()["id"])


def test_retrain_same_config_reproduces_artifact(client, tmp_path):
    concept = make_concept(client)
    job1 = train_concept(client, concept["id"], {"seed": 5})
    job2 = train_concept(client, concept["id"], {"seed": 5})
    assert job1["result_ref"] == job2["result_ref"]  # content-addressed artifact
    store_root = tmp_path / "store"
    assert (store_root / job1["result_ref"]).read_bytes() == (
        store_root / job2["result_ref"]
    ).read_bytes()


# --- queries -----------------------------------------------------------------------

def test_compose_w1_fingerprint_matches_token_only_query(client):
    concept = make_concept(client, attributes=["red", "dark"])
    train_concept(client, concept["id"])
    one = client.post("/queries/compose", json={
        "concept_id": concept["id"], "weight": 1.0}).json()
    again = client.post("/queries/compose", json={
        "concept_id": concept["id"], "weight": 1.0, "attributes": []}).json()
    assert one["feature_fingerprint"] == again["feature_fingerprint"]
    assert one["feature_fingerprint"] == one["components"]["token"]
    half = client.post("/queries/compose", json={
        "concept_id": concept["id"], "weight": 0.5}).json()
    assert half["feature_fingerprint"] != one["feature_fingerprint"]


def test_compose_untrained_concept_409(client):
    concept = make_concept(client)
    response = client.post("/queries/compose", json={"concept_id": concept["id"], "weight": 1.0})
    assert response.status_code == 409


def test_schema_validation_rejects_malformed_bodies(client):
    bad = [
        ("/queries/compose", {"concept_id": "c0001"}),  # missing weight
        ("/queries/compose", {"concept_id": "c0001", "weight": 2.0}),  # out of range
        ("/queries/compose", {"concept_id": "c0001", "weight": "high"}),  # wrong type
        ("/concepts", {"images": []}),  # missing parent, empty images
        ("/queries/gair", {"previews_per_weight": 0}),  # missing id, bad count
    ]
    for path, body in bad:
        response = client.post(path, json=body)
        assert response.status_code == 400, (path, body, response.status_code)
        assert "detail" in response.json()


def test_schema_endpoint_publishes_models(client):
    schemas = client.get("/schema").json()
    assert {"concept", "train", "compose", "preview", "retrieve", "gair"} <= set(schemas)
    assert schemas["compose"]["properties"]["weight"]["maximum"] == 1.0


def test_preview_returns_served_pngs(client):
    concept = make_concept(client, attributes=["red"])
    train_concept(client, concept["id"])
    response = client.post("/queries/preview", json={
        "concept_id": concept["id"], "weight": 1.0, "n": 2, "seed": 3})
    assert response.status_code == 200
    body = response.json()
    assert len(body["images"]) == 2
    png = client.get(body["images"][0]["url"])
    assert png.status_code == 200
    assert png.headers["content-type"] == "image/png"
    assert png.content[:8] == b"\x89PNG\r\n\x1a\n"


def test_preview_deterministic_across_requests(client):
    concept = make_concept(client, attributes=["red"])
    train_concept(client, concept["id"])
    body = {"concept_id": concept["id"], "weight": 0.5, "n": 1, "seed": 9,
            "attributes": ["red"]}
    a = client.post("/queries/preview", json=body).json()
    b = client.post("/queries/preview", json=body).json()
    assert a["images"] == b["images"]  # content-addressed, so same bytes


def test_retrieve_matches_library_ranking(client, tmp_path):
    concept = make_concept(client, attributes=["blue"])
    train_concept(client, concept["id"])

    entries = []
    for i, img in enumerate(concept_images(2, seed=31) + distractor_images(1, seed=32)):
        entries.append({"image_id": f"img{i}", "png_base64": base64.b64encode(png_bytes(img)).decode()})
    created = client.post("/indexes", json={"name": "toy3", "entries": entries})
    assert created.status_code == 201
    assert created.json()["count"] == 3

    info = client.get("/indexes/toy3").json()
    assert sorted(info["ids"]) == ["img0", "img1", "img2"]

    response = client.post("/queries/retrieve", json={
        "concept_id": concept["id"], "weight": 1.0, "index_id": "toy3"})
    assert response.status_code == 200
    results = response.json()["results"]
    assert [r["rank"] for r in results] == [1, 2, 3]

    # pass-through check against the library on the same artifacts
    studio = Studio(studio_config(tmp_path))
    _, ranked = studio.retrieve("toy3", concept["id"], 1.0)
    assert [(r["image_id"], r["score"]) for r in results] == [
        (image_id, pytest.approx(score_value)) for image_id, score_value in ranked
    ]


def test_retrieve_unknown_index_404(client):
    concept = make_concept(client, attributes=["red"])
    train_concept(client, concept["id"])
    response = client.post("/queries/retrieve", json={
        "concept_id": concept["id"], "weight": 1.0, "index_id": "missing"})
    assert response.status_code == 404


def test_gair_singleton_grid_job(client):
    concept = make_concept(client, attributes=["red", "dark"])
    train_concept(client, concept["id"])
    response = client.post("/queries/gair", json={
        "concept_id": concept["id"], "grid": [0.5], "previews_per_weight": 1, "seed": 2})
    assert response.status_code == 202
    job = wait_for_job(client, response.json()["id"])
    assert job["state"] == "done", job.get("error")
    assert job["result"]["optimal_weight"] == 0.5
    assert job["result"]["weights"] == [0.5]
    assert len(job["result"]["scores"]) == 1
    assert job["result_ref"].endswith(".csv")


def test_gair_requires_trained_concept(client):
    concept = make_concept(client)
    response = client.post("/queries/gair", json={"concept_id": concept["id"], "grid": [0.5]})
    assert response.status_code == 409


def test_subspace_rank_override_changes_artifact(client, tmp_path):
    concept = make_concept(client, attributes=["red", "blue", "dark", "old", "new"])
    full = train_concept(client, concept["id"], {"seed": 3})
    low = train_concept(client, concept["id"], {"seed": 3, "subspace_rank": 1})
    assert full["result_ref"] != low["result_ref"]

    from tokenstudio.training import load_token

    _, subspace, _ = load_token(tmp_path / "store" / low["result_ref"])
    assert subspace.rank == 1


def test_cross_concept_jobs_interleave_without_affecting_artifacts(tmp_path):
    # two concepts trained concurrently must produce the same artifacts as
    # training each alone
    app = create_app(studio_config(tmp_path / "concurrent"))
    with TestClient(app) as client:
        a = make_concept(client, seed=60)
        b = make_concept(client, seed=61)
        ja = client.post(f"/concepts/{a['id']}/train", json=dict(FAST_TRAIN, iterations=60))
        jb = client.post(f"/concepts/{b['id']}/train", json=dict(FAST_TRAIN, iterations=60))
        assert ja.status_code == jb.status_code == 202
        ra = wait_for_job(client, ja.json()["id"])
        rb = wait_for_job(client, jb.json()["id"])
        assert ra["state"] == rb["state"] == "done"
        concurrent_refs = (ra["result_ref"], rb["result_ref"])

    app = create_app(studio_config(tmp_path / "solo"))
    with TestClient(app) as client:
        a = make_concept(client, seed=60)
        b = make_concept(client, seed=61)
        ra = train_concept(client, a["id"], {"iterations": 60})
        rb = train_concept(client, b["id"], {"iterations": 60})
        assert (ra["result_ref"], rb["result_ref"]) == concurrent_refs
        bytes_a = (tmp_path / "solo" / "store" / ra["result_ref"]).read_bytes()
        bytes_b = (tmp_path / "concurrent" / "store" / ra["result_ref"]).read_bytes()
        assert bytes_a == bytes_b


# --- store determinism ----------------------------------------------------------------

def test_concept_doc_is_canonical_json(client, tmp_path):
    concept = make_concept(client)
    raw = (tmp_path / "store" / "concepts" / f"{concept['id']}.json").read_text()
    assert raw == canonical_json(json.loads(raw))
