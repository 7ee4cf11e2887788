"""Acceptance criteria, one test per criterion at its stated tolerance.

Run with `pytest tests/test_acceptance.py -v -s` to see one line per criterion.
"""
from __future__ import annotations

import base64
import time
from contextlib import contextmanager

import numpy as np
import pytest
import torch

from tokenstudio import (
    TrainingBatch,
    TrainingConfig,
    TrainingContext,
    build_index,
    build_subspace,
    compose_query,
    mrr,
    norm_report,
    project,
    rank_with_scores,
    run_gair,
    total_loss,
    train_token,
)
from tokenstudio.embedding import load_subspace, save_subspace
from tokenstudio.images import save_png
from tokenstudio.retrieval import auc_roc, load_index, save_index
from tokenstudio.toydata import concept_images, distractor_images
from tokenstudio.training import (
    initial_rows,
    load_token,
    save_token,
    token_vs_parent_accuracy,
)

import toyrun
from test_gair import brute_force_optimum, landscape_request
from test_retrieval import FeatureEncoders, brute_force_auc


@contextmanager
def criterion(name: str, limit_seconds: float):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"[FAIL] {name} ({time.perf_counter() - start:.1f}s)")
        raise
    elapsed = time.perf_counter() - start
    assert elapsed < limit_seconds, f"{name} took {elapsed:.1f}s (limit {limit_seconds}s)"
    print(f"[PASS] {name} ({elapsed:.1f}s)")


def test_projection_suite():
    with criterion("projection suite", 10.0):
        rng = np.random.default_rng(2024)
        for _ in range(100):
            d = int(rng.integers(2, 33))
            n = int(rng.integers(2, 12))
            r = int(rng.integers(0, min(n - 1, d, 8) + 1))
            points = rng.standard_normal((n, d))
            sub = build_subspace(list(points), rank=r)

            if sub.rank > 0:
                gram = sub.basis @ sub.basis.T
                assert np.max(np.abs(gram - np.eye(sub.rank))) <= 1e-6

            v = rng.standard_normal(d)
            once = project(v, sub)
            assert np.linalg.norm(project(once, sub) - once) <= 1e-6
            assert np.linalg.norm(project(sub.mean, sub) - sub.mean) <= 1e-6

            if sub.rank > 0:
                # affine least-squares oracle over the top-r principal frame
                frame = sub.basis.T
                coef, *_ = np.linalg.lstsq(frame, v - sub.mean, rcond=None)
                expected = sub.mean + frame @ coef
                assert np.linalg.norm(once - expected) <= 1e-6
            else:
                assert np.allclose(once, sub.mean, atol=1e-6)


def test_query_composition_suite():
    with criterion("query composition suite", 5.0):
        encoders, _, subspace = toyrun.shared_handles()
        from tokenstudio import TokenEmbedding

        config = toyrun.recipe_config(1e-2, seed=0)
        rows = project(initial_rows(toyrun.PARENT, config, encoders), subspace)
        token = TokenEmbedding("acceptance", toyrun.PARENT, rows, is_projected=True)
        template = "image of a {*} {c}"
        attrs = ["red", "dark", "plain"]

        from tokenstudio.encoders import assemble, encode_text

        direct = encode_text(encoders, assemble(encoders, template, token, toyrun.PARENT)).unit()
        q1 = compose_query(encoders, template, token, toyrun.PARENT, attrs, 1.0)
        assert np.array_equal(q1.feature.values, direct.values)  # exact

        q0 = compose_query(encoders, template, token, toyrun.PARENT, ["red"], 0.0)
        attr_direct = encode_text(encoders, "image of a red square").unit()
        assert np.array_equal(q0.feature.values, attr_direct.values)  # exact

        base = compose_query(encoders, template, token, toyrun.PARENT, attrs, 0.0)
        f0 = base.feature.values
        f1 = base.with_weight(1.0).feature.values
        for w in np.linspace(0.0, 1.0, 11):
            mixed = base.with_weight(float(w)).feature.values
            assert np.linalg.norm(mixed - (w * f1 + (1 - w) * f0)) <= 1e-6

        for perm in (["dark", "plain", "red"], ["plain", "red", "dark"]):
            swapped = compose_query(encoders, template, token, toyrun.PARENT, perm, 0.4)
            assert np.allclose(
                swapped.feature.values,
                base.with_weight(0.4).feature.values,
                atol=1e-12,
            )


def test_gradient_checks():
    with criterion("gradient checks", 120.0):
        encoders, backbone, subspace = toyrun.shared_handles()
        rng = np.random.default_rng(7)

        lambda_pairs = [(1.0, 0.0), (0.0, 1.0), (1.0, 1e-2)] * 3
        lambda_pairs += [
            (float(np.round(rng.uniform(0.1, 2.0), 2)), float(np.round(rng.uniform(1e-3, 1.0), 3)))
            for _ in range(12)
        ]
        assert len(lambda_pairs) >= 20

        for case, (lam_sd, lam_ce) in enumerate(lambda_pairs):
            config = TrainingConfig(
                lambda_sd=lam_sd, lambda_ce=lam_ce, iterations=1,
                num_tokens=int(rng.integers(1, 3)),
                temperature=float(rng.choice([20.0, 100.0])),
                seed=case,
            )
            ctx = TrainingContext(
                encoders=encoders, backbone=backbone, parent=toyrun.PARENT,
                subspace=subspace if case % 2 == 0 else None,
            )
            batch = TrainingBatch(
                positives=tuple(concept_images(2, seed=100 + case)),
                negatives=tuple(concept_images(2, seed=200 + case)),
            )
            rows0 = initial_rows(toyrun.PARENT, config, encoders)
            rows0 += 0.1 * rng.standard_normal(rows0.shape)

            rows_t = torch.tensor(rows0, requires_grad=True)
            loss = total_loss(rows_t, batch, ctx, config, rng_seed=1000 + case)
            loss.backward()
            analytic = rows_t.grad.numpy()

            step = 1e-4
            numeric = np.zeros_like(rows0)
            for i in range(rows0.shape[0]):
                for j in range(rows0.shape[1]):
                    plus, minus = rows0.copy(), rows0.copy()
                    plus[i, j] += step
                    minus[i, j] -= step
                    numeric[i, j] = (
                        total_loss(plus, batch, ctx, config, rng_seed=1000 + case)
                        - total_loss(minus, batch, ctx, config, rng_seed=1000 + case)
                    ) / (2 * step)
            rel = np.linalg.norm(numeric - analytic) / max(np.linalg.norm(numeric), 1e-12)
            assert rel <= 1e-3, f"case {case} ({lam_sd}, {lam_ce}): rel error {rel:.2e}"


def test_metric_oracles():
    with criterion("metric oracles", 30.0):
        assert mrr([1, 2, 4]) == pytest.approx(7.0 / 12.0)
        assert mrr([1, 1, 1]) == 1.0

        rng = np.random.default_rng(99)
        for _ in range(200):
            n = int(rng.integers(4, 101))
            scores = np.round(rng.standard_normal(n), 1)
            labels = rng.integers(0, 2, n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            assert auc_roc(scores, labels) == brute_force_auc(list(scores), list(labels))

        for seed in range(100):
            r = np.random.default_rng(seed)
            n = int(r.integers(2, 30))
            entries = [(f"img{i:03d}", r.standard_normal(8)) for i in range(n)]
            index = build_index(entries, FeatureEncoders())
            query = r.standard_normal(8)
            got = rank_with_scores(query, index)
            assert got == sorted(got, key=lambda pair: (-pair[1], pair[0]))


def test_gair_correctness():
    with criterion("weight-search correctness", 30.0):
        grid11 = [round(w, 1) for w in np.linspace(0, 1, 11)]
        peaked = lambda w: 1.0 - (w - 0.6) ** 2  # noqa: E731
        request, enc, bb = landscape_request(grid11, peaked)
        assert run_gair(request, enc, bb).optimal_weight == 0.6

        rng = np.random.default_rng(17)
        plateau_seen = 0
        for case in range(50):
            size = int(rng.integers(2, 12))
            grid = sorted(set(round(float(w), 6) for w in rng.uniform(0, 1, size)))
            values = np.round(rng.uniform(-1, 1, len(grid)), 1)  # coarse => ties
            if len(set(values)) < len(values):
                plateau_seen += 1
            table = dict(zip(grid, values))
            request, enc, bb = landscape_request(grid, lambda w: table[w], seed=case)
            result = run_gair(request, enc, bb)
            assert result.optimal_weight == brute_force_optimum(grid, result.scores)

        # explicit all-tie plateau: largest weight must win
        grid = [0.0, 0.5, 1.0]
        request, enc, bb = landscape_request(grid, lambda w: 0.25)
        assert run_gair(request, enc, bb).optimal_weight == 1.0
        assert plateau_seen > 0


def test_toy_ablation_trend():
    with criterion("toy ablation trend", 900.0):
        encoders, _, _ = toyrun.shared_handles()
        positives = list(toyrun.heldout_positives())
        for seed in toyrun.TRAIN_SEEDS:
            negatives = list(toyrun.negatives_for(seed, heldout=True))
            acc_on = token_vs_parent_accuracy(
                toyrun.trained(1e-2, seed).token, toyrun.PARENT, positives,
                negatives, encoders)
            acc_off = token_vs_parent_accuracy(
                toyrun.trained(0.0, seed).token, toyrun.PARENT, positives,
                negatives, encoders)
            assert acc_on >= 0.9, f"seed {seed}: accuracy {acc_on:.3f} with joint loss"
            assert acc_off <= 0.65, f"seed {seed}: accuracy {acc_off:.3f} without class loss"


def test_norm_projection_trend():
    with criterion("norm/projection trend", 900.0):
        encoders, _, subspace = toyrun.shared_handles()
        from conftest import TOY_ATTRIBUTES
        from tokenstudio import attribute_embedding

        vectors = [attribute_embedding(a, encoders) for a in TOY_ATTRIBUTES]
        for seed in toyrun.TRAIN_SEEDS:
            projected = toyrun.trained(1e-2, seed, projected=True).token
            unprojected = toyrun.trained(1e-2, seed, projected=False).token
            report = norm_report(vectors, projected)
            assert report.learned_token_norm <= unprojected.row_norms().mean()
            band = 3.0 * report.std
            assert abs(report.learned_token_norm - report.mean) <= band


def test_determinism_and_persistence(tmp_path):
    with criterion("determinism & persistence", 120.0):
        encoders, backbone, subspace = toyrun.shared_handles()
        images = list(toyrun.training_images())
        negatives = list(toyrun.negatives_for(0))
        config = toyrun.recipe_config(1e-2, seed=0)
        config = TrainingConfig(**{**config.to_dict(), "iterations": 10})

        a = train_token(images, toyrun.PARENT, subspace, config, encoders, backbone,
                        negatives=negatives)
        b = train_token(images, toyrun.PARENT, subspace, config, encoders, backbone,
                        negatives=negatives)
        pa, pb = tmp_path / "a.json", tmp_path / "b.json"
        save_token(a.token, pa, subspace, a.metrics)
        save_token(b.token, pb, subspace, b.metrics)
        assert pa.read_bytes() == pb.read_bytes()

        token_blob = pa.read_bytes()
        token, sub, doc = load_token(pa)
        save_token(token, pa, sub, doc["metrics"])
        assert pa.read_bytes() == token_blob

        sub_path = tmp_path / "subspace.json"
        save_subspace(subspace, sub_path)
        sub_blob = sub_path.read_bytes()
        save_subspace(load_subspace(sub_path), sub_path)
        assert sub_path.read_bytes() == sub_blob

        entries = [(f"i{i}", img) for i, img in enumerate(concept_images(4, seed=77))]
        index = build_index(entries, encoders)
        index_path = tmp_path / "toy.index"
        save_index(index, index_path)
        index_blob = index_path.read_bytes()
        save_index(load_index(index_path), index_path)
        assert index_path.read_bytes() == index_blob


def test_diffusion_loss_criterion():
    with criterion("diffusion loss", 60.0):
        from test_diffusion import EchoNoiseDenoiser, ZeroDenoiser
        from tokenstudio import ToyDiffusionBackbone

        backbone = ToyDiffusionBackbone()
        images = concept_images(3, seed=8)
        backbone.denoiser = EchoNoiseDenoiser(backbone, images)
        assert backbone.diffusion_loss(images, np.zeros(backbone.cond_dim), 0) == pytest.approx(
            0.0, abs=1e-12
        )

        backbone = ToyDiffusionBackbone()
        backbone.denoiser = ZeroDenoiser()
        many = concept_images(14, seed=9)  # 14 images x 768 latent values > 10k draws
        loss = backbone.diffusion_loss(many, np.zeros(backbone.cond_dim), 123)
        assert abs(loss - 1.0) <= 0.05

        backbone = ToyDiffusionBackbone()
        tau = np.full(backbone.cond_dim, 0.3)
        assert np.array_equal(backbone.sample(tau, seed=4), backbone.sample(tau, seed=4))


def test_service_flow(tmp_path):
    with criterion("service flow", 300.0):
        from tokenstudio.service.cli import main

        image_dir = tmp_path / "images"
        image_dir.mkdir()
        for i, img in enumerate(concept_images(3, seed=50)):
            save_png(img, image_dir / f"{i}.png")
        root = tmp_path / "store"

        import io
        from contextlib import redirect_stdout

        def run(*argv):
            buf = io.StringIO()
            with redirect_stdout(buf):
                code = main([str(a) for a in argv])
            assert code == 0, buf.getvalue()
            return buf.getvalue()

        out = run("--root", root, "train", "--images", image_dir, "--parent", "square",
                  "--attributes", "red,blue,dark", "--iterations", 5, "--lr", 0.5,
                  "--num-tokens", 2, "--negatives", 2, "--seed", 0)
        concept_id = dict(line.split(" ", 1) for line in out.strip().splitlines())["concept"]

        gen_dir = tmp_path / "gen"
        run("--root", root, "generate", "--concept", concept_id, "-n", 1,
            "--seed", 1, "--out", gen_dir)
        assert len(list(gen_dir.glob("*.png"))) == 1

        manifest = tmp_path / "manifest.csv"
        lines = ["image_path,class_id,caption"]
        for i, img in enumerate(concept_images(2, seed=51) + distractor_images(2, seed=52)):
            save_png(img, tmp_path / f"m{i}.png")
            lines.append(f"m{i}.png,class{i % 2},toy caption")
        manifest.write_text("\n".join(lines) + "\n")

        out = run("--root", root, "retrieve", "--concept", concept_id,
                  "--manifest", manifest, "--weight", "0.7", "--top-k", 2)
        assert out.splitlines()[1].startswith("1,")

        out = run("--root", root, "gair", "--concept", concept_id,
                  "--grid", "0.0,0.5,1.0", "--previews", 1, "--seed", 3)
        assert out.strip() in ("0", "0.5", "1")

        # API validation: malformed bodies are rejected with 400
        from fastapi.testclient import TestClient
        from tokenstudio.service.api import create_app
        from tokenstudio.service.config import StudioConfig

        app = create_app(StudioConfig(root=root))
        with TestClient(app) as client:
            assert client.post("/queries/compose", json={"weight": 2.0}).status_code == 400
            assert client.post("/concepts", json={"images": "nope"}).status_code == 400
            compose = client.post("/queries/compose", json={
                "concept_id": concept_id, "weight": 1.0})
            assert compose.status_code == 200
            assert "feature_fingerprint" in compose.json()
