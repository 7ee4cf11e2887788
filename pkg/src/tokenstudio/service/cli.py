"""Command-line entry points; each subcommand is a thin client over the library."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from ..embedding import affinity, attribute_embedding, norm_report
from ..errors import StudioError
from ..images import load_png, save_png
from ..retrieval import auc_roc, mrr
from ..training import token_from_doc
from .config import StudioConfig, load_config
from .operations import Studio


def _studio(args) -> Studio:
    config = load_config(args.config) if args.config else load_config()
    if args.root:
        config.root = Path(args.root)
    return Studio(config)


def _load_images(directory: str) -> list[np.ndarray]:
    paths = sorted(Path(directory).glob("*.png"))
    if not paths:
        raise StudioError(f"no .png images under {directory}")
    return [load_png(p) for p in paths]


def _csv_floats(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part.strip()]


def cmd_train(args) -> int:
    studio = _studio(args)
    images = _load_images(args.images)
    attributes = args.attributes.split(",") if args.attributes else None
    concept = studio.ingest_concept(images, args.parent, attributes)
    overrides = {
        "lambda_sd": args.lambda_sd,
        "lambda_ce": args.lambda_ce,
        "learning_rate": args.lr,
        "iterations": args.iterations,
        "num_tokens": args.num_tokens,
        "negatives_k": args.negatives,
        "seed": args.seed,
        "temperature": args.temperature,
    }
    token_ref, metrics = studio.train_concept(concept["id"], overrides)
    print(f"concept {concept['id']}")
    print(f"token {token_ref}")
    print(f"final_losses {json.dumps(metrics['final_losses'], sort_keys=True)}")
    return 0


def cmd_generate(args) -> int:
    studio = _studio(args)
    attributes = args.attributes.split(",") if args.attributes else None
    outcome, refs = studio.preview(
        args.concept, args.weight, args.caption, attributes, n=args.n, seed=args.seed
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, ref in enumerate(refs):
        image = load_png(studio.store.root / ref)
        path = out_dir / f"generated_{i:03d}.png"
        save_png(image, path)
        print(path)
    return 0


def cmd_retrieve(args) -> int:
    studio = _studio(args)
    if args.manifest:
        index_id, _ = studio.build_index_from_manifest(args.manifest, args.index)
    elif args.index:
        index_id = args.index
    else:
        raise StudioError("retrieve needs --index or --manifest")
    attributes = args.attributes.split(",") if args.attributes else None
    _, ranked = studio.retrieve(
        index_id, args.concept, args.weight, args.caption, attributes, args.top_k
    )
    print(f"index {index_id}")
    for i, (image_id, score_value) in enumerate(ranked):
        print(f"{i + 1},{image_id},{score_value:.6f}")
    return 0


def cmd_gair(args) -> int:
    studio = _studio(args)
    attributes = args.attributes.split(",") if args.attributes else None
    grid = _csv_floats(args.grid) if args.grid else None
    result, payload = studio.gair(
        args.concept,
        template=args.caption,
        attributes=attributes,
        grid=grid,
        previews_per_weight=args.previews,
        seed=args.seed,
    )
    print(f"{result.optimal_weight:g}")
    print(f"curve {payload['curve_csv_path']}", file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    if args.metric == "mrr":
        if not args.ranks:
            raise StudioError("--ranks is required for mrr")
        value = mrr([int(r) for r in args.ranks.split(",")])
        print(f"{value:.5f}")
    elif args.metric == "auc":
        if not args.scores or not args.labels:
            raise StudioError("--scores and --labels are required for auc")
        value = auc_roc(_csv_floats(args.scores), [int(x) for x in args.labels.split(",")])
        print(f"{value:.5f}")
    else:
        raise StudioError(f"unknown metric {args.metric!r}")
    return 0


def cmd_report(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    studio = _studio(args)
    concept, token, _ = studio.load_concept_token(args.concept)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    attrs = concept["attributes"][: args.max_attributes]
    vectors = [attribute_embedding(a, studio.encoders) for a in attrs]
    labeled = [(a, v) for a, v in zip(attrs, vectors)]
    labeled.append(("<token>", token.mean_vector()))
    report = affinity(labeled)

    fig, ax = plt.subplots(figsize=(6, 5))
    shown = np.clip(report.matrix, -report.clip_at, report.clip_at)
    im = ax.imshow(shown, cmap="viridis")
    ax.set_xticks(range(len(report.labels)))
    ax.set_yticks(range(len(report.labels)))
    ax.set_xticklabels(report.labels, rotation=90, fontsize=6)
    ax.set_yticklabels(report.labels, fontsize=6)
    fig.colorbar(im)
    fig.tight_layout()
    fig.savefig(out_dir / "affinity.png", dpi=120)
    plt.close(fig)

    with open(out_dir / "affinity.csv", "w", encoding="utf-8") as fh:
        fh.write("," + ",".join(report.labels) + "\n")
        for label, row in zip(report.labels, report.matrix):
            fh.write(label + "," + ",".join(f"{v:.6f}" for v in row) + "\n")

    norms = norm_report(vectors, token)
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.bar(range(len(attrs)), norms.per_attribute_norms, label="attributes")
    ax.axhline(norms.learned_token_norm, color="red", label="learned token")
    ax.axhline(norms.mean, color="gray", linestyle="--", label="attribute mean")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out_dir / "norms.png", dpi=120)
    plt.close(fig)

    with open(out_dir / "norms.csv", "w", encoding="utf-8") as fh:
        fh.write("attribute,norm\n")
        for a, v in zip(attrs, norms.per_attribute_norms):
            fh.write(f"{a},{v:.6f}\n")
        fh.write(f"<mean>,{norms.mean:.6f}\n")
        fh.write(f"<std>,{norms.std:.6f}\n")
        fh.write(f"<token>,{norms.learned_token_norm:.6f}\n")

    print(out_dir / "affinity.png")
    print(out_dir / "norms.png")
    return 0


def cmd_index(args) -> int:
    studio = _studio(args)
    index_id, index = studio.build_index_from_manifest(args.manifest, args.name)
    print(f"{index_id} ({len(index)} images, dim {index.dim})")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .api import create_app

    config = load_config(args.config) if args.config else load_config()
    if args.root:
        config.root = Path(args.root)
    uvicorn.run(create_app(config), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tokenstudio",
        description="Learn concept tokens; generate, retrieve, and tune queries with them.",
    )
    parser.add_argument("--config", help="path to a TOML/JSON config file")
    parser.add_argument("--root", help="store root directory (overrides config)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="ingest images and train a concept token")
    p.add_argument("--images", required=True, help="directory of .png concept images")
    p.add_argument("--parent", required=True, help="parent concept word")
    p.add_argument("--attributes", help="comma-separated attribute list (default: auto-select)")
    p.add_argument("--iterations", type=int)
    p.add_argument("--lambda-sd", dest="lambda_sd", type=float)
    p.add_argument("--lambda-ce", dest="lambda_ce", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--num-tokens", dest="num_tokens", type=int)
    p.add_argument("--negatives", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--temperature", type=float)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("generate", help="generate preview images from a composed query")
    p.add_argument("--concept", required=True)
    p.add_argument("--caption", help="template text with {*} and {c} slots")
    p.add_argument("--weight", type=float, default=1.0)
    p.add_argument("--attributes")
    p.add_argument("-n", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="generated")
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("retrieve", help="rank an image index against a composed query")
    p.add_argument("--concept", required=True)
    p.add_argument("--caption")
    p.add_argument("--weight", type=float, default=1.0)
    p.add_argument("--attributes")
    p.add_argument("--index", help="existing index id")
    p.add_argument("--manifest", help="build an index from this manifest CSV")
    p.add_argument("--top-k", dest="top_k", type=int)
    p.set_defaults(fn=cmd_retrieve)

    p = sub.add_parser("gair", help="search the composition weight with generated previews")
    p.add_argument("--concept", required=True)
    p.add_argument("--caption")
    p.add_argument("--attributes")
    p.add_argument("--grid", help="comma-separated weights, e.g. 0,0.25,0.5,0.75,1")
    p.add_argument("--previews", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_gair)

    p = sub.add_parser("eval", help="compute a metric from explicit inputs")
    p.add_argument("--metric", required=True, choices=["mrr", "auc"])
    p.add_argument("--ranks", help="comma-separated ground-truth ranks (mrr)")
    p.add_argument("--scores", help="comma-separated scores (auc)")
    p.add_argument("--labels", help="comma-separated 0/1 labels (auc)")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("report", help="emit affinity/norm diagnostics for a trained concept")
    p.add_argument("--concept", required=True)
    p.add_argument("--out", default="report")
    p.add_argument("--max-attributes", dest="max_attributes", type=int, default=24)
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("index", help="build a retrieval index from a manifest CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--name")
    p.set_defaults(fn=cmd_index)

    p = sub.add_parser("serve", help="run the HTTP API")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except StudioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
