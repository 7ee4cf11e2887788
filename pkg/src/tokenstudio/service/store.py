"""Content-addressed file store for concepts, tokens, indexes, jobs, previews.

Artifacts are deterministic JSON/PNG files under one root; no database.  Ids
are sequential per kind, file names for derived artifacts come from content
hashes.
"""
from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import NoImages, UnknownConcept, UnknownIndex, UnknownJob
from ..images import load_png, png_bytes, save_png
from ..retrieval import RetrievalIndex, load_index as _load_index, save_index as _save_index
from ..serialization import canonical_json, fingerprint, fingerprint_bytes

SUBDIRS = ("concepts", "tokens", "indexes", "jobs", "previews")


class Store:
    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        for name in SUBDIRS:
            (self.root / name).mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    # --- ids ---

    def _next_id(self, kind: str, prefix: str) -> str:
        with self._lock:
            existing = sorted((self.root / kind).glob(f"{prefix}*.json"))
            numbers = [int(p.stem[len(prefix):]) for p in existing if p.stem[len(prefix):].isdigit()]
            return f"{prefix}{(max(numbers) + 1) if numbers else 1:04d}"

    # --- concepts ---

    def create_concept(
        self,
        images: Sequence[np.ndarray],
        parent: str,
        attributes: Sequence[str],
    ) -> dict:
        if not images:
            raise NoImages("a concept needs at least one image")
        concept_id = self._next_id("concepts", "c")
        image_dir = self.root / "concepts" / concept_id
        image_dir.mkdir(parents=True, exist_ok=True)

        paths = []
        content_hashes = []
        for i, image in enumerate(images):
            rel = f"concepts/{concept_id}/{i:04d}.png"
            save_png(image, self.root / rel)
            paths.append(rel)
            content_hashes.append(fingerprint_bytes(png_bytes(image)))

        doc = {
            "id": concept_id,
            "parent_concept": parent,
            "image_paths": paths,
            "attributes": list(attributes),
            "token_path": None,
            "fingerprint": fingerprint(
                {"images": content_hashes, "parent": parent, "attributes": list(attributes)}
            ),
        }
        self._write_json(f"concepts/{concept_id}.json", doc)
        return doc

    def get_concept(self, concept_id: str) -> dict:
        path = self.root / "concepts" / f"{concept_id}.json"
        if not path.is_file():
            raise UnknownConcept(f"no concept {concept_id!r}")
        return json.loads(path.read_text(encoding="utf-8"))

    def update_concept(self, doc: dict) -> None:
        self._write_json(f"concepts/{doc['id']}.json", doc)

    def concept_images(self, doc: dict) -> list[np.ndarray]:
        return [load_png(self.root / rel) for rel in doc["image_paths"]]

    # --- tokens ---

    def save_token_doc(self, doc: dict) -> str:
        blob = canonical_json(doc)
        rel = f"tokens/{fingerprint_bytes(blob.encode('utf-8'))[:16]}.json"
        (self.root / rel).write_text(blob, encoding="utf-8")
        return rel

    def read_token_doc(self, rel: str) -> dict:
        return json.loads((self.root / rel).read_text(encoding="utf-8"))

    # --- previews ---

    def save_preview(self, image: np.ndarray) -> str:
        data = png_bytes(image)
        rel = f"previews/{fingerprint_bytes(data)[:16]}.png"
        path = self.root / rel
        if not path.exists():
            path.write_bytes(data)
        return rel

    def preview_path(self, name: str) -> Path:
        path = (self.root / "previews" / name).resolve()
        if not str(path).startswith(str((self.root / "previews").resolve())) or not path.is_file():
            raise UnknownIndex(f"no preview {name!r}")
        return path

    # --- indexes ---

    def save_index(self, index: RetrievalIndex, name: str | None = None) -> str:
        from ..retrieval import index_fingerprint

        index_id = name or index_fingerprint(index)[:16]
        _save_index(index, self.root / "indexes" / f"{index_id}.index")
        return index_id

    def load_index(self, index_id: str) -> RetrievalIndex:
        path = self.root / "indexes" / f"{index_id}.index"
        if not path.is_file():
            raise UnknownIndex(f"no index {index_id!r}")
        return _load_index(path)

    # --- jobs ---

    def new_job_id(self) -> str:
        return self._next_id("jobs", "j")

    def write_job(self, doc: dict) -> None:
        self._write_json(f"jobs/{doc['id']}.json", doc)

    def read_job(self, job_id: str) -> dict:
        path = self.root / "jobs" / f"{job_id}.json"
        if not path.is_file():
            raise UnknownJob(f"no job {job_id!r}")
        return json.loads(path.read_text(encoding="utf-8"))

    # --- misc ---

    def _write_json(self, rel: str, doc: dict) -> None:
        (self.root / rel).write_text(canonical_json(doc), encoding="utf-8")

    def write_text(self, rel: str, text: str) -> str:
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        return rel
