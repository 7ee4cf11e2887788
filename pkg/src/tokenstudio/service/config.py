"""Studio configuration: one TOML/JSON file plus environment overrides."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib  # 3.11+
except ImportError:  # pragma: no cover - 3.10 fallback
    import tomli as tomllib

from ..encoders import toy_attribute_words

ENV_ROOT = "STUDIO_ROOT"
ENV_BACKBONE = "STUDIO_BACKBONE"


@dataclass
class StudioConfig:
    root: Path = Path("studio_data")
    encoder_spec: dict = field(default_factory=lambda: {"kind": "toy"})
    diffusion_spec: dict = field(default_factory=lambda: {"kind": "toy"})
    attribute_candidates: tuple[str, ...] = tuple(toy_attribute_words())
    select_top_n: int = 100
    training_defaults: dict = field(default_factory=dict)

    @property
    def backbone_spec(self) -> dict:
        return {"encoder": self.encoder_spec, "diffusion": self.diffusion_spec}


def _read_config_file(path: Path) -> dict:
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".toml":
        return tomllib.loads(text)
    return json.loads(text)


def _parse_backbone(value: str) -> dict:
    value = value.strip()
    if value.startswith("{"):
        return json.loads(value)
    return json.loads(Path(value).read_text(encoding="utf-8"))


def load_config(path: str | Path | None = None, env: dict | None = None) -> StudioConfig:
    """Build a config from an optional TOML/JSON file, then apply env overrides
    (STUDIO_ROOT for the store root, STUDIO_BACKBONE for the backbone spec)."""
    env = os.environ if env is None else env
    doc: dict = {}
    if path is not None:
        doc = _read_config_file(Path(path))

    config = StudioConfig()
    if "root" in doc:
        config.root = Path(doc["root"])
    backbone = doc.get("backbone", {})
    if "encoder" in backbone:
        config.encoder_spec = dict(backbone["encoder"])
    if "diffusion" in backbone:
        config.diffusion_spec = dict(backbone["diffusion"])
    if "attribute_candidates" in doc:
        config.attribute_candidates = tuple(doc["attribute_candidates"])
    if "select_top_n" in doc:
        config.select_top_n = int(doc["select_top_n"])
    if "training" in doc:
        config.training_defaults = dict(doc["training"])

    if env.get(ENV_ROOT):
        config.root = Path(env[ENV_ROOT])
    if env.get(ENV_BACKBONE):
        backbone = _parse_backbone(env[ENV_BACKBONE])
        if "encoder" in backbone:
            config.encoder_spec = dict(backbone["encoder"])
        if "diffusion" in backbone:
            config.diffusion_spec = dict(backbone["diffusion"])
    return config
