"""Dual text/image encoder contract, prompt assembly, and query composition.

The encoders are frozen: encoding is deterministic and gradients reach only
embedding rows injected into an assembled prompt.  A small fixed-weight
reference encoder pair (mean-of-embeddings text path, patch-mean image path,
one random linear map each) makes every contract testable on a desk.
"""
from __future__ import annotations

import importlib
import re
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
import torch

from .embedding import TokenEmbedding
from .errors import (
    BadImage,
    EmptyAttributes,
    SequenceTooLong,
    SlotMissing,
    UnknownToken,
    UnsupportedBackbone,
    WeightOutOfRange,
    ZeroVector,
)
from .serialization import fingerprint, fingerprint_bytes, f32_bytes

TOKEN_SLOT = "{*}"
PARENT_SLOT = "{c}"

_SLOT_RE = re.compile(r"(\{\*\}|\{c\})")

DEFAULT_PARAPHRASES = (
    "a photo of a {*} {c}",
    "a rendering of a {*} {c}",
    "a cropped photo of the {*} {c}",
    "a dark photo of a {*} {c}",
    "a close-up photo of a {*} {c}",
)


def _count_slots(text: str) -> tuple[int, int]:
    return text.count(TOKEN_SLOT), text.count(PARENT_SLOT)


@dataclass(frozen=True)
class PromptTemplate:
    """Context text with one custom-token slot and at most one parent slot."""

    context_text: str
    paraphrase_set: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        for text in (self.context_text, *self.paraphrase_set):
            stars, parents = _count_slots(text)
            if stars != 1:
                raise ValueError(f"template {text!r} must contain exactly one {TOKEN_SLOT}")
            if parents > 1:
                raise ValueError(f"template {text!r} may contain at most one {PARENT_SLOT}")
        object.__setattr__(self, "paraphrase_set", tuple(self.paraphrase_set))

    @property
    def all_templates(self) -> tuple[str, ...]:
        return (self.context_text, *self.paraphrase_set)

    @classmethod
    def default(cls, order: str = "star_first") -> "PromptTemplate":
        """Canonical template plus the stock paraphrase set.

        `order` selects where the token slot sits relative to the parent word:
        "star_first" gives "... {*} {c}", "parent_first" gives "... {c} {*}".
        """
        if order not in ("star_first", "parent_first"):
            raise ValueError(f"unknown prompt order {order!r}")
        context = "image of a {*} {c}"
        paraphrases = DEFAULT_PARAPHRASES
        if order == "parent_first":
            swap = lambda s: s.replace("{*} {c}", "{c} {*}")  # noqa: E731
            context = swap(context)
            paraphrases = tuple(swap(p) for p in paraphrases)
        return cls(context_text=context, paraphrase_set=paraphrases)


def render_plain(template_text: str, parent: str, star_text: str = "") -> str:
    """Fill both slots with plain text (drop the token slot when empty)."""
    out = template_text.replace(TOKEN_SLOT, star_text).replace(PARENT_SLOT, parent)
    return " ".join(out.split())


@dataclass(frozen=True, eq=False)
class ConditionVector:
    """A feature in the joint text/image space."""

    values: np.ndarray
    normalized: bool = False

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(vals)):
            raise ValueError("condition vector has non-finite entries")
        if self.normalized and abs(np.linalg.norm(vals) - 1.0) > 1e-6:
            raise ValueError("normalized condition vector must have unit norm")
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def unit(self) -> "ConditionVector":
        norm = np.linalg.norm(self.values)
        if norm < 1e-12:
            raise ZeroVector("cannot normalize a zero feature")
        return ConditionVector(self.values / norm, normalized=True)


# --- reference tokenizer/encoders ------------------------------------------

_PROMPT_WORDS = (
    "image of a an the photo picture rendering cropped close up top front side "
    "view scene shot style background on in at with and"
)
_OBJECT_WORDS = (
    "teapot square circle triangle dress mug cup bowl chair table lamp vase "
    "bottle hat shoe bag clock box ball sink beach wall garden kitchen room "
    "forest city street snow mountain sky field"
)
_ATTRIBUTE_WORDS = (
    "red blue green yellow pink purple black white gray orange brown ceramic "
    "metal wooden glass plastic shiny matte old new worn faded bright dark "
    "striped dotted plain rough smooth soft hard small large tiny huge round "
    "flat tall short heavy light modern vintage colorful pale deep"
)
# Sub-word pieces give multi-piece decompositions for words outside the list;
# single letters guarantee any purely alphabetic word tokenizes.
_PIECES = "ha re ing er un ly " + " ".join("abcdefghijklmnopqrstuvwxyz")

_WORD_RE = re.compile(r"[^\s\-_.,;:!?()\[\]{}'\"/\\]+")


def toy_vocabulary() -> list[str]:
    seen: dict[str, None] = {}
    for word in f"{_PROMPT_WORDS} {_OBJECT_WORDS} {_ATTRIBUTE_WORDS} {_PIECES}".split():
        seen.setdefault(word, None)
    return list(seen)


def toy_attribute_words() -> list[str]:
    """Adjectives from the reference vocabulary; the stock candidate list for
    attribute selection."""
    return _ATTRIBUTE_WORDS.split()


class ToyDualEncoder:
    """Deterministic small dual encoder sharing one joint feature space.

    Text: mean of token-embedding rows through a fixed random linear map.
    Image: per-patch channel means through a fixed random linear map plus bias.
    Weights are drawn once from a seeded generator and never change.
    """

    kind = "toy"

    def __init__(
        self,
        embed_dim: int = 48,
        feature_dim: int = 32,
        context_length: int = 77,
        image_size: int = 32,
        patch_grid: int = 4,
        seed: int = 0,
    ) -> None:
        if image_size % patch_grid != 0:
            raise ValueError("image_size must be divisible by patch_grid")
        self.embed_dim = embed_dim
        self.feature_dim = feature_dim
        self.context_length = context_length
        self.image_size = image_size
        self.patch_grid = patch_grid
        self.seed = seed

        self._vocab = toy_vocabulary()
        self._vocab_index = {word: i for i, word in enumerate(self._vocab)}
        rng = np.random.default_rng(seed)
        self._table = rng.standard_normal((len(self._vocab), embed_dim)) / np.sqrt(embed_dim)
        self._text_map = rng.standard_normal((feature_dim, embed_dim)) / np.sqrt(embed_dim)
        n_patch_feats = patch_grid * patch_grid * 3
        self._image_map = rng.standard_normal((feature_dim, n_patch_feats)) / np.sqrt(n_patch_feats)
        self._image_bias = rng.standard_normal(feature_dim) / np.sqrt(feature_dim)

        self._table_t = torch.from_numpy(self._table.copy())
        self._text_map_t = torch.from_numpy(self._text_map.copy())

    # -- adapter contract --

    @property
    def dim(self) -> int:
        return self.feature_dim

    def tokenize(self, text: str) -> list[int]:
        ids: list[int] = []
        for word in _WORD_RE.findall(text.lower()):
            ids.extend(self._split_word(word))
        return ids

    def embed(self, ids: Sequence[int]) -> np.ndarray:
        return self._table[np.asarray(ids, dtype=np.intp)]

    def encode_text(self, text) -> np.ndarray:
        """Encode a string or an already-assembled (n, d) row matrix."""
        rows = self._rows_from(text)
        return self._text_map @ rows.mean(axis=0)

    def encode_image(self, image: np.ndarray) -> np.ndarray:
        patches = self._patch_means(image)
        return self._image_map @ patches + self._image_bias

    # -- torch paths used during training --

    def embed_t(self, ids: Sequence[int]) -> torch.Tensor:
        return self._table_t[torch.as_tensor(ids, dtype=torch.long)]

    def encode_rows_t(self, rows: torch.Tensor) -> torch.Tensor:
        if rows.shape[0] > self.context_length:
            raise SequenceTooLong(f"{rows.shape[0]} rows exceed context {self.context_length}")
        return self._text_map_t @ rows.mean(dim=0)

    def encode_image_t(self, image: np.ndarray) -> torch.Tensor:
        return torch.from_numpy(self.encode_image(image))

    # -- internals --

    def _split_word(self, word: str) -> list[int]:
        if word in self._vocab_index:
            return [self._vocab_index[word]]
        ids: list[int] = []
        pos = 0
        while pos < len(word):
            for end in range(len(word), pos, -1):
                piece = word[pos:end]
                if piece in self._vocab_index:
                    ids.append(self._vocab_index[piece])
                    pos = end
                    break
            else:
                raise UnknownToken(f"cannot tokenize {word!r} at {word[pos]!r}")
        return ids

    def _rows_from(self, text) -> np.ndarray:
        if isinstance(text, str):
            ids = self.tokenize(text)
            if not ids:
                raise UnknownToken(f"text {text!r} produced no tokens")
            rows = self.embed(ids)
        else:
            rows = np.asarray(text, dtype=np.float64)
            if rows.ndim != 2 or rows.shape[1] != self.embed_dim:
                raise ValueError("expected an (n, d) row matrix")
        if rows.shape[0] > self.context_length:
            raise SequenceTooLong(f"{rows.shape[0]} rows exceed context {self.context_length}")
        return rows

    def _patch_means(self, image: np.ndarray) -> np.ndarray:
        arr = np.asarray(image)
        if arr.dtype != np.uint8 or arr.shape != (self.image_size, self.image_size, 3):
            raise BadImage(
                f"expected uint8 ({self.image_size}, {self.image_size}, 3), got "
                f"{arr.dtype} {arr.shape}"
            )
        g = self.patch_grid
        s = self.image_size // g
        scaled = arr.astype(np.float64) / 255.0
        return scaled.reshape(g, s, g, s, 3).mean(axis=(1, 3)).reshape(-1)

    def fingerprint(self) -> str:
        weights = np.concatenate(
            [self._table.ravel(), self._text_map.ravel(), self._image_map.ravel(), self._image_bias]
        )
        return fingerprint_bytes(
            f"{self.embed_dim}|{self.feature_dim}|{self.context_length}|"
            f"{self.image_size}|{self.patch_grid}".encode() + f32_bytes(weights)
        )


# --- prompt assembly and encoding ------------------------------------------

def _template_parts(template_text: str) -> list[tuple[str, str]]:
    parts: list[tuple[str, str]] = []
    for chunk in _SLOT_RE.split(template_text):
        if chunk == TOKEN_SLOT:
            parts.append(("star", ""))
        elif chunk == PARENT_SLOT:
            parts.append(("parent", ""))
        elif chunk:
            parts.append(("text", chunk))
    return parts


def assemble_rows(encoders, template_text: str, token_rows, parent: str):
    """Assemble the embedding-row sequence for a template.

    `token_rows` may be a numpy array or a torch tensor; the result matches
    (torch keeps the injected rows on the autograd tape, everything else is
    constant).  Raises SlotMissing / SequenceTooLong.
    """
    parts = _template_parts(template_text)
    if not any(kind == "star" for kind, _ in parts):
        raise SlotMissing(f"template {template_text!r} has no token slot")

    use_torch = isinstance(token_rows, torch.Tensor)
    pieces = []
    for kind, text in parts:
        if kind == "star":
            pieces.append(token_rows)
        elif kind == "parent":
            if parent:
                ids = encoders.tokenize(parent)
                pieces.append(encoders.embed_t(ids) if use_torch else encoders.embed(ids))
        else:
            ids = encoders.tokenize(text)
            if ids:
                pieces.append(encoders.embed_t(ids) if use_torch else encoders.embed(ids))

    rows = torch.cat(pieces, dim=0) if use_torch else np.concatenate(pieces, axis=0)
    if rows.shape[0] > encoders.context_length:
        raise SequenceTooLong(f"{rows.shape[0]} rows exceed context {encoders.context_length}")
    return rows


def assemble(encoders, template, token: TokenEmbedding, parent: str) -> np.ndarray:
    """Expand the token slot to the learned rows and the parent slot to its tokens."""
    text = template.context_text if isinstance(template, PromptTemplate) else template
    return assemble_rows(encoders, text, token.vectors, parent)


def encode_text(encoders, sequence) -> ConditionVector:
    """Frozen text-encoder forward pass over a string or assembled rows."""
    return ConditionVector(encoders.encode_text(sequence), normalized=False)


def encode_image(encoders, image) -> ConditionVector:
    return ConditionVector(encoders.encode_image(image), normalized=False)


def _vector_of(x) -> np.ndarray:
    if isinstance(x, ConditionVector):
        return x.values
    return np.asarray(x, dtype=np.float64).reshape(-1)


def score(text_feature, image_feature) -> float:
    """Cosine similarity between two features; both are unit-normalized first."""
    a = _vector_of(text_feature)
    b = _vector_of(image_feature)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < 1e-12 or nb < 1e-12:
        raise ZeroVector("cannot score a zero feature")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


@dataclass(frozen=True, eq=False)
class ComposedQuery:
    """Weighted mix of a token-bearing prompt feature and attribute-prompt features.

    Component features are unit-normalized before combination; the combined
    feature is left as the raw affine mix (scoring normalizes it again), so the
    feature is exactly affine in the weight.
    """

    weight: float
    attributes: tuple[str, ...]
    template: PromptTemplate
    token_ref: str
    feature: ConditionVector
    token_component: np.ndarray
    attribute_components: np.ndarray  # (|A|, dim)

    def __post_init__(self) -> None:
        if not 0.0 <= self.weight <= 1.0:
            raise WeightOutOfRange(f"weight {self.weight} outside [0, 1]")
        expected = _combine(self.weight, self.token_component, self.attribute_components)
        if np.linalg.norm(expected - self.feature.values) > 1e-6:
            raise ValueError("feature does not match its defining combination")

    def with_weight(self, weight: float) -> "ComposedQuery":
        """Re-mix the cached component features at a new weight."""
        if not 0.0 <= weight <= 1.0:
            raise WeightOutOfRange(f"weight {weight} outside [0, 1]")
        if weight < 1.0 and self.attribute_components.shape[0] == 0:
            raise EmptyAttributes("weight < 1 requires at least one attribute")
        vals = _combine(weight, self.token_component, self.attribute_components)
        return replace(self, weight=weight, feature=ConditionVector(vals))


def _combine(weight: float, token_component: np.ndarray, attribute_components: np.ndarray) -> np.ndarray:
    if attribute_components.shape[0] == 0:
        return weight * token_component
    return weight * token_component + (1.0 - weight) * attribute_components.mean(axis=0)


def compose_query(
    encoders,
    template,
    token: TokenEmbedding,
    parent: str,
    attributes: Sequence[str],
    weight: float,
) -> ComposedQuery:
    """Mix the token query with attribute queries: w·g(token prompt) +
    (1-w)·mean over attributes of g(attribute prompt).

    Component features are cached on the result so a weight sweep re-mixes
    without re-encoding.
    """
    if not 0.0 <= weight <= 1.0:
        raise WeightOutOfRange(f"weight {weight} outside [0, 1]")
    attrs = tuple(attributes)
    if weight < 1.0 and not attrs:
        raise EmptyAttributes("weight < 1 requires at least one attribute")
    tmpl = template if isinstance(template, PromptTemplate) else PromptTemplate(template)

    token_feature = encode_text(encoders, assemble(encoders, tmpl, token, parent)).unit()
    attr_feats = []
    for attr in attrs:
        prompt = render_plain(tmpl.context_text, parent, star_text=attr)
        attr_feats.append(encode_text(encoders, prompt).unit().values)
    components = (
        np.asarray(attr_feats) if attr_feats else np.zeros((0, token_feature.dim))
    )

    vals = _combine(weight, token_feature.values, components)
    return ComposedQuery(
        weight=weight,
        attributes=attrs,
        template=tmpl,
        token_ref=token.concept_id,
        feature=ConditionVector(vals),
        token_component=token_feature.values,
        attribute_components=components,
    )


# --- backbone loading -------------------------------------------------------

def load_encoder(spec: dict) -> ToyDualEncoder:
    """Instantiate a dual encoder from a model-spec document.

    kind "toy" builds the reference encoder; kind "external" imports a factory
    ("pkg.module:callable") that must return an object satisfying the adapter
    contract (tokenize / embed / encode_text / encode_image / dim).
    """
    kind = spec.get("kind", "toy")
    if kind == "toy":
        allowed = {"embed_dim", "feature_dim", "context_length", "image_size", "patch_grid", "seed"}
        params = {k: v for k, v in spec.items() if k in allowed}
        return ToyDualEncoder(**params)
    if kind == "external":
        factory = spec.get("factory")
        if not factory or ":" not in factory:
            raise UnsupportedBackbone("external encoder spec needs factory 'module:callable'")
        module_name, attr = factory.split(":", 1)
        fn = getattr(importlib.import_module(module_name), attr)
        return fn(**spec.get("params", {}))
    raise UnsupportedBackbone(f"unknown encoder kind {kind!r}")
