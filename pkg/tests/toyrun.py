"""The frozen desk-scale training recipe shared by trainer tests and the
acceptance suite.  Everything is seeded; results are cached per process."""
from __future__ import annotations

from functools import lru_cache

from tokenstudio import (
    ToyDiffusionBackbone,
    ToyDualEncoder,
    TrainingConfig,
    attribute_embedding,
    build_subspace,
)
from tokenstudio.toydata import concept_images
from tokenstudio.training import sample_negatives, train_token

from conftest import TOY_ATTRIBUTES

PARENT = "square"
NUM_TOKENS = 3
TRAIN_SEEDS = (0, 1, 2)


def recipe_config(lambda_ce: float, seed: int) -> TrainingConfig:
    return TrainingConfig(
        lambda_sd=1.0,
        lambda_ce=lambda_ce,
        iterations=800,
        learning_rate=1.0,
        num_tokens=NUM_TOKENS,
        temperature=20.0,
        seed=seed,
    )


@lru_cache(maxsize=None)
def shared_handles():
    encoders = ToyDualEncoder()
    backbone = ToyDiffusionBackbone()
    vectors = tuple(attribute_embedding(a, encoders) for a in TOY_ATTRIBUTES)
    subspace = build_subspace(list(vectors), attributes=TOY_ATTRIBUTES)
    return encoders, backbone, subspace


@lru_cache(maxsize=None)
def training_images():
    return tuple(concept_images(5, seed=10))


@lru_cache(maxsize=None)
def heldout_positives():
    return tuple(concept_images(32, seed=99))


@lru_cache(maxsize=None)
def negatives_for(seed: int, heldout: bool = False):
    encoders, backbone, _ = shared_handles()
    base = 777 if heldout else 1234
    return tuple(sample_negatives(PARENT, 32, backbone, encoders, seed=base + seed))


@lru_cache(maxsize=None)
def trained(lambda_ce: float, seed: int, projected: bool = True):
    encoders, backbone, subspace = shared_handles()
    return train_token(
        list(training_images()),
        PARENT,
        subspace if projected else None,
        recipe_config(lambda_ce, seed),
        encoders,
        backbone,
        negatives=list(negatives_for(seed)) if lambda_ce > 0 else None,
    )
