from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tokenstudio import ToyDiffusionBackbone, ToyDualEncoder, attribute_embedding, build_subspace

settings.register_profile(
    "fast", max_examples=30, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("fast")

# Attribute list for the shared toy subspace; fixed so fingerprints are stable.
TOY_ATTRIBUTES = (
    "red", "blue", "green", "yellow", "ceramic", "metal", "wooden", "glass",
    "shiny", "old", "new", "small", "large", "bright", "dark", "plain",
    "smooth", "round", "flat", "modern",
)


@pytest.fixture(scope="session")
def encoders() -> ToyDualEncoder:
    return ToyDualEncoder()


@pytest.fixture(scope="session")
def backbone() -> ToyDiffusionBackbone:
    return ToyDiffusionBackbone()


@pytest.fixture(scope="session")
def attribute_vectors(encoders) -> list[np.ndarray]:
    return [attribute_embedding(a, encoders) for a in TOY_ATTRIBUTES]


@pytest.fixture(scope="session")
def toy_subspace(attribute_vectors):
    return build_subspace(attribute_vectors, attributes=TOY_ATTRIBUTES)
