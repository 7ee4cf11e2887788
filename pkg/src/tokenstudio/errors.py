"""Exception types raised across the toolkit."""


class StudioError(Exception):
    """Base class for all toolkit errors."""


# --- embeddings and subspaces ---

class UnknownToken(StudioError):
    """A word contains sub-tokens that are not in the vocabulary."""


class RankTooLarge(StudioError):
    """Requested subspace rank exceeds min(sample count, dimension)."""


class DegenerateInput(StudioError):
    """Input vectors contain NaN or infinite entries."""


class DimensionMismatch(StudioError):
    """Vector dimension does not match the expected dimension."""


class EmptyCandidates(StudioError):
    """Attribute selection was given no candidates."""


class ZeroVector(StudioError):
    """A (near-)zero vector where a direction is required."""


# --- prompts and encoders ---

class SlotMissing(StudioError):
    """Prompt template lacks the required token slot."""


class SequenceTooLong(StudioError):
    """Assembled token sequence exceeds the encoder context length."""


class BadImage(StudioError):
    """Image is not decodable at the configured resolution/format."""


class EmptyAttributes(StudioError):
    """An attribute list is required but empty."""


class WeightOutOfRange(StudioError):
    """Composition weight outside [0, 1]."""


class UnsupportedBackbone(StudioError):
    """Backbone spec names a kind that cannot be loaded."""


# --- diffusion and training ---

class EmptyBatch(StudioError):
    """Diffusion loss called with no images."""


class OneClassMissing(StudioError):
    """Balanced classification needs at least one image per class."""


class EmptyTrainingSet(StudioError):
    """Training requires at least one concept image."""


class NonFiniteLoss(StudioError):
    """Training loss became NaN or infinite."""


# --- weight search and retrieval ---

class NoWeights(StudioError):
    """Weight search called with an empty grid."""


class EmptyIndex(StudioError):
    """Ranking against an index with no entries."""


class DuplicateId(StudioError):
    """Two index entries share an image id."""


class EmptyInput(StudioError):
    """A metric was called with no observations."""


# --- service ---

class NoImages(StudioError):
    """Concept ingestion requires at least one image."""


class UnknownConcept(StudioError):
    """Referenced concept id does not exist."""


class UnknownJob(StudioError):
    """Referenced job id does not exist."""


class UnknownIndex(StudioError):
    """Referenced index id does not exist."""


class ConceptBusy(StudioError):
    """A training job is already running for this concept."""


class ConceptNotTrained(StudioError):
    """The operation needs a trained token but the concept has none yet."""
