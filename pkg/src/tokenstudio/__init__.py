"""tokenstudio: learn composable concept tokens for generation, recognition,
and text-to-image retrieval, with a generation-aided query weight search."""

from .embedding import (
    AffinityReport,
    AttributeSubspace,
    NormReport,
    TokenEmbedding,
    affinity,
    attribute_embedding,
    build_subspace,
    load_subspace,
    norm_report,
    project,
    save_subspace,
    select_attributes,
)
from .encoders import (
    ComposedQuery,
    ConditionVector,
    PromptTemplate,
    ToyDualEncoder,
    assemble,
    compose_query,
    encode_image,
    encode_text,
    load_encoder,
    score,
)
from .diffusion import (
    NoiseSchedule,
    ToyDiffusionBackbone,
    ToyLatentCodec,
    load_diffusion,
)
from .training import (
    TrainingBatch,
    TrainingConfig,
    TrainingContext,
    TrainResult,
    classification_loss,
    load_token,
    sample_negatives,
    save_token,
    token_vs_parent_accuracy,
    total_loss,
    train_token,
)
from .gair import GairRequest, GairResult, context_images, default_weight_grid, run_gair
from .retrieval import (
    EvalReport,
    RetrievalIndex,
    auc_roc,
    build_index,
    load_index,
    mrr,
    object_context_accuracy,
    rank,
    rank_with_scores,
    read_manifest,
    recognition_splits,
    save_index,
)

__version__ = "0.1.0"
