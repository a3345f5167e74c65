"""Late-fusion multimodal emotion classifiers over pre-extracted embeddings.

The library trains and evaluates seven classifier architectures (two
unimodal baselines, score and concatenation fusion, and three multi-head
cross-attention fusions) on bundles of paralinguistic and semantic
embedding matrices, with hand-derived gradients, speaker-disjoint
cross-validation and unweighted-accuracy metrics. See the demos/ directory
for narrative walkthroughs of each capability.
"""

from .alignment import (
    AlignmentSpec,
    align_characters,
    align_subwords,
    apply_alignment,
    character_frame_counts,
)
from .dataio import (
    LABELS,
    BadMagicError,
    BundleError,
    DuplicateIdError,
    FoldPlan,
    NonFinitePayloadError,
    SegmentRecord,
    ShapeMismatchError,
    SynthSpec,
    TruncatedPayloadError,
    UnsupportedVersionError,
    make_folds,
    partial_info_means,
    read_bundle,
    synth_generate,
    write_bundle,
)
from .fusion import (
    ARCHITECTURES,
    FusionModel,
    ModelConfig,
    MultiHeadAttentionParams,
    concat_fusion_forward,
    count_params,
    cross_attention_forward,
    init_params,
    model_forward,
    model_grad,
    model_loss,
    multi_head_attention,
    scaled_dot_attention,
    score_fusion_forward,
    unimodal_forward,
)
from .numkit import (
    AdamState,
    HeadParams,
    adam_step,
    clip_global_norm,
    cross_entropy,
    finite_diff_grad,
    global_norm,
    head_forward,
    mean_over_positions,
    softmax_rows,
)
from .train import (
    Hyper,
    Metrics,
    combine_folds,
    evaluate,
    load_model,
    save_model,
    train_all_folds,
    train_fold,
)

__version__ = "0.1.0"
