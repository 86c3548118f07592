"""promptfuse: a prompt-fusion engine for open-set classification.

The package ingests multi-modal prompt banks (text and image embeddings
per category), adapts each category's prompts to a target image's patch
features, randomly masks and fuses the two modalities, and classifies
region features against the fused prompts.  A seed-fixed synthetic
benchmark reproduces the cross-modality robustness trends at desk scale.

Typical flow::

    from promptfuse import (
        Modality, TpdwConfig, Scenario, ScenarioTag,
        run_tpdw, scenario_mask, apply_mask, fuse, classify,
    )

    text_final = run_tpdw(patches, bank, TpdwConfig(), Modality.TEXT)
    image_final = run_tpdw(patches, bank, TpdwConfig(), Modality.IMAGE)
    mask = scenario_mask(Scenario(ScenarioTag.FUSED), bank.categories)
    fused = fuse(*apply_mask(text_final, image_final, mask))
    results = classify(proposals, fused)
"""

from .bank import (
    CategoryEntry,
    Modality,
    PromptBank,
    Violation,
    load_bank,
    mean_embedding,
    save_bank,
    validate_bank,
)
from .bench import (
    MetricsReport,
    SyntheticWorld,
    WorldConfig,
    generate_world,
    oracle_classify,
    run_benchmark,
)
from .classifier import (
    ClassificationResult,
    ImageSample,
    ProjectionHead,
    Proposal,
    classify,
    contrastive_loss,
    dataset_loss,
    predict_ids,
    train_head,
)
from .core import arg_top_k, cosine_similarity, l2_normalize, softmax
from .errors import (
    BankFormatError,
    DegenerateFusionError,
    DegenerateInputError,
    ExcludedCategoryError,
    PromptfuseError,
    TrainingDivergedError,
)
from .fusion import (
    FusedPromptSet,
    MaskEntry,
    MaskSpec,
    Scenario,
    ScenarioTag,
    apply_mask,
    fuse,
    fuse_with_report,
    sample_prm_mask,
    scenario_mask,
)
from .tpdw import (
    FinalPrompt,
    FinalPromptSet,
    TpdwConfig,
    rough_scores,
    run_tpdw,
    select_candidates,
    weight_category,
)

__version__ = "0.1.0"

__all__ = [
    "BankFormatError",
    "CategoryEntry",
    "ClassificationResult",
    "DegenerateFusionError",
    "DegenerateInputError",
    "ExcludedCategoryError",
    "FinalPrompt",
    "FinalPromptSet",
    "FusedPromptSet",
    "ImageSample",
    "MaskEntry",
    "MaskSpec",
    "MetricsReport",
    "Modality",
    "ProjectionHead",
    "PromptBank",
    "PromptfuseError",
    "Proposal",
    "Scenario",
    "ScenarioTag",
    "SyntheticWorld",
    "TpdwConfig",
    "TrainingDivergedError",
    "Violation",
    "WorldConfig",
    "apply_mask",
    "arg_top_k",
    "classify",
    "contrastive_loss",
    "cosine_similarity",
    "dataset_loss",
    "fuse",
    "fuse_with_report",
    "generate_world",
    "l2_normalize",
    "load_bank",
    "mean_embedding",
    "oracle_classify",
    "predict_ids",
    "rough_scores",
    "run_benchmark",
    "run_tpdw",
    "sample_prm_mask",
    "save_bank",
    "scenario_mask",
    "select_candidates",
    "softmax",
    "train_head",
    "validate_bank",
    "weight_category",
]
