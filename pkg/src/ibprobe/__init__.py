"""Information-bottleneck diagnostics for toy discrete-latent generators."""

from .codebook import (
    Codebook,
    CodebookSubset,
    Scheme,
    SubsetPolicy,
    UsageHistogram,
    build_quantizer,
    codebook_entropy,
    explicit_codebook,
    quantize,
    restrict,
)
from .generation import (
    Argmax,
    ArPath,
    Condition,
    DiffPath,
    EnumerationBoundError,
    GenerationPath,
    GeneratorSpec,
    LengthTag,
    MimPath,
    Staged,
    StageWindow,
    Stochastic,
    Strategy,
    TokenGrid,
    ToyWorld,
    ar_generate,
    decode,
    diff_generate,
    enumerate_outcomes,
    mim_generate,
    sample,
    schedule_counts,
)
from .entropy import (
    EntropyReport,
    Estimator,
    decompose,
    diffusion_path_entropy,
    identity_audit,
    mc_estimate,
    mim_path_entropy,
    shannon,
)
from .metrics import (
    DiversityReport,
    ProxyResult,
    diversity_report,
    one_minus_ssim,
    pairwise_diversity,
    pixel_cosine_distance,
    quality_proxy,
    ssim,
    token_hamming,
)
from .probes import (
    ArgmaxProbe,
    ArgmaxStage,
    ExperimentSettings,
    ParaphraseMode,
    ParaphraseProbe,
    ProbeResult,
    SubsetProbe,
    apply_probe,
    base_settings,
    paraphrase_set,
    run_probe,
)
from .analysis import (
    Archetype,
    ArchetypeEvidence,
    ArchetypeLabel,
    FactorialGrid,
    InteractionProfile,
    SweepResult,
    WaterfallReport,
    archetype_evidence,
    build_factorial_grid,
    classify_archetype,
    enhancement_sweep,
    interaction_profiles,
    ratio_sweep,
    waterfall,
)
from .reference import (
    ARCHETYPE_EXPECTATIONS,
    REFERENCE_WORLDS,
    ar_reference,
    diff_reference,
    mim_reference,
)

__version__ = "0.1.0"
