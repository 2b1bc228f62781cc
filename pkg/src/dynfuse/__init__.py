"""Dynamic multi-process fusion for place recognition over similarity data."""

from .core import (
    FusionConfig,
    GroundTruth,
    SelectionRecord,
    SimilarityTensor,
    TechniqueId,
    argmax_lowest_index,
    minmax_normalize,
    zscore_normalize,
)
from .engine import (
    StrategyResult,
    oracle_best_single,
    oracle_best_static_subset,
    run_best_single_oracle,
    run_dyn_mpf,
    run_full_mpf,
    run_hier_mpf,
    run_random_pair,
    run_static_subset,
)
from .evaluate import (
    AliasingHistogram,
    RecallReport,
    aliasing_histogram,
    frame_separation_sweep,
    recall_at_k,
)
from .fusion import (
    SubsetScore,
    enumerate_subsets,
    fuse_subset,
    ratio_score,
    select_best_subset,
    technique_weights,
    weighted_fuse_and_match,
)
from .ingest import (
    DescriptorMatrix,
    assemble_tensor,
    compute_similarity,
    load_matrix,
    write_matrix,
)
from .synth import SynthSpec, complementary_fixture_spec, drifting_fixture_spec, generate

__version__ = "0.1.0"

__all__ = [
    "AliasingHistogram",
    "DescriptorMatrix",
    "FusionConfig",
    "GroundTruth",
    "RecallReport",
    "SelectionRecord",
    "SimilarityTensor",
    "StrategyResult",
    "SubsetScore",
    "SynthSpec",
    "TechniqueId",
    "aliasing_histogram",
    "argmax_lowest_index",
    "assemble_tensor",
    "complementary_fixture_spec",
    "compute_similarity",
    "drifting_fixture_spec",
    "enumerate_subsets",
    "frame_separation_sweep",
    "fuse_subset",
    "generate",
    "load_matrix",
    "minmax_normalize",
    "oracle_best_single",
    "oracle_best_static_subset",
    "ratio_score",
    "recall_at_k",
    "run_best_single_oracle",
    "run_dyn_mpf",
    "run_full_mpf",
    "run_hier_mpf",
    "run_random_pair",
    "run_static_subset",
    "select_best_subset",
    "technique_weights",
    "weighted_fuse_and_match",
    "write_matrix",
    "zscore_normalize",
]
