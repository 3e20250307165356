"""Submodular information losses for few-shot representation learning."""

from .kernel import (
    EmbeddingMatrix,
    KernelSpec,
    SimilarityMatrix,
    build_similarity_matrix,
    cosine_similarity,
    kernel_gradient,
)
from .loss import (
    LossConfig,
    LossResult,
    finite_difference_check,
    l_comb,
    l_inter,
    l_intra,
    supcon_baseline,
    total_objective,
)
from .setfn import (
    ClassPartition,
    SetFunctionSpec,
    check_monotonicity,
    check_submodularity,
    facility_location,
    generic_mutual_information,
    graph_cut,
    total_information,
)
from .smi import SmiSpec, fl_generic_mi, flmi, gcmi

__version__ = "0.1.0"
