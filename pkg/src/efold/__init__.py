"""e-fold cross-validation: k-fold CV with CI-based early stopping.

Pipeline modules: data (loading/preprocessing), folding (stratified
partitions), models + metrics (Pop / item-kNN, NDCG@n), core (the stopping
rule), simulate (permutation study), cache + cli (artifact plumbing).
"""

from ._backend import active_backend_name, get_kernels
from .cache import CacheRow, ScoreCache, sequences_from_cache
from .core import (
    CITrace,
    EfoldConfig,
    EfoldResult,
    ci_of_mean,
    energy_fraction,
    result_to_dict,
    run_efold,
    should_stop,
)
from .data import (
    Dataset,
    DatasetStats,
    Interaction,
    TableFormat,
    compute_stats,
    density_percent,
    load_interactions,
    prune_kcore,
    to_implicit,
    write_canonical,
)
from .errors import EfoldError
from .folding import (
    DatasetView,
    FoldSplit,
    PartitionPlan,
    load_plan,
    make_partition_plan,
    materialize_fold,
    save_plan,
)
from .metrics import FoldScore, evaluate_fold, ndcg_at_n, user_item_csr
from .models import (
    ExternalScoreTable,
    ItemKnnModel,
    PopModel,
    itemknn_score,
    itemknn_train,
    load_external_scores,
    pop_train,
)
from .simulate import (
    PermutationSet,
    RankingReport,
    ScoreSequence,
    SimulationReport,
    build_ranking,
    kendall_tau,
    percentage_diff,
    rank_algorithms,
    sample_permutations,
    simulate_all,
    simulate_one,
)
from .stats import student_t_ppf, student_t_two_sided

__version__ = "0.1.0"

__all__ = [
    "CITrace",
    "CacheRow",
    "Dataset",
    "DatasetStats",
    "DatasetView",
    "EfoldConfig",
    "EfoldError",
    "EfoldResult",
    "ExternalScoreTable",
    "FoldScore",
    "FoldSplit",
    "Interaction",
    "ItemKnnModel",
    "PartitionPlan",
    "PermutationSet",
    "PopModel",
    "RankingReport",
    "ScoreCache",
    "ScoreSequence",
    "SimulationReport",
    "TableFormat",
    "active_backend_name",
    "build_ranking",
    "ci_of_mean",
    "compute_stats",
    "density_percent",
    "energy_fraction",
    "evaluate_fold",
    "get_kernels",
    "itemknn_score",
    "itemknn_train",
    "kendall_tau",
    "load_external_scores",
    "load_interactions",
    "load_plan",
    "make_partition_plan",
    "materialize_fold",
    "ndcg_at_n",
    "percentage_diff",
    "pop_train",
    "prune_kcore",
    "rank_algorithms",
    "result_to_dict",
    "run_efold",
    "sample_permutations",
    "save_plan",
    "sequences_from_cache",
    "should_stop",
    "simulate_all",
    "simulate_one",
    "student_t_ppf",
    "student_t_two_sided",
    "to_implicit",
    "user_item_csr",
    "write_canonical",
]
