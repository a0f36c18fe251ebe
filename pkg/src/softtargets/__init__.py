"""Low-rank and sparse enhancement of classifier posteriors.

A desk-scale pipeline for turning a softmax classifier's outputs into
denoised soft targets (per-class log-domain PCA projection or per-class
dictionary-based sparse coding), retraining on those targets, and augmenting
with forward-pass targets on unlabeled pools.
"""

from .corpus import (Corpus, CorpusConfig, CorpusGeometry, bayes_posteriors,
                     generate, oracle_bayes_accuracy)
from .errors import (DegenerateReconstructionError, NumericalError,
                     RejectedInputError, SoftTargetsError)
from .linalg import EigDecomposition, covariance, effective_rank, mat_mul, sym_eig
from .lowrank import (LowRankBasis, LowRankEnhancer, class_log_rank,
                      compute_basis, enhance_matrix, low_rank_enhance)
from .mlp import (MlpModel, SoftTargetMlp, TrainConfig, TrainHistory, forward,
                  forward_batch, frame_accuracy, init_mlp, one_hot,
                  soft_cross_entropy, train)
from .pipeline import (DataSource, EnhanceResult, RunReport, SystemSpec,
                       format_table, forward_pass_targets, run_ladder,
                       run_system0, supervised_enhance)
from .posteriors import (ClassPosteriorMatrix, group_by_class, log_floor,
                         make_posterior, quantize_rows, quantize_store)
from .sparse import (SparseCode, SparseDictionary, SparseEnhancer,
                     default_atom_count, kkt_violation, learn_dictionary,
                     sparse_code, sparse_reconstruct)

__version__ = "0.1.0"

__all__ = [
    "ClassPosteriorMatrix", "Corpus", "CorpusConfig", "CorpusGeometry",
    "DataSource", "DegenerateReconstructionError", "EigDecomposition",
    "EnhanceResult", "LowRankBasis", "LowRankEnhancer", "MlpModel",
    "NumericalError", "RejectedInputError", "RunReport", "SoftTargetMlp",
    "SoftTargetsError", "SparseCode", "SparseDictionary", "SparseEnhancer",
    "SystemSpec", "TrainConfig", "TrainHistory", "bayes_posteriors",
    "class_log_rank", "compute_basis", "covariance", "default_atom_count",
    "effective_rank", "enhance_matrix", "format_table", "forward",
    "forward_batch", "forward_pass_targets", "frame_accuracy", "generate",
    "group_by_class", "init_mlp", "kkt_violation", "learn_dictionary",
    "log_floor", "low_rank_enhance", "make_posterior", "mat_mul", "one_hot",
    "oracle_bayes_accuracy", "quantize_rows", "quantize_store", "run_ladder",
    "run_system0", "soft_cross_entropy", "sparse_code", "sparse_reconstruct",
    "supervised_enhance", "sym_eig", "train",
]
