"""Sparse tensor recovery from multi-mode compressed measurements."""

from .linalg import SingularGramError, gaussian_matrix, gaussian_tensor, right_pinv, seeded_rng, solve_spd
from .sl0 import (
    DictionarySet,
    RecoveryReport,
    SolverConfig,
    initialize,
    project,
    recover,
    smoothed_norm,
    smoothed_norm_delta,
    snr_db,
)
from .tensor import (
    KroneckerCapError,
    count_nonzero,
    frobenius_norm_sq,
    kron_chain,
    kronecker,
    mode_fold,
    mode_matricize,
    mode_product,
    multi_mode_product,
    tensorize,
    vectorize,
)
from .uniqueness import (
    UniquenessVerdict,
    coherence,
    kron_coherence,
    kron_spark_bound,
    spark_bruteforce,
    spark_coherence_bound,
    uniqueness_check,
)

__version__ = "0.1.0"
