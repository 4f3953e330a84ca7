"""Debiased lasso and fused-lasso tests for differences between two Gaussian graphical models."""

from ._diffggm import (
    DataError,
    DebiasMatrices,
    DiffggmError,
    FusedFit,
    GgmPair,
    LassoFit,
    NumericalError,
    PermutationResult,
    QpSolution,
    TestStatMatrix,
    UsageError,
    __version__,
    benchmark,
    estimate_m_joint,
    estimate_m_single,
    generate_ggm_pair,
    null_calibration,
    nodewise_stats,
    permutation_test,
    power_curve,
    sample_dataset,
    select_edges,
    solve_fused,
    solve_lasso,
    solve_qp,
    standardize,
)

__all__ = [name for name in dir() if not name.startswith("_")] + ["__version__"]
