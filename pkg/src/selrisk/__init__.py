"""Selective risk control: BH as a fixed point, decision/selection games,
FDR curves and budgeted permutation BH."""

from .core import (
    AdjustmentRule,
    ContractingViolation,
    EmptySelectionError,
    LevelError,
    NonTermination,
    SelectionError,
    SelectionMask,
    adjusted_level,
    harmonic_adjustment,
    harmonic_number,
    normal_cdf,
    normal_quantile,
)
from .fdrcurve import (
    FdrCurve,
    PValueFunction,
    curve_table,
    gaussian_shift,
    improved_curve_gaussian,
    improved_curve_general,
    p_sup,
    q_bh_curve,
    run_fdr_curve,
)
from .fixed_point import ByIterationTrace, bh_iterate_pvalues, bh_step_up, bh_threshold, by_iterate, by_upper_bounds
from .framework import (
    DecisionStrategy,
    GameTrace,
    SelectionStrategy,
    Sign,
    StrategyPair,
    balance_pair,
    directional_pair,
    group_fwe_pair,
    pair_from_config,
    partial_conjunction_pair,
    run_extra_selection,
    run_post_selection,
    threshold_pair,
)
from .multirisk import MultiTrace, run_parallel_intersection, run_sequential_composition
from .permtest import (
    BudgetSchedule,
    PermRunReport,
    PermutationTask,
    exhaustive_perm_pvalue,
    perm_pvalue,
    run_accelerated_bh,
    run_fixed_m_bh,
    schedule,
    two_sample_meandiff,
)
from .simlab import (
    GroundTruth,
    RiskEstimate,
    enumerate_fixed_points,
    estimate_fcr,
    estimate_fdp_risk,
    estimate_fdr_curve,
    simulate_gaussian,
)

__version__ = "0.1.0"
