"""Bounds on marginal treatment effects when the binary treatment is misclassified."""

__version__ = "0.1.0"

from .core import GridSpec, ObservationTable, common_support_trim, leave_one_out_rate, load_table, save_table
from .regress import FePolyFit, fit_fe_poly, naive_iv
from .liv import LivCurve, PsFit, RfFit, fit_outcome_rf, fit_ps, liv_curve
from .bounds import (
    BoundsBand,
    ScaledFamily,
    TeBounds,
    breakdown_c,
    intersect_bands,
    max_plausible_c,
    mte_sign,
    te_bounds,
    theta1_band,
    theta2_family,
    verify_sharp_candidate,
)
from .late import LateDeltas, late_band, late_deltas
from .simulate import (
    McConfig,
    McReport,
    design_truth,
    counterexample_index_sufficiency,
    counterexample_monotonicity,
    gen_threshold_design,
    gen_differential_me,
    iv_weight_integral,
    run_mc,
)
from .infer import BootBand, bootstrap_bands

__all__ = [
    "GridSpec", "ObservationTable", "common_support_trim", "leave_one_out_rate", "load_table", "save_table",
    "FePolyFit", "fit_fe_poly", "naive_iv",
    "LivCurve", "PsFit", "RfFit", "fit_outcome_rf", "fit_ps", "liv_curve",
    "BoundsBand", "ScaledFamily", "TeBounds", "breakdown_c", "intersect_bands", "max_plausible_c", "mte_sign",
    "te_bounds", "theta1_band", "theta2_family", "verify_sharp_candidate",
    "LateDeltas", "late_band", "late_deltas",
    "McConfig", "McReport", "design_truth", "counterexample_index_sufficiency", "counterexample_monotonicity",
    "gen_threshold_design", "gen_differential_me", "iv_weight_integral", "run_mc",
    "BootBand", "bootstrap_bands",
]
