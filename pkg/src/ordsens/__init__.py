"""Sensitivity analysis for an ordinal covariate that may be missing
not at random: impute under MAR, shift the latent-scale thresholds by
user-chosen deltas, reanalyze, and pool.
"""

__version__ = "0.1.0"

from .adjust import AdjustedImputationSet, DeltaSpec, adjust, classify_latent
from .analyze import (OutcomeFit, PooledEstimate, compute_icc, fit_outcome,
                      pool_rubin)
from .data import Dataset, StratumKey, load_csv, write_csv
from .diagnostics import (CategoryProfile, delta_grid_scan,
                          missing_category_profile, plausibility_flags,
                          total_variation)
from .exceptions import (ConvergenceError, DivergenceError, DrawError,
                         OrdsensError, SchemaError, SeparationError)
from .impute import (GibbsConfig, ImputationSet, impute_mar_flat,
                     impute_mar_hier)
from .ordinal import OrdinalFit, ParamDraw, fit_imputation_model

__all__ = [
    "__version__",
    "AdjustedImputationSet", "DeltaSpec", "adjust", "classify_latent",
    "OutcomeFit", "PooledEstimate", "compute_icc", "fit_outcome", "pool_rubin",
    "Dataset", "StratumKey", "load_csv", "write_csv",
    "CategoryProfile", "delta_grid_scan", "missing_category_profile",
    "plausibility_flags", "total_variation",
    "ConvergenceError", "DivergenceError", "DrawError", "OrdsensError",
    "SchemaError", "SeparationError",
    "GibbsConfig", "ImputationSet", "impute_mar_flat", "impute_mar_hier",
    "OrdinalFit", "ParamDraw", "fit_imputation_model",
]
