"""Anchor-regression fingerprints for robust detection and attribution of forced climate signals."""
from .anchor import (LINEAR, QUADRATIC, AnchorBasis, AnchorProjection, Fingerprint, HyperParams, anchor_ridge,
                     build_projection, fit, fit_iv_limit, objective, predict, solve_ridge, transform)
from .dataset import (Dataset, GroupSplit, PreprocessingState, RunMeta, apply_preprocessing, center_columns,
                      center_runs, center_targets, concat, dataset_digest, load_dataset, preprocess, save_dataset,
                      split_models, standardize)
from .diagnostics import (DiagnosticsReport, correlation_ratio, diagnostics_report, mutual_info, rmse,
                          rmse_anchor_span, spearman, variance_decomposition)
from .errors import (AnchorFPError, ConfigError, DatasetError, PreprocessingError, RankDeficientError,
                     SingularSystemError, UndefinedStatisticError)
from .hyptest import (NullEstimate, TestConfig, TestReport, estimate_null, evaluate_ensemble, evaluate_model,
                      full_test, run_statistic, threshold)
from .scm import (Intervention, ScmSpec, co2_ramp, ensemble, generate, make_loadings, motivating_scenario,
                  quadratic_scenario, solar_radiative_forcing)
from .selection import (Grid, ObjectiveTable, SubagEnsemble, cv_objectives, kfold_groups, pareto_mask,
                        select_weighted_l2, subag)

__version__ = "0.1.0"
