"""Topological dimension from regularized score models.

Train score networks with a spectral-norm (Dirichlet energy) penalty on
synthetic manifolds, probe them adversarially to read off per-point local
dimension, and compare against classical kNN estimators.  Closed-form
Gaussian machinery provides exact references for every moving part.
"""

from .attacks import AttackConfig, ProbeResult, pgd_l2, random_l2
from .baselines import (KNNIndex, baseline_mse, knn_distances, mind_ml,
                        mle_levina_bickel, write_baseline_csv)
from .diffusion import (FixedSchedule, VPSchedule, decay, dsm_target,
                        kernel_stats, parse_schedule_id, perturb, schedule_id,
                        weight)
from .dirichlet import (LossBreakdown, PowerIterationResult, TrainConfig,
                        TrainingDiverged, TrainingState, TrainResult,
                        de_penalty, jacobian_power_iteration,
                        load_training_state, regularized_dsm_loss,
                        save_training_state, single_scale_config, train,
                        write_training_log)
from .gaussian import (GaussianDensity, LinearScore, LocalSplit,
                       build_anisotropic_oracle_score, fixed_point_slope,
                       gaussian_entropy, gaussian_score, kl_isotropic,
                       solve_linear_fixed_point)
from .manifolds import (DatasetFormatError, ManifoldSample,
                        NormalizationStats, export_csv, gen_hyper_twin_peaks,
                        gen_isolated_point, gen_isotropic_gaussian,
                        gen_line_disk_ball, gen_swirl, ldb_region_labels,
                        load_sample, normalize, save_sample)
from .score_model import (CheckpointFormatError, CheckpointMeta,
                          OptimizerState, ScoreModel, forward, grad_params,
                          init_model, init_optimizer, learning_rate,
                          linear_model, load_checkpoint, opt_step,
                          save_checkpoint, vjp_input)
from .td import (TDEstimate, estimate_td, estimate_td_batch,
                 estimate_td_over_time, evaluate_mse, invert_slope,
                 write_results_csv)

__version__ = "0.1.0"

__all__ = [
    "AttackConfig", "ProbeResult", "pgd_l2", "random_l2",
    "KNNIndex", "baseline_mse", "knn_distances", "mind_ml",
    "mle_levina_bickel", "write_baseline_csv",
    "FixedSchedule", "VPSchedule", "decay", "dsm_target", "kernel_stats",
    "parse_schedule_id", "perturb", "schedule_id", "weight",
    "LossBreakdown", "PowerIterationResult", "TrainConfig",
    "TrainingDiverged", "TrainingState", "TrainResult", "de_penalty",
    "jacobian_power_iteration", "load_training_state",
    "regularized_dsm_loss", "save_training_state", "single_scale_config",
    "train", "write_training_log",
    "GaussianDensity", "LinearScore", "LocalSplit",
    "build_anisotropic_oracle_score", "fixed_point_slope",
    "gaussian_entropy", "gaussian_score", "kl_isotropic",
    "solve_linear_fixed_point",
    "DatasetFormatError", "ManifoldSample", "NormalizationStats",
    "export_csv", "gen_hyper_twin_peaks", "gen_isolated_point",
    "gen_isotropic_gaussian", "gen_line_disk_ball", "gen_swirl",
    "ldb_region_labels", "load_sample", "normalize", "save_sample",
    "CheckpointFormatError", "CheckpointMeta", "OptimizerState",
    "ScoreModel", "forward", "grad_params", "init_model", "init_optimizer",
    "learning_rate", "linear_model", "load_checkpoint", "opt_step",
    "save_checkpoint", "vjp_input",
    "TDEstimate", "estimate_td", "estimate_td_batch",
    "estimate_td_over_time", "evaluate_mse", "invert_slope",
    "write_results_csv",
]
