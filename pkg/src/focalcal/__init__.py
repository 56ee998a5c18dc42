"""Calibration toolkit: focal calibration loss family, exact calibration
metrics, temperature scaling, post-processing-gap estimation, simplex risk
minimizers, and a deterministic toy training harness."""

from .calibrate import (PGapResult, PostProcessMap, TemperatureScanResult,
                        apply_temperature, pgap, temperature_scan)
from .data import (LabeledPoint, PredictionSet, SyntheticConfig, gen_gauss2,
                   gen_moons, load_predictions)
from .losses import LossEval, LossSpec, entropy_bound_check, eval_loss, eval_loss_grad
from .metrics import (BinningConfig, BinSummary, LipschitzWitness, MetricReport,
                      adaece, auroc, bin_predictions, classwise_ece, compute_report,
                      ece, mce, reliability_table, score_metrics, smce)
from .theory import (MinimizerResult, SigmaSpec, minimize_risk, oc_uc_bound,
                     optimal_curve, order_preservation_check, pointwise_risk,
                     sigma_eval, sigma_root)
from .train import MLPConfig, ModelState, decision_grid, lambda_sweep, train

__all__ = [
    "PGapResult", "PostProcessMap", "TemperatureScanResult", "apply_temperature",
    "pgap", "temperature_scan", "LabeledPoint", "PredictionSet", "SyntheticConfig",
    "gen_gauss2", "gen_moons", "load_predictions", "LossEval", "LossSpec",
    "entropy_bound_check", "eval_loss", "eval_loss_grad", "BinningConfig",
    "BinSummary", "LipschitzWitness", "MetricReport", "adaece", "auroc",
    "bin_predictions", "classwise_ece", "compute_report", "ece", "mce",
    "reliability_table", "score_metrics", "smce", "MinimizerResult", "SigmaSpec",
    "minimize_risk", "oc_uc_bound", "optimal_curve", "order_preservation_check",
    "pointwise_risk", "sigma_eval", "sigma_root", "MLPConfig", "ModelState",
    "decision_grid", "lambda_sweep", "train",
]

__version__ = "0.1.0"
