"""Calibrated, input-dependent skewed uncertainty for point predictions."""
from .distributions import DistributionFamily, DistributionParams, cdf, pdf, quantile, sample
from .pipeline import CalibrationModel, calibrate, evaluate, predict_intervals
from .scoring import accrue_loss, al_crps, gaussian_crps, reliability_score_uniform, tpg_crps
from .synthetic import Dataset, Scenario, generate

__version__ = "0.1.0"
