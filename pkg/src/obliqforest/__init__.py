"""Accelerated oblique random survival forests with variable importance."""

from .coxscore import CoxStepResult, newton_raphson_fit, newton_raphson_step
from .forest import Forest, ForestParams, fit, load, oob_predict, predict_mortality, predict_survival, save
from .importance import VIReport, anova_vi, negation_vi, permutation_vi, vi_discrimination
from .metrics import brier_t, evaluate, harrell_c, integrated_brier, ipa, td_c_statistic
from .obliquetree import GrowParams, ObliqueTree
from .simgen import SimConfig, SimData, simulate
from .survdata import DataError, SurvivalDataset, load_csv, write_csv

__version__ = "0.1.0"

__all__ = [
    "CoxStepResult", "DataError", "Forest", "ForestParams", "GrowParams", "ObliqueTree",
    "SimConfig", "SimData", "SurvivalDataset", "VIReport", "anova_vi", "brier_t", "evaluate",
    "fit", "harrell_c", "integrated_brier", "ipa", "load", "load_csv", "negation_vi",
    "newton_raphson_fit", "newton_raphson_step", "oob_predict", "permutation_vi",
    "predict_mortality", "predict_survival", "save", "simulate", "td_c_statistic",
    "vi_discrimination", "write_csv",
]
