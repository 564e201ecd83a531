"""Heteroscedasticity-aware residuals-based SAA and DRO for contextual stochastic programs."""

from .datagen import Dataset, TruthSpec, read_dataset, sample, write_dataset
from .dro import AmbiguitySet, solve_dro_newsvendor, worst_case_expectation
from .harness import (ExperimentConfig, audit_bounds, estimate_rate, estimate_tails,
                      run_experiment, run_replication)
from .regression import fit_models, truth_models
from .residuals import (ScenarioSet, SupportBox, build_er_scenarios, build_fi_scenarios,
                        deviation_report, standardized_residuals)
from .stochprog import NewsvendorProblem, TwoStageLP, evaluate_cost, solve_saa, true_value

__all__ = [
    "AmbiguitySet", "Dataset", "ExperimentConfig", "NewsvendorProblem", "ScenarioSet",
    "SupportBox", "TruthSpec", "TwoStageLP", "audit_bounds", "build_er_scenarios",
    "build_fi_scenarios", "deviation_report", "estimate_rate", "estimate_tails", "evaluate_cost",
    "fit_models", "read_dataset", "run_experiment", "run_replication", "sample", "solve_saa",
    "solve_dro_newsvendor", "standardized_residuals", "true_value", "truth_models",
    "worst_case_expectation", "write_dataset",
]
