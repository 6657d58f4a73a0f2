"""Experiment configuration, generators, data loaders and the study runner."""
from .config import ExperimentConfig, ExperimentKind, load_config, parse_config_text
from .data import fit_gaussian, fit_gmm_from_labels, load_csv_series, load_idx, load_mnist
from .experiments import ExperimentOutcome, TrialResult, run_experiment, write_outputs
from .generators import gen_colored_noise_cov, gen_lowrank_cov, gen_rank_cov

__all__ = [
    "ExperimentConfig", "ExperimentKind", "load_config", "parse_config_text", "fit_gaussian",
    "fit_gmm_from_labels", "load_csv_series", "load_idx", "load_mnist", "ExperimentOutcome",
    "TrialResult", "run_experiment", "write_outputs", "gen_colored_noise_cov", "gen_lowrank_cov",
    "gen_rank_cov",
]
