"""Distributed multi-radar Bayesian localization and tracking simulator."""

from ._core import (
    ConfigurationError,
    NumericError,
    RadarPose,
    Scenario,
    combine_gaussians,
    conventional_estimate,
    fit_data_message,
    global_to_local,
    local_to_global,
    montecarlo,
    predict,
    process_noise_precision,
    simulate,
    snr_at,
    synthesize_pulse,
    two_way_delay,
    update_lambda_a,
)

__all__ = [
    "ConfigurationError",
    "NumericError",
    "RadarPose",
    "Scenario",
    "combine_gaussians",
    "conventional_estimate",
    "fit_data_message",
    "global_to_local",
    "local_to_global",
    "montecarlo",
    "predict",
    "process_noise_precision",
    "simulate",
    "snr_at",
    "synthesize_pulse",
    "two_way_delay",
    "update_lambda_a",
]

__version__ = "0.1.0"
