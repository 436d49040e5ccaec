"""Monte-Carlo experiment harness and command-line interface."""
from .config import ExperimentConfig, config_from_dict, load_config
from .experiments import (run_ber_vs_snr, run_cir_snapshot, run_experiment, run_mse_vs_snr,
                          run_recovery_vs_g)
from .metrics import demodulate, mse, qpsk_ber_theory

__all__ = ["ExperimentConfig", "config_from_dict", "load_config", "run_ber_vs_snr",
           "run_cir_snapshot", "run_experiment", "run_mse_vs_snr", "run_recovery_vs_g",
           "demodulate", "mse", "qpsk_ber_theory"]
