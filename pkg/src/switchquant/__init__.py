"""Stability certificates for sampled-data switched linear systems under
finite-level static quantization.

The package synthesizes a common quadratic Lyapunov function with a
randomized gradient search, derives growth-rate and dwell-time bounds for
the mode-mismatch windows opened by intersample switching, and verifies
everything against exact piecewise-exponential closed-loop simulations.
"""

from .bounds import (DwellRates, StabilityBounds, dwell_time_rates,
                     intersample_drift_gain, mismatch_growth_rate,
                     quantization_error_gain, quantized_drive_gain,
                     refined_gains, sampled_norm_gain, sampling_contraction,
                     stability_bounds)
from .errors import (CertificateError, ConditionViolatedError, ConfigError,
                     CoverageError, ParameterError, StructuralError,
                     SwitchQuantError, SynthesisError)
from .model import (Mode, Plant, SwitchingSignal, TransitionMatrix,
                    ValidationReport, hold_integral, sample_floor,
                    transition_matrix, validate_plant)
from .quantizer import (Cell, QuantizerPartition, build_log_quantizer,
                        cell_max_deviation, cell_min_norm,
                        cells_covering_ellipsoid, quantization_bits, quantize,
                        quantize_batch)
from .sim import (StabilityVerdict, Trajectory, lyapunov_rate, simulate,
                  stability_verdict, write_trajectory_csv)
from .switching import (BudgetReport, MismatchProfile, adversarial_signal,
                        check_dwell, check_mismatch_budget, mismatch_profile,
                        random_dwell_signal)
from .synthesis import (AlgorithmParams, CheckReport, LyapunovCertificate,
                        RoundRobin, SynthesisOutcome, check_assumption4,
                        decrease_violation, decrease_violation_gradient, flow,
                        load_certificate, project_psd, save_certificate,
                        synthesize)

__version__ = "0.1.0"

__all__ = [
    "AlgorithmParams", "BudgetReport", "Cell", "CertificateError",
    "CheckReport", "ConditionViolatedError", "ConfigError", "CoverageError",
    "DwellRates", "LyapunovCertificate", "MismatchProfile", "Mode",
    "ParameterError", "Plant", "QuantizerPartition", "RoundRobin",
    "StabilityBounds", "StabilityVerdict", "StructuralError",
    "SwitchQuantError", "SwitchingSignal", "SynthesisError",
    "SynthesisOutcome", "Trajectory", "TransitionMatrix", "ValidationReport",
    "adversarial_signal", "build_log_quantizer", "cell_max_deviation",
    "cell_min_norm", "cells_covering_ellipsoid", "check_assumption4",
    "check_dwell", "check_mismatch_budget", "decrease_violation",
    "decrease_violation_gradient", "dwell_time_rates", "flow",
    "hold_integral", "intersample_drift_gain", "load_certificate",
    "lyapunov_rate", "mismatch_growth_rate", "mismatch_profile",
    "project_psd", "quantization_bits", "quantization_error_gain",
    "quantize", "quantize_batch", "quantized_drive_gain", "random_dwell_signal",
    "refined_gains", "sample_floor", "sampled_norm_gain",
    "sampling_contraction", "save_certificate", "simulate",
    "stability_bounds", "stability_verdict", "synthesize",
    "transition_matrix", "validate_plant", "write_trajectory_csv",
]
