"""Wideband terahertz multi-carrier hybrid beamforming simulator."""

from .beamformer import HybridBeamformer
from .channel import (AbsorptionModel, ChannelRealization, PathComponent, UpaGeometry,
                      equivalent_array_gain, path_gain, realize_channel, steering_vector)
from .codebook import run_codebook_scheme
from .config import SweepSpec, SystemConfig, desk_config, full_config, load_config
from .eigen import run_eigen_scheme
from .harness import SchemeContext, emit_results, parse_results, run_scheme, run_sweep, simulate
from .multicarrier import SchemeResult, ibi_coefficients, sinr_per_subcarrier
from .robust import inject_estimation_error, run_robust_scheme

__all__ = [
    "AbsorptionModel", "ChannelRealization", "HybridBeamformer", "PathComponent",
    "SchemeContext", "SchemeResult", "SweepSpec", "SystemConfig", "UpaGeometry", "desk_config",
    "emit_results", "equivalent_array_gain", "full_config", "ibi_coefficients",
    "inject_estimation_error", "load_config", "parse_results", "path_gain", "realize_channel",
    "run_codebook_scheme", "run_eigen_scheme", "run_robust_scheme", "run_scheme", "run_sweep",
    "simulate", "sinr_per_subcarrier", "steering_vector",
]
