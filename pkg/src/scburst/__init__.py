"""Burst-erasure analysis of spatially coupled LDPC ensembles.

Ensemble sampling, scalar and quantized density evolution, size-2 stopping
set statistics and a peeling-decoder Monte Carlo harness.
"""

__version__ = "0.1.0"

from .burst import BurstSpec, ErasureProfile, profile_from_burst
from .de_density import LLRDensity, LLRGrid, max_burst_length_awgn, biawgn_capacity
from .de_scalar import DEControls, avg_error_over_start, max_burst_length, run_de
from .ensemble import CodeGraph, EnsembleParams, sample_code
from .errors import GraphSamplingError, ParameterError
from .peeling import SimConfig, peel, run_sweep
from .stopping_sets import enumerate_size2, error_floor_estimate, expected_counts

__all__ = [
    "BurstSpec", "ErasureProfile", "profile_from_burst", "LLRDensity", "LLRGrid",
    "max_burst_length_awgn", "biawgn_capacity", "DEControls", "avg_error_over_start",
    "max_burst_length", "run_de", "CodeGraph", "EnsembleParams", "sample_code",
    "GraphSamplingError", "ParameterError", "SimConfig", "peel", "run_sweep",
    "enumerate_size2", "error_floor_estimate", "expected_counts",
]
