"""Scaled Vecchia Gaussian-process emulation."""

from ._core import (
    Model,
    SvecchiaError,
    __version__,
    crps_gaussian,
    fit,
    interval_score,
    lhs,
    log_score,
    num_threads,
    set_num_threads,
    simulate_gp,
    test_function,
    uniform_design,
)

__all__ = [
    "Model",
    "SvecchiaError",
    "__version__",
    "crps_gaussian",
    "fit",
    "interval_score",
    "lhs",
    "log_score",
    "num_threads",
    "set_num_threads",
    "simulate_gp",
    "test_function",
    "uniform_design",
]
