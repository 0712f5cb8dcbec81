"""Simulation of a two-qubit entangling gate mediated by a spin-chain bus."""

from .kernels import BACKEND
from .model import (
    ChainSpec,
    ControlSchedule,
    PiecewiseLinear,
    ideal_gate,
    optimal_coupling_estimate,
    transfer_time_estimate,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ChainSpec",
    "ControlSchedule",
    "PiecewiseLinear",
    "ideal_gate",
    "optimal_coupling_estimate",
    "transfer_time_estimate",
    "__version__",
]
