"""Max-min rate optimization for IRS-assisted downlink NOMA."""
from .channels import ChannelParams, ChannelSet, Geometry, sample_channels
from .errors import (ConfigError, ContractViolation, DomainError, NotPSDError,
                     NumericalFailure)
from .miso import BeamSet, solve_miso
from .ordering import OrderingResult, order_users
from .siso import (PhaseConfig, PowerAllocation, SolveResult, SolverConfig,
                   optimal_power_allocation, solve_siso)

__version__ = "0.1.0"

__all__ = [
    "BeamSet", "ChannelParams", "ChannelSet", "ConfigError", "ContractViolation",
    "DomainError", "Geometry", "NotPSDError", "NumericalFailure", "OrderingResult",
    "PhaseConfig", "PowerAllocation", "SolveResult", "SolverConfig", "optimal_power_allocation",
    "order_users", "sample_channels", "solve_miso", "solve_siso",
]
