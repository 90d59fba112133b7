"""Cap-and-trade permit market: firm strategies, equilibrium price, inflation and optimal allocation."""

__version__ = "0.1.0"

from .equilibrium import (
    AllocationProgram,
    EquilibriumSolution,
    PathEnsemble,
    allocation_sensitivity,
    expected_terminal_emissions,
    initial_price,
    price_sensitivity,
    price_volatility_f,
    simulate,
    solve_equilibrium,
)
from .inflation import CpiBasket, average_inflation_rate, basket_from_firms, net_zero_price, policy_cpi_adjustment
from .model import (
    Aggregates,
    CalibrationInputs,
    EconomyParams,
    FirmParams,
    ValidationError,
    calibrate_lambda,
    calibrate_phi,
    calibrate_y_pi,
    derive_aggregates,
)
from .regulator import (
    External,
    PiecewiseLinear,
    Quadratic,
    RegulatorSolution,
    RegulatorSpec,
    minimize_social_cost,
    optimal_allocation,
    social_cost,
)

__all__ = [
    "Aggregates", "AllocationProgram", "CalibrationInputs", "CpiBasket", "EconomyParams", "EquilibriumSolution",
    "External", "FirmParams", "PathEnsemble", "PiecewiseLinear", "Quadratic", "RegulatorSolution", "RegulatorSpec",
    "ValidationError", "allocation_sensitivity", "average_inflation_rate", "basket_from_firms", "calibrate_lambda",
    "calibrate_phi", "calibrate_y_pi", "derive_aggregates", "expected_terminal_emissions", "initial_price",
    "minimize_social_cost", "net_zero_price", "optimal_allocation", "policy_cpi_adjustment", "price_sensitivity",
    "price_volatility_f", "simulate", "social_cost", "solve_equilibrium", "__version__",
]
