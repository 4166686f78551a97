"""Downside risk-aware equilibria (DRAE) for normal-form games with state-dependent rewards."""

__version__ = "0.1.0"

from .game import (ContractError, InfeasibleFloorError, MixedStrategy, StateGame, expected_reward,
                   load_game, mean_reward_matrix, save_game, validate_strategy)
from .qp import QPSolution, project_simplex_floor, solve_best_response, solve_min_risk
from .risk import (RiskConfig, RiskMatrix, Scheme, Stage, clpm, covariance_matrix, drae_risk_matrix,
                   lpm, nearest_pd, portfolio_risk, raw_risk_matrix, symmetrize_dual, symmetrize_rho,
                   symmetrize_transpose)
from .solver import Concept, EquilibriumProfile, permissibility_check, sfp_solve, strategy_distance

__all__ = [
    "Concept", "ContractError", "EquilibriumProfile", "InfeasibleFloorError", "MixedStrategy",
    "QPSolution", "RiskConfig", "RiskMatrix", "Scheme", "Stage", "StateGame", "clpm",
    "covariance_matrix", "drae_risk_matrix", "expected_reward", "load_game", "lpm",
    "mean_reward_matrix", "nearest_pd", "permissibility_check", "portfolio_risk",
    "project_simplex_floor", "raw_risk_matrix", "save_game", "sfp_solve", "solve_best_response",
    "solve_min_risk", "strategy_distance", "symmetrize_dual", "symmetrize_rho",
    "symmetrize_transpose", "validate_strategy",
]
