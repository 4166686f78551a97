"""Stochastic fictitious play for Nash, RAE and DRAE profiles."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator

import numpy as np

from .game import DEFAULT_EPS, ContractError, MixedStrategy, StateGame, expected_reward, mean_reward_matrix
from .qp import DEFAULT_TOL, solve_best_response
from .risk import RiskConfig, RiskKernel, RiskMatrix, Stage, drae_risk_matrix, nearest_pd

log = logging.getLogger(__name__)

DEFAULT_MAX_ITER = 5_000
DEFAULT_DRIFT_TOL = 1e-6


class Concept(str, Enum):
    NASH = "nash"
    RAE = "rae"
    DRAE = "drae"


@dataclass(frozen=True)
class SFPState:
    t: int
    z_self: MixedStrategy
    z_opp: MixedStrategy
    last_br: MixedStrategy
    drift: float
    last_br_opp: MixedStrategy | None = None
    qp_converged: bool = True


@dataclass(frozen=True)
class Permissibility:
    min_eigenvalue: float
    strictly_concave: bool
    interior: bool

    @property
    def passed(self) -> bool:
        return self.strictly_concave and self.interior


@dataclass(frozen=True, eq=False)
class EquilibriumProfile:
    strategy_p1: MixedStrategy
    strategy_p2: MixedStrategy
    concept: Concept
    er: float
    variance: float
    lpm: float
    iterations: int
    converged: bool
    config: RiskConfig = field(default_factory=RiskConfig)
    drift: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "concept": self.concept.value,
            "gamma": self.config.gamma,
            "tau": self.config.tau,
            "degree": self.config.degree,
            "scheme": self.config.scheme.value,
            "strategy_p1": self.strategy_p1.probs.tolist(),
            "strategy_p2": self.strategy_p2.probs.tolist(),
            "er": self.er,
            "variance": self.variance,
            "lpm": self.lpm,
            "iterations": self.iterations,
            "converged": self.converged,
        }


def permissibility_check(risk: RiskMatrix, eps: float) -> Permissibility:
    """Check the two SFP admissibility conditions for the perturbed best response.

    Condition 1 needs a strictly concave utility, i.e. a risk matrix whose
    smallest eigenvalue is positive and meets the PD floor. Condition 2 needs
    every action to keep positive probability, i.e. ``eps > 0``.
    """
    lam = risk.min_eigenvalue()
    delta = risk.config.pd_jitter
    return Permissibility(lam, bool(lam > 0 and lam >= delta - 1e-10), bool(eps > 0))


class _BestResponder:
    """Builds the concept's risk matrix against an opponent average and solves the QP."""

    def __init__(self, game: StateGame, cfg: RiskConfig, concept: Concept, eps: float, qp_tol: float):
        self.game = game
        self.cfg = cfg
        self.concept = Concept(concept)
        self.eps = eps
        self.qp_tol = qp_tol
        self.meanM = mean_reward_matrix(game)
        self.kernel = RiskKernel(game, cfg.tau, cfg.degree)
        self.gamma = 0.0 if self.concept is Concept.NASH else cfg.gamma

    def risk(self, opp: np.ndarray):
        if self.gamma == 0:
            return None
        if self.concept is Concept.RAE:
            return nearest_pd(self.kernel.covariance(opp), self.cfg.pd_jitter)
        return drae_risk_matrix(self.game, opp, self.cfg, self.kernel)

    def __call__(self, opp: np.ndarray, init=None):
        return solve_best_response(self.meanM, opp, self.risk(opp), self.gamma,
                                   self.eps, tol=self.qp_tol, init=init)


def sfp_steps(game: StateGame, cfg: RiskConfig, concept: Concept, eps: float = DEFAULT_EPS,
              init: MixedStrategy | None = None, qp_tol: float = DEFAULT_TOL) -> Iterator[SFPState]:
    """Yield SFP states forever; callers decide when to stop.

    Both players start from ``init`` (uniform by default), which counts as the
    first emitted response. At step ``t`` each player best responds to the
    opponent's average and averages are updated with weight ``1/(t+1)``.
    """
    n = game.n_actions
    if eps * n > 1:
        raise ContractError(f"eps={eps} infeasible for {n} actions")
    responder = _BestResponder(game, cfg, concept, eps, qp_tol)
    start = np.full(n, 1.0 / n) if init is None else np.asarray(init.probs, float)
    z = [start.copy(), start.copy()]
    prev_br = [None, None]
    t = 0
    while True:
        t += 1
        # a symmetric game with equal averages gives both players the same response
        if np.array_equal(z[0], z[1]):
            sol = responder(z[1], prev_br[0])
            sols = [sol, sol]
        else:
            sols = [responder(z[1], prev_br[0]), responder(z[0], prev_br[1])]
        brs = [s.strategy.probs for s in sols]
        new = [z[i] + (brs[i] - z[i]) / (t + 1) for i in range(2)]
        drift = float(np.abs(new[0] - z[0]).sum() + np.abs(new[1] - z[1]).sum())
        z = new
        prev_br = brs
        yield SFPState(t, MixedStrategy(z[0], 0.0), MixedStrategy(z[1], 0.0),
                       sols[0].strategy, drift, sols[1].strategy,
                       sols[0].converged and sols[1].converged)


def score_profile(game: StateGame, sigma, varsigma, cfg: RiskConfig, kernel: RiskKernel | None = None):
    """Return ``(er, variance, lpm)`` of ``sigma`` against ``varsigma``.

    Variance uses the reward covariance and LPM the raw co-LPM matrix, both
    built against ``varsigma`` without jitter.
    """
    kernel = kernel or RiskKernel(game, cfg.tau, cfg.degree)
    s = sigma.probs if isinstance(sigma, MixedStrategy) else np.asarray(sigma, float)
    o = varsigma.probs if isinstance(varsigma, MixedStrategy) else np.asarray(varsigma, float)
    er = expected_reward(s, o, game)
    var = float(s @ kernel.covariance(o) @ s)
    lpm_val = float(s @ kernel.raw(o) @ s)
    return er, var, lpm_val


def sfp_solve(game: StateGame, cfg: RiskConfig, concept: Concept = Concept.DRAE,
              eps: float = DEFAULT_EPS, max_iter: int = DEFAULT_MAX_ITER,
              drift_tol: float = DEFAULT_DRIFT_TOL, qp_tol: float = DEFAULT_TOL) -> EquilibriumProfile:
    """Run SFP until the joint time-average drifts less than ``drift_tol`` (l1) per step."""
    concept = Concept(concept)
    state = None
    converged = False
    qp_failures = 0
    for state in sfp_steps(game, cfg, concept, eps, qp_tol=qp_tol):
        qp_failures += not state.qp_converged
        if state.drift <= drift_tol:
            converged = True
            break
        if state.t >= max_iter:
            break
    if qp_failures:
        log.warning("%d best-response QPs did not reach tol=%g", qp_failures, qp_tol)
    p1 = _floored(state.z_self, eps)
    p2 = _floored(state.z_opp, eps)
    er, var, lpm_val = score_profile(game, p1, p2, cfg)
    log.info("%s gamma=%g: t=%d drift=%.3g er=%.6g lpm=%.6g", concept.value, cfg.gamma,
             state.t, state.drift, er, lpm_val)
    return EquilibriumProfile(p1, p2, concept, er, var, lpm_val, state.t, converged,
                              cfg, state.drift)


def _floored(z: MixedStrategy, eps: float) -> MixedStrategy:
    # averages of floored responses stay floored up to rounding
    p = np.maximum(z.probs, eps)
    return MixedStrategy(p / p.sum(), eps)


def strategy_distance(p, q) -> float:
    """Euclidean distance between player-1 strategies, scaled so distinct vertices are 1 apart."""
    a = _p1(p)
    b = _p1(q)
    if a.shape != b.shape:
        raise ContractError(f"strategy sizes differ: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b) / np.sqrt(2.0))


def _p1(x) -> np.ndarray:
    if isinstance(x, EquilibriumProfile):
        return x.strategy_p1.probs
    if isinstance(x, MixedStrategy):
        return x.probs
    return np.asarray(x, dtype=float)


def risk_at(profile: EquilibriumProfile, game: StateGame) -> RiskMatrix:
    """Risk matrix the profile's concept optimizes against player 2's strategy."""
    cfg = profile.config
    opp = profile.strategy_p2.probs
    kernel = RiskKernel(game, cfg.tau, cfg.degree)
    if profile.concept is Concept.RAE:
        return RiskMatrix(nearest_pd(kernel.covariance(opp), cfg.pd_jitter), Stage.PD_PROJECTED, cfg)
    return drae_risk_matrix(game, opp, cfg, kernel)
