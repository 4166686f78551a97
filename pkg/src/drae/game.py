"""State-based symmetric two-player games and mixed strategies."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_EPS = 1e-4
SUM_TOL = 1e-9


class ContractError(ValueError):
    """Raised when an input violates a documented precondition."""


class InfeasibleFloorError(ContractError):
    """Raised when ``eps * n_actions > 1`` so no floored strategy exists."""


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class StateGame:
    """Reward tensor ``rewards[i, j, s] = r(a_i, a_j, s)`` plus state probabilities.

    Both players index the same tensor: player 2's reward for ``(j, i, s)`` is
    ``rewards[j, i, s]``.
    """

    rewards: np.ndarray
    state_probs: np.ndarray

    def __post_init__(self):
        r = _frozen(self.rewards)
        q = _frozen(self.state_probs)
        if r.ndim == 2:
            r = _frozen(r[:, :, None])
        if r.ndim != 3 or r.shape[0] != r.shape[1] or r.shape[0] == 0:
            raise ContractError(f"rewards must have shape (A, A, S), got {r.shape}")
        if q.ndim != 1 or q.shape[0] != r.shape[2]:
            raise ContractError(
                f"state_probs has length {q.shape}, expected {r.shape[2]}"
            )
        if not np.all(np.isfinite(r)):
            raise ContractError("rewards contain NaN or Inf")
        if np.any(q < 0) or abs(q.sum() - 1.0) > 1e-12:
            raise ContractError("state_probs must be non-negative and sum to 1")
        object.__setattr__(self, "rewards", r)
        object.__setattr__(self, "state_probs", q)

    @property
    def n_actions(self) -> int:
        return self.rewards.shape[0]

    @property
    def n_states(self) -> int:
        return self.rewards.shape[2]

    @classmethod
    def single_state(cls, matrix) -> "StateGame":
        m = np.asarray(matrix, dtype=float)
        return cls(m[:, :, None], np.ones(1))

    def to_dict(self) -> dict:
        return {
            "n_actions": self.n_actions,
            "n_states": self.n_states,
            "state_probs": self.state_probs.tolist(),
            "rewards": self.rewards.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StateGame":
        for key in ("n_actions", "n_states", "state_probs", "rewards"):
            if key not in d:
                raise ContractError(f"missing field '{key}'")
        try:
            rewards = np.array(d["rewards"], dtype=float)
        except (TypeError, ValueError) as exc:
            raise ContractError(f"rewards is not a rectangular numeric array: {exc}")
        game = cls(rewards, d["state_probs"])
        if game.n_actions != d["n_actions"] or game.n_states != d["n_states"]:
            raise ContractError(
                f"declared shape ({d['n_actions']}, {d['n_states']}) does not match "
                f"rewards shape {rewards.shape}"
            )
        return game


def save_game(game: StateGame, path) -> None:
    Path(path).write_text(json.dumps(game.to_dict()))


def load_game(path) -> StateGame:
    """Load and validate a game JSON file. Raises ``ContractError`` on bad input."""
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ContractError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(d, dict):
        raise ContractError(f"{path}: top-level value must be an object")
    return StateGame.from_dict(d)


@dataclass(frozen=True, eq=False)
class MixedStrategy:
    """Probability vector over actions with every entry at least ``eps_floor``."""

    probs: np.ndarray
    eps_floor: float = 0.0

    def __post_init__(self):
        p = _frozen(self.probs)
        if p.ndim != 1 or p.size == 0:
            raise ContractError("probs must be a non-empty vector")
        if not np.all(np.isfinite(p)):
            raise ContractError("probs contain NaN or Inf")
        if abs(p.sum() - 1.0) > SUM_TOL or np.any(p < self.eps_floor - SUM_TOL):
            raise ContractError(
                f"probs must sum to 1 with entries >= {self.eps_floor}: {p}"
            )
        object.__setattr__(self, "probs", p)

    def __len__(self):
        return self.probs.size

    @classmethod
    def uniform(cls, n: int, eps: float = 0.0) -> "MixedStrategy":
        return cls(np.full(n, 1.0 / n), eps)


def validate_strategy(v, eps: float = DEFAULT_EPS) -> MixedStrategy:
    """Coerce ``v`` onto the floored simplex.

    Entries below ``eps`` are pinned to ``eps`` and the remaining entries are
    rescaled to fill the leftover mass, repeating until nothing falls below
    the floor. A vector that is already feasible is returned unchanged.
    """
    v = np.asarray(v, dtype=float)
    n = v.size
    if not np.all(np.isfinite(v)):
        raise ContractError("strategy contains NaN or Inf")
    if eps < 0 or eps * n > 1 + 1e-12:
        raise InfeasibleFloorError(f"eps={eps} infeasible for {n} actions")
    if abs(v.sum() - 1.0) <= SUM_TOL and np.all(v >= eps - SUM_TOL):
        return MixedStrategy(v, eps)

    x = np.clip(v, 0.0, None)
    pinned = np.zeros(n, dtype=bool)
    for _ in range(n + 1):
        free_mass = 1.0 - eps * pinned.sum()
        s = x[~pinned].sum()
        if s <= 0:
            # nothing left to rescale: spread the free mass evenly
            x[~pinned] = free_mass / max((~pinned).sum(), 1)
        else:
            x[~pinned] *= free_mass / s
        x[pinned] = eps
        low = (~pinned) & (x < eps)
        if not low.any():
            break
        pinned |= low
    log.debug("renormalized strategy %s -> %s", v, x)
    return MixedStrategy(x, eps)


def _check_dims(game: StateGame, *strategies) -> None:
    for s in strategies:
        n = len(s.probs) if isinstance(s, MixedStrategy) else len(s)
        if n != game.n_actions:
            raise ContractError(
                f"strategy length {n} does not match {game.n_actions} actions"
            )


def _probs(s) -> np.ndarray:
    return s.probs if isinstance(s, MixedStrategy) else np.asarray(s, dtype=float)


def mean_reward_matrix(game: StateGame) -> np.ndarray:
    """State-expected reward matrix ``sum_s q(s) M(s)``."""
    return game.rewards @ game.state_probs


def expected_reward(sigma, varsigma, game: StateGame) -> float:
    """Expected reward of ``sigma`` against ``varsigma`` (bilinear in both)."""
    _check_dims(game, sigma, varsigma)
    return float(_probs(sigma) @ mean_reward_matrix(game) @ _probs(varsigma))
