"""Seeded generators for the synthetic, asset-market and product-portfolio games."""

from __future__ import annotations

import itertools
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import qmc

from .game import ContractError, StateGame, mean_reward_matrix

SOBOL_NAME = "scipy.stats.qmc.Sobol(scramble=True)"
MAX_PPM_PRODUCTS = 12


def _range(r) -> tuple:
    r = tuple(float(x) for x in r)
    if len(r) != 2 or r[0] > r[1]:
        raise ContractError(f"range must be an ordered pair, got {r}")
    return r


@dataclass(frozen=True)
class SyntheticSpec:
    n_actions: int = 100
    n_high_var: int = 20
    n_high_skew: int = 20
    high_var_range: tuple = (1.5, 3.0)
    high_skew_set: tuple = (-8, -7, -6, 6, 7, 8)
    low_var_range: tuple = (0.5, 1.0)
    low_skew_range: tuple = (-3.0, 3.0)
    n_states: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_actions < 1 or self.n_states < 1:
            raise ContractError("n_actions and n_states must be positive")
        if min(self.n_high_var, self.n_high_skew) < 0 or self.n_high_var + self.n_high_skew > self.n_actions:
            raise ContractError("n_high_var + n_high_skew must not exceed n_actions")
        for name in ("high_var_range", "low_var_range", "low_skew_range"):
            object.__setattr__(self, name, _range(getattr(self, name)))
        if self.low_var_range[0] <= 0 or self.high_var_range[0] <= 0:
            raise ContractError("variance ranges must be positive")
        object.__setattr__(self, "high_skew_set", tuple(float(k) for k in self.high_skew_set))


@dataclass(frozen=True)
class AssetSpec:
    n_portfolios: int = 100
    n_assets: int = 10
    n_states: int = 5
    wealth: tuple = (0.5, 0.5)
    n_high_var: int = 2
    n_high_skew: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.n_portfolios < 1 or self.n_assets < 1 or self.n_states < 1:
            raise ContractError("n_portfolios, n_assets and n_states must be positive")
        w = tuple(float(x) for x in self.wealth)
        if len(w) != 2 or min(w) <= 0:
            raise ContractError("wealth must be two positive numbers")
        object.__setattr__(self, "wealth", w)
        if self.n_high_var + self.n_high_skew > self.n_assets:
            raise ContractError("n_high_var + n_high_skew must not exceed n_assets")


@dataclass(frozen=True)
class PPMSpec:
    """Product portfolio game. ``None`` fields are drawn from ``seed``.

    With ``n_states > 1`` each state rescales the segment sizes by an
    independent factor drawn from ``demand_noise``.
    """

    n_products: int = 4
    n_segments: int = 3
    costs: tuple | None = None
    segment_sizes: tuple | None = None
    utilities: tuple | None = None  # n_products x n_segments
    mu: float = 1.0
    n_states: int = 1
    demand_noise: tuple = (0.5, 1.5)
    seed: int = 0

    def __post_init__(self):
        if self.n_products < 1 or self.n_segments < 1 or self.n_states < 1:
            raise ContractError("n_products, n_segments and n_states must be positive")
        if self.n_products > MAX_PPM_PRODUCTS:
            raise ContractError(
                f"n_products={self.n_products} exceeds the bound of {MAX_PPM_PRODUCTS} "
                f"(2^M - 1 actions)"
            )
        rng = np.random.default_rng(self.seed)
        costs = rng.uniform(1.0, 3.0, self.n_products) if self.costs is None else self.costs
        sizes = rng.uniform(50.0, 150.0, self.n_segments) if self.segment_sizes is None else self.segment_sizes
        utils = (rng.uniform(0.0, 2.0, (self.n_products, self.n_segments))
                 if self.utilities is None else self.utilities)
        costs = tuple(float(c) for c in np.ravel(costs))
        sizes = tuple(float(q) for q in np.ravel(sizes))
        utils = np.asarray(utils, dtype=float)
        if len(costs) != self.n_products or min(costs) <= 0:
            raise ContractError("costs must be n_products strictly positive values")
        if len(sizes) != self.n_segments or min(sizes) <= 0:
            raise ContractError("segment_sizes must be n_segments strictly positive values")
        if utils.shape != (self.n_products, self.n_segments) or np.any(utils < 0):
            raise ContractError("utilities must be a non-negative n_products x n_segments array")
        object.__setattr__(self, "costs", costs)
        object.__setattr__(self, "segment_sizes", sizes)
        object.__setattr__(self, "utilities", tuple(map(tuple, utils.tolist())))
        object.__setattr__(self, "demand_noise", _range(self.demand_noise))

    @property
    def n_actions(self) -> int:
        return 2 ** self.n_products - 1


def spec_to_dict(spec) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(spec).items()}


# -- skew normal --------------------------------------------------------------

_B = np.sqrt(2.0 / np.pi)


def skew_normal_params(mu: float, sigma2: float, kappa: float):
    """Location and scale giving a skew-normal of shape ``kappa`` mean ``mu`` and variance ``sigma2``."""
    if not sigma2 > 0:
        raise ContractError("sigma2 must be positive")
    delta = kappa / np.sqrt(1.0 + kappa ** 2)
    scale = np.sqrt(sigma2 / (1.0 - _B ** 2 * delta ** 2))
    loc = mu - scale * _B * delta
    return loc, scale


def sample_skew_normal(mu, sigma2, kappa, rng: np.random.Generator, size=None):
    """Moment-matched skew-normal draws via ``delta*|U0| + sqrt(1-delta^2)*U1``.

    Parameters broadcast against ``size``.
    """
    mu, sigma2, kappa = (np.asarray(x, dtype=float) for x in (mu, sigma2, kappa))
    if np.any(sigma2 <= 0):
        raise ContractError("sigma2 must be positive")
    delta = kappa / np.sqrt(1.0 + kappa ** 2)
    scale = np.sqrt(sigma2 / (1.0 - _B ** 2 * delta ** 2))
    loc = mu - scale * _B * delta
    shape = np.broadcast_shapes(mu.shape, sigma2.shape, kappa.shape) if size is None else size
    u0 = rng.standard_normal(shape)
    u1 = rng.standard_normal(shape)
    z = delta * np.abs(u0) + np.sqrt(1.0 - delta ** 2) * u1
    out = loc + scale * z
    return float(out) if np.ndim(out) == 0 else out


def _assign_classes(rng, n, n_high_var, n_high_skew, high_var_range, high_skew_set,
                    low_var_range, low_skew_range):
    """Per-item (variance, skew) with the high-variance and high-skew items drawn at random."""
    order = rng.permutation(n)
    var = rng.uniform(*low_var_range, n)
    skew = rng.uniform(*low_skew_range, n)
    hv = order[:n_high_var]
    hs = order[n_high_var:n_high_var + n_high_skew]
    var[hv] = rng.uniform(*high_var_range, hv.size)
    skew[hs] = rng.choice(np.asarray(high_skew_set, float), hs.size)
    cls = np.zeros(n, dtype=int)
    cls[hv] = 1
    cls[hs] = 2
    return var, skew, cls


def synthetic_classes(spec: SyntheticSpec):
    """``(variance, skew, class)`` per action; class 0 low, 1 high variance, 2 high skew."""
    rng = np.random.default_rng(spec.seed)
    return _assign_classes(rng, spec.n_actions, spec.n_high_var, spec.n_high_skew,
                           spec.high_var_range, spec.high_skew_set,
                           spec.low_var_range, spec.low_skew_range)


def gen_synthetic(spec: SyntheticSpec) -> StateGame:
    """Row ``i`` of the tensor holds independent draws from action i's skew-normal."""
    rng = np.random.default_rng(spec.seed)
    var, skew, _ = _assign_classes(rng, spec.n_actions, spec.n_high_var, spec.n_high_skew,
                                   spec.high_var_range, spec.high_skew_set,
                                   spec.low_var_range, spec.low_skew_range)
    n, s = spec.n_actions, spec.n_states
    rewards = sample_skew_normal(0.0, var[:, None, None], skew[:, None, None], rng, (n, n, s))
    return StateGame(rewards, np.full(s, 1.0 / s))


def skew_game(n_actions: int, kappa: float, seed: int) -> StateGame:
    """Single-state game with i.i.d. unit-variance zero-mean skew-normal entries."""
    rng = np.random.default_rng(seed)
    r = sample_skew_normal(0.0, 1.0, kappa, rng, (n_actions, n_actions))
    return StateGame.single_state(r)


# -- asset market -------------------------------------------------------------

def simplex_from_unit(u: np.ndarray) -> np.ndarray:
    """Map points of the unit cube ``[0,1]^(m-1)`` to the ``m``-simplex by sorted spacings."""
    u = np.sort(np.atleast_2d(u), axis=1)
    k = u.shape[0]
    edges = np.hstack([np.zeros((k, 1)), u, np.ones((k, 1))])
    return np.diff(edges, axis=1)


def sobol_portfolios(n_portfolios: int, n_assets: int, seed: int) -> np.ndarray:
    if n_assets == 1:
        return np.ones((n_portfolios, 1))
    sampler = qmc.Sobol(d=n_assets - 1, scramble=True, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # balance warning for non powers of two
        u = sampler.random(n_portfolios)
    return simplex_from_unit(u)


def allocations(p_i, p_j, wealth=(0.5, 0.5)) -> np.ndarray:
    """Share of each asset held by investor i; 0 for assets nobody buys."""
    p_i = np.asarray(p_i, float)
    p_j = np.asarray(p_j, float)
    if np.any(p_i < 0) or np.any(p_j < 0):
        raise ContractError("portfolio weights must be non-negative")
    mine = p_i * wealth[0]
    price = mine + p_j * wealth[1]
    return np.divide(mine, price, out=np.zeros_like(price), where=price > 0)


def asset_payoff(p_i, p_j, returns, q, wealth=(0.5, 0.5)) -> float:
    """Investor i's expected payoff ``sum_m sum_s q(s) r_m(s) alloc_i^m``.

    ``returns`` has shape ``(n_assets, n_states)``.
    """
    alloc = allocations(p_i, p_j, wealth)
    return float(alloc @ np.asarray(returns, float) @ np.asarray(q, float))


def asset_game_from(weights, returns, q, wealth=(0.5, 0.5)) -> StateGame:
    """State-resolved asset tensor ``r(i, j, s) = sum_m alloc_i^m(P_i, P_j) r_m(s)``."""
    w = np.asarray(weights, float)
    returns = np.asarray(returns, float)
    if np.any(w < 0):
        raise ContractError("portfolio weights must be non-negative")
    mine = w[:, None, :] * wealth[0]
    price = mine + w[None, :, :] * wealth[1]
    alloc = np.divide(mine, price, out=np.zeros_like(price), where=price > 0)
    return StateGame(alloc @ returns, q)


def asset_market(spec: AssetSpec):
    """``(weights, returns, q)`` for ``spec``; asset returns share the synthetic return classes."""
    rng = np.random.default_rng(spec.seed)
    weights = sobol_portfolios(spec.n_portfolios, spec.n_assets, spec.seed)
    base = SyntheticSpec()
    var, skew, _ = _assign_classes(rng, spec.n_assets, spec.n_high_var, spec.n_high_skew,
                                   base.high_var_range, base.high_skew_set,
                                   base.low_var_range, base.low_skew_range)
    returns = sample_skew_normal(0.0, var[:, None], skew[:, None], rng, (spec.n_assets, spec.n_states))
    q = rng.uniform(0.0, 1.0, spec.n_states)
    q = q / q.sum()
    return weights, returns, q


def gen_asset_game(spec: AssetSpec) -> StateGame:
    weights, returns, q = asset_market(spec)
    return asset_game_from(weights, returns, q, spec.wealth)


# -- product portfolio ----------------------------------------------------------

def ppm_portfolios(n_products: int) -> list[tuple[int, ...]]:
    """Non-empty product subsets ordered by ascending binary mask."""
    return [tuple(p for p in range(n_products) if mask >> p & 1)
            for mask in range(1, 2 ** n_products)]


def ppm_payoff(P_i, P_j, spec: PPMSpec, segment_sizes=None) -> float:
    """Surplus of portfolio ``P_i`` against ``P_j`` under logit demand shares.

    Products offered by both firms appear twice in the competing set.
    """
    if len(P_i) == 0:
        raise ContractError("P_i must be non-empty")
    u = np.asarray(spec.utilities)
    c = np.asarray(spec.costs)
    Q = np.asarray(spec.segment_sizes if segment_sizes is None else segment_sizes)
    com = list(P_i) + list(P_j)
    weights = np.exp(spec.mu * u)  # (product, segment)
    denom = weights[com].sum(axis=0)
    total = 0.0
    for p in P_i:
        share = weights[p] / denom
        total += float(np.sum(u[p] / c[p] * share * Q))
    return total


def ppm_shares(P_i, P_j, spec: PPMSpec) -> np.ndarray:
    """Demand share of each competing product copy (rows) per segment (columns)."""
    u = np.asarray(spec.utilities)
    com = list(P_i) + list(P_j)
    w = np.exp(spec.mu * u[com])
    return w / w.sum(axis=0)


def ppm_segment_sizes(spec: PPMSpec) -> np.ndarray:
    """Segment sizes per state, shape ``(n_states, n_segments)``."""
    base = np.asarray(spec.segment_sizes)
    if spec.n_states == 1:
        return base[None, :]
    rng = np.random.default_rng([spec.seed, 1])
    return base * rng.uniform(*spec.demand_noise, (spec.n_states, spec.n_segments))


def gen_ppm_game(spec: PPMSpec) -> StateGame:
    ports = ppm_portfolios(spec.n_products)
    sizes = ppm_segment_sizes(spec)
    n = len(ports)
    rewards = np.empty((n, n, spec.n_states))
    for (i, P_i), (j, P_j) in itertools.product(enumerate(ports), repeat=2):
        for s in range(spec.n_states):
            rewards[i, j, s] = ppm_payoff(P_i, P_j, spec, sizes[s])
    return StateGame(rewards, np.full(spec.n_states, 1.0 / spec.n_states))


def default_tau(game: StateGame) -> float:
    """Expected reward when both players pick an action uniformly at random."""
    return float(mean_reward_matrix(game).mean())
