import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drae.game import ContractError, MixedStrategy, StateGame, expected_reward, mean_reward_matrix
from drae.qp import solve_best_response
from drae.risk import RiskConfig, RiskKernel, RiskMatrix, Scheme, Stage, nearest_pd, raw_risk_matrix
from drae.solver import (Concept, EquilibriumProfile, permissibility_check, risk_at, score_profile,
                         sfp_solve, sfp_steps, strategy_distance)

from conftest import random_game

RPS = StateGame.single_state([[0.0, -1.0, 1.0], [1.0, 0.0, -1.0], [-1.0, 1.0, 0.0]])


def test_rps_nash_is_uniform():
    p = sfp_solve(RPS, RiskConfig(gamma=0.0), Concept.NASH, max_iter=5000)
    assert np.abs(p.strategy_p1.probs - 1 / 3).sum() <= 1e-3
    assert np.abs(p.strategy_p2.probs - 1 / 3).sum() <= 1e-3
    assert p.er == pytest.approx(0.0, abs=1e-12)


def test_rps_nash_from_off_center_start():
    # fictitious play from a pure start spirals in towards the uniform profile
    init = MixedStrategy([0.8, 0.1, 0.1])
    steps = sfp_steps(RPS, RiskConfig(gamma=0.0), Concept.NASH, eps=1e-4, init=init)
    for state in steps:
        if state.t == 5000:
            break
    assert np.abs(state.z_self.probs - 1 / 3).sum() < 0.1


@pytest.mark.parametrize("concept", list(Concept))
def test_constant_game_has_no_risk(concept):
    g = StateGame(np.full((4, 4, 2), 1.5), [0.3, 0.7])
    p = sfp_solve(g, RiskConfig(tau=0.0), concept, max_iter=50)
    assert p.er == pytest.approx(1.5, abs=1e-15)
    assert p.lpm == 0.0 and p.variance == 0.0


def test_2x2_drae_risk_below_nash(mp_game):
    cfg = RiskConfig(tau=0.0, degree=2, gamma=50.0)
    drae = sfp_solve(mp_game, cfg, Concept.DRAE, max_iter=2000)
    nash = sfp_solve(mp_game, cfg, Concept.NASH, max_iter=2000)
    assert drae.lpm <= nash.lpm + 1e-9
    # exhaustive grid over player 1's mixing probability
    opp = drae.strategy_p2.probs
    raw = RiskKernel(mp_game, 0.0, 2).raw(opp)
    s = np.linspace(1e-4, 1 - 1e-4, 10_001)
    x = np.stack([s, 1 - s], axis=1)
    lpm_grid = np.einsum("ki,ij,kj->k", x, raw, x)
    assert drae.lpm <= lpm_grid.max() + 1e-12


def test_permissibility_examples():
    cfg = RiskConfig(pd_jitter=1e-8)
    pd = RiskMatrix(nearest_pd(np.zeros((3, 3)), 1e-8), Stage.PD_PROJECTED, cfg)
    assert permissibility_check(pd, 1e-4).passed
    out = permissibility_check(pd, 0.0)
    assert out.strictly_concave and not out.interior
    zero = RiskMatrix(np.zeros((2, 2)), Stage.PD_PROJECTED, cfg.with_(pd_jitter=0.0))
    assert not permissibility_check(zero, 1e-4).strictly_concave


def test_strategy_distance_examples():
    assert strategy_distance([0.2, 0.8], [0.2, 0.8]) == 0.0
    assert strategy_distance([1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0)
    assert strategy_distance([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]) == pytest.approx(1.0)
    with pytest.raises(ContractError):
        strategy_distance([1.0, 0.0], [1.0, 0.0, 0.0])


def test_profile_json_keys(mp_game):
    p = sfp_solve(mp_game, RiskConfig(), Concept.RAE, max_iter=20)
    assert set(p.to_dict()) == {"concept", "gamma", "tau", "degree", "scheme", "strategy_p1",
                                "strategy_p2", "er", "variance", "lpm", "iterations", "converged"}


def test_infeasible_eps(mp_game):
    with pytest.raises(ContractError):
        next(sfp_steps(mp_game, RiskConfig(), Concept.DRAE, eps=0.6))


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1), st.sampled_from(list(Concept)), st.integers(2, 5))
def test_time_average_is_mean_of_responses(seed, concept, n):
    rng = np.random.default_rng(seed)
    g = random_game(rng, n, 2)
    cfg = RiskConfig(tau=float(rng.normal()), gamma=float(rng.uniform(0, 5)))
    brs = [[np.full(n, 1.0 / n)], [np.full(n, 1.0 / n)]]
    for state in sfp_steps(g, cfg, concept, eps=1e-3):
        brs[0].append(state.last_br.probs)
        brs[1].append(state.last_br_opp.probs)
        np.testing.assert_allclose(state.z_self.probs, np.mean(brs[0], axis=0), atol=1e-12)
        np.testing.assert_allclose(state.z_opp.probs, np.mean(brs[1], axis=0), atol=1e-12)
        assert abs(state.z_self.probs.sum() - 1) <= 1e-12
        assert state.t == len(brs[0]) - 1
        if state.t == 15:
            break


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1), st.integers(2, 6))
def test_profile_scores_recompute(seed, n):
    rng = np.random.default_rng(seed)
    g = random_game(rng, n, 3)
    cfg = RiskConfig(tau=float(rng.normal()), gamma=float(rng.uniform(0.01, 5)),
                     scheme=list(Scheme)[rng.integers(3)])
    p = sfp_solve(g, cfg, Concept.DRAE, max_iter=40)
    a, b = p.strategy_p1.probs, p.strategy_p2.probs
    assert p.er == pytest.approx(expected_reward(a, b, g), abs=1e-9)
    raw = raw_risk_matrix(g, b, cfg).values
    assert p.lpm == pytest.approx(a @ raw @ a, abs=1e-9)
    assert (p.er, p.variance, p.lpm) == score_profile(g, a, b, cfg)
    assert a.min() >= 1e-4 - 1e-15


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1), st.integers(2, 6))
def test_gamma_zero_drae_equals_nash(seed, n):
    g = random_game(np.random.default_rng(seed), n, 2)
    cfg = RiskConfig(gamma=0.0)
    d = sfp_solve(g, cfg, Concept.DRAE, max_iter=200)
    m = sfp_solve(g, cfg, Concept.NASH, max_iter=200)
    assert np.abs(d.strategy_p1.probs - m.strategy_p1.probs).sum() <= 1e-6
    assert np.abs(d.strategy_p2.probs - m.strategy_p2.probs).sum() <= 1e-6


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_constant_games_concepts_share_er(seed, c, tau):
    n = int(np.random.default_rng(seed).integers(1, 6))
    g = StateGame(np.full((n, n, 2), c), [0.5, 0.5])
    ers = [sfp_solve(g, RiskConfig(tau=tau), k, max_iter=30).er for k in Concept]
    if tau <= c:
        # no shortfall: both risk matrices vanish and every concept plays the same profile
        assert len(set(ers)) == 1
    else:
        # constant shortfall makes LPM flat on the simplex; profiles agree only to rounding
        assert max(ers) - min(ers) <= 8 * np.spacing(abs(c) + 1.0)


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1))
def test_pd_projected_risk_is_permissible(seed):
    rng = np.random.default_rng(seed)
    g = random_game(rng, 4, 2)
    p = sfp_solve(g, RiskConfig(tau=0.2, scheme=list(Scheme)[rng.integers(3)]), Concept.DRAE, max_iter=10)
    assert permissibility_check(risk_at(p, g), 1e-4).passed


@pytest.mark.property
def test_no_sampled_strategy_dominates_the_equilibrium(rng):
    # numerical witness of the minimum-LPM property at the fixed point
    g = random_game(rng, 4, 2)
    cfg = RiskConfig(tau=0.0, gamma=1.0)
    p = sfp_solve(g, cfg, Concept.DRAE, max_iter=500)
    opp = p.strategy_p2
    risk = risk_at(p, g).values
    br = solve_best_response(mean_reward_matrix(g), opp, risk, cfg.gamma, 1e-4).strategy.probs
    g_vec = mean_reward_matrix(g) @ opp.probs
    xs = 1e-4 + (1 - 4e-4) * rng.dirichlet(np.ones(4), size=10_000)
    er = xs @ g_vec
    rk = np.einsum("ki,ij,kj->k", xs, risk, xs)
    dominated = (er >= br @ g_vec) & (rk < br @ risk @ br - 1e-6)
    assert not dominated.any()


@pytest.mark.property
def test_fixed_point_certificate(mp_game):
    """Each player's best response to the returned opponent moves at most 10 * drift_tol."""
    cfg = RiskConfig(tau=0.0, gamma=1.0)
    g = StateGame.single_state([[2.0, -1.0, 0.5], [-1.0, 1.0, 0.0], [0.5, 0.0, 0.3]])
    drift_tol = 1e-6
    p = sfp_solve(g, cfg, Concept.DRAE, max_iter=200_000, drift_tol=drift_tol)
    assert p.converged
    meanM = mean_reward_matrix(g)
    for me, opp in ((p.strategy_p1, p.strategy_p2), (p.strategy_p2, p.strategy_p1)):
        risk = risk_at(EquilibriumProfile(me, opp, p.concept, 0, 0, 0, 0, True, cfg), g)
        br = solve_best_response(meanM, opp, risk, cfg.gamma, 1e-4).strategy.probs
        assert np.abs(br - me.probs).sum() <= 10 * drift_tol
