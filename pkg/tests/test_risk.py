import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from drae.game import ContractError, StateGame
from drae.risk import (RiskConfig, RiskKernel, RiskMatrix, Scheme, Stage, clpm, covariance_matrix,
                       drae_risk_matrix, load_risk_matrix, lpm, nearest_pd, portfolio_risk,
                       project_pd, raw_risk_matrix, save_risk_matrix, symmetrize_dual,
                       symmetrize_rho, symmetrize_transpose)

from conftest import game_and_strategies, games, simplex_points

U = np.array([0.5, 0.5])


# -- brute-force oracles -------------------------------------------------------------

def loop_lpm(g, i, p, tau, d):
    n, _, s = g.rewards.shape
    return sum(g.state_probs[k] * p[j] * max(0.0, tau - g.rewards[i, j, k]) ** d
               for k in range(s) for j in range(n)) / n


def loop_clpm(g, i, j, p, tau, d):
    n, _, s = g.rewards.shape
    return sum(g.state_probs[k] * p[a] * max(0.0, tau - g.rewards[i, a, k]) ** (d - 1)
               * (tau - g.rewards[j, a, k]) for k in range(s) for a in range(n)) / n


def loop_cov(g, p):
    n, _, s = g.rewards.shape
    mu = [sum(g.state_probs[k] * p[a] * g.rewards[i, a, k] for k in range(s) for a in range(n))
          for i in range(n)]
    c = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            c[i, j] = sum(g.state_probs[k] * p[a] * (g.rewards[i, a, k] - mu[i]) * (g.rewards[j, a, k] - mu[j])
                          for k in range(s) for a in range(n))
    return c


# -- examples ------------------------------------------------------------------------

def test_lpm_clpm_hand_values(mp_game):
    assert lpm(mp_game, 0, U, 0.0, 2) == pytest.approx(0.25)
    assert clpm(mp_game, 0, 1, U, 0.0, 2) == pytest.approx(-0.25)
    assert lpm(mp_game, 0, U, 0.0, 2.5) == pytest.approx(0.25)  # shortfall 1 to any power


def test_lpm_zero_when_all_above_tau():
    g = StateGame.single_state([[1.0, 2.0], [3.0, 4.0]])
    assert lpm(g, 0, U, 0.5, 2) == 0.0
    assert clpm(g, 0, 1, U, 0.5, 2) == 0.0
    assert not raw_risk_matrix(g, U, RiskConfig(tau=0.5)).values.any()


def test_lpm_errors(mp_game):
    with pytest.raises(ContractError):
        lpm(mp_game, 2, U, 0.0, 2)
    with pytest.raises(ContractError):
        clpm(mp_game, 0, 1, U, 0.0, 1.0)


def test_raw_matrix_example(mp_game):
    raw = raw_risk_matrix(mp_game, U, RiskConfig())
    np.testing.assert_allclose(raw.values, [[0.25, -0.25], [-0.25, 0.25]], atol=1e-15)
    assert raw.stage is Stage.RAW
    one = StateGame.single_state([[-2.0]])
    assert raw_risk_matrix(one, [1.0], RiskConfig()).values.tolist() == [[4.0]]


def test_dual_examples(mp_game):
    m = symmetrize_dual(mp_game, U, RiskConfig()).values
    assert m[0, 1] == 0.0
    assert m[0, 0] == pytest.approx(0.25)


def test_dual_matches_printed_formula_for_fractional_degree(rng):
    g = StateGame(rng.normal(size=(4, 4, 2)), [0.4, 0.6])
    p = rng.dirichlet(np.ones(4))
    d, tau = 3.5, 0.2
    m = symmetrize_dual(g, p, RiskConfig(tau=tau, degree=d)).values
    sh = np.maximum(tau - g.rewards, 0.0)
    for i in range(4):
        for j in range(4):
            want = sum(g.state_probs[k] * p[a] * (sh[i, a, k] ** (d - 1) * sh[j, a, k] ** (d - 1)) ** (1 / (d - 1))
                       for k in range(2) for a in range(4)) / 4
            assert m[i, j] == pytest.approx(want, abs=1e-13)


def test_rho_examples():
    # actions 0 and 1 share a reward vector, action 2 is constant
    g = StateGame.single_state([[-1.0, 1.0, 0.5], [-1.0, 1.0, 0.5], [0.0, 0.0, 0.0]])
    cfg = RiskConfig(tau=0.1, degree=2)
    p = np.full(3, 1 / 3)
    raw = raw_risk_matrix(g, p, cfg)
    m = symmetrize_rho(raw, g, p, cfg)
    l0, l1, l2 = np.diag(raw.values)
    assert m.values[0, 1] == pytest.approx(np.sqrt(l0 * l1))
    assert m.values[0, 2] == 0.0 and m.values[2, 1] == 0.0
    assert m.diagnostics["rho_undefined_pairs"] == 2
    np.testing.assert_array_equal(np.diag(m.values), np.diag(raw.values))


def test_rho_zero_lpm_row():
    g = StateGame.single_state([[5.0, 6.0], [-1.0, 1.0]])
    cfg = RiskConfig(tau=0.0)
    m = symmetrize_rho(raw_risk_matrix(g, U, cfg), g, U, cfg).values
    assert m[0, 1] == 0.0 and m[1, 0] == 0.0


def test_transpose_examples():
    cfg = RiskConfig(pd_jitter=1e-8)
    anti = RiskMatrix([[0.0, 1.0], [-1.0, 0.0]], Stage.RAW, cfg)
    np.testing.assert_allclose(symmetrize_transpose(anti).values, 1e-8 * np.eye(2), atol=1e-20)
    pd = np.array([[2.0, 0.5], [0.5, 1.0]])
    out = symmetrize_transpose(RiskMatrix(pd, Stage.RAW, cfg))
    np.testing.assert_array_equal(out.values, pd)
    assert out.stage is Stage.PD_PROJECTED


def test_nearest_pd_examples():
    np.testing.assert_array_equal(nearest_pd(np.eye(3), 1e-8), np.eye(3))
    np.testing.assert_allclose(nearest_pd(np.diag([1.0, -1.0]), 0.0), np.diag([1.0, 0.0]), atol=1e-15)
    np.testing.assert_allclose(nearest_pd(np.diag([1.0, -1.0]), 1e-8), np.diag([1.0, 1e-8]), atol=1e-15)
    with pytest.raises(ContractError):
        nearest_pd(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_covariance_examples():
    g = StateGame.single_state([[0.0, 2.0], [1.0, 1.0]])
    c = covariance_matrix(g, U).values
    assert c[0, 0] == pytest.approx(1.0)
    assert c[1, 1] == 0.0
    flat = StateGame(np.full((3, 3, 2), 4.0), [0.5, 0.5])
    assert not covariance_matrix(flat, np.full(3, 1 / 3)).values.any()


def test_portfolio_risk_examples():
    cfg = RiskConfig()
    assert portfolio_risk([0.3, 0.7], np.zeros((2, 2))) == 0.0
    assert portfolio_risk([0.5, 0.5], RiskMatrix(np.eye(2), Stage.SYMMETRIZED, cfg)) == 0.5
    m = np.array([[3.0, 1.0], [1.0, 7.0]])
    assert portfolio_risk([0.0, 1.0], m) == 7.0
    with pytest.raises(ContractError):
        portfolio_risk([1.0], m)


def test_symmetric_stages_reject_asymmetry():
    with pytest.raises(ContractError):
        RiskMatrix([[1.0, 2.0], [0.0, 1.0]], Stage.SYMMETRIZED, RiskConfig())
    raw = RiskMatrix([[1.0, 2.0], [0.0, 1.0]], Stage.RAW, RiskConfig())
    with pytest.raises(ContractError):
        project_pd(raw)


def test_config_validation():
    with pytest.raises(ContractError):
        RiskConfig(degree=1.0)
    with pytest.raises(ContractError):
        RiskConfig(gamma=-1)
    assert RiskConfig(scheme="dual").scheme is Scheme.DUAL


@pytest.mark.property
def test_case2_sign_structure():
    # symmetric +-1 matrix, each action wins as often as it loses
    m = np.array([[1, -1, 1, -1], [-1, 1, -1, 1], [1, -1, 1, -1], [-1, 1, -1, 1]], dtype=float)
    g = StateGame.single_state(m)
    p = np.full(4, 0.25)
    raw = raw_risk_matrix(g, p, RiskConfig(tau=0.0)).values
    cov = covariance_matrix(g, p).values
    np.testing.assert_array_equal(np.sign(raw), np.sign(cov))
    np.testing.assert_allclose(np.abs(raw), np.abs(raw[0, 0]), atol=1e-15)


def test_risk_matrix_csv_round_trip(tmp_path, rng):
    g = StateGame(rng.normal(size=(3, 3, 2)), [0.5, 0.5])
    cfg = RiskConfig(tau=0.1, degree=3, scheme=Scheme.RHO)
    m = drae_risk_matrix(g, np.full(3, 1 / 3), cfg)
    sidecar = save_risk_matrix(m, tmp_path / "risk.csv")
    assert sidecar.exists()
    back = load_risk_matrix(tmp_path / "risk.csv")
    np.testing.assert_array_equal(back.values, m.values)
    assert back.stage is m.stage and back.config.scheme is Scheme.RHO


# -- properties -------------------------------------------------------------------------

@given(game_and_strategies(), st.floats(-3, 3), st.sampled_from([1.5, 2.0, 2.5, 3.0]))
def test_lpm_and_clpm_match_loops(case, tau, d):
    g, _, p = case
    n = g.n_actions
    raw = raw_risk_matrix(g, p, RiskConfig(tau=tau, degree=d)).values
    for i in range(n):
        assert raw[i, i] == pytest.approx(loop_lpm(g, i, p, tau, d), abs=1e-12)
        assert lpm(g, i, p, tau, d) == pytest.approx(raw[i, i], abs=1e-12)
        for j in range(n):
            if i != j:
                assert raw[i, j] == pytest.approx(loop_clpm(g, i, j, p, tau, d), abs=1e-12)


@given(game_and_strategies(), st.lists(st.floats(-4, 4), min_size=2, max_size=6),
       st.floats(1.1, 4.0))
def test_lpm_nonnegative_and_monotone_in_tau(case, taus, d):
    g, _, p = case
    taus = sorted(taus)
    vals = [RiskKernel(g, t, d).lpm_vector(p) for t in taus]
    for v in vals:
        assert np.all(v >= 0)
    for a, b in zip(vals, vals[1:]):
        assert np.all(b >= a - 1e-12)


@given(game_and_strategies(), st.floats(-2, 2), st.sampled_from(list(Scheme)), st.floats(1.2, 4.0))
def test_pipeline_outputs_symmetric_and_pd(case, tau, scheme, d):
    g, _, p = case
    cfg = RiskConfig(tau=tau, degree=d, scheme=scheme)
    m = drae_risk_matrix(g, p, cfg)
    assert np.array_equal(m.values, m.values.T)
    assert m.min_eigenvalue() >= cfg.pd_jitter * (1 - 1e-6) - 1e-12


@given(game_and_strategies(), st.floats(-2, 2))
def test_transpose_preserves_quadratic_form_up_to_projection(case, tau):
    g, x, p = case
    cfg = RiskConfig(tau=tau)
    raw = raw_risk_matrix(g, p, cfg)
    sym = 0.5 * (raw.values + raw.values.T)
    proj = symmetrize_transpose(raw).values
    assert x @ raw.values @ x == pytest.approx(x @ sym @ x, abs=1e-12)
    bound = np.linalg.norm(sym - proj, "fro") * (x @ x) + 1e-10
    assert abs(x @ raw.values @ x - x @ proj @ x) <= bound


@given(arrays(float, (5, 5), elements=st.floats(-10, 10)), st.floats(0, 1e-3))
def test_nearest_pd_idempotent_and_floor(a, delta):
    m = 0.5 * (a + a.T)
    once = nearest_pd(m, delta)
    assert np.linalg.eigvalsh(once)[0] >= delta - 1e-10
    np.testing.assert_allclose(nearest_pd(once, delta), once, atol=1e-10)


@given(arrays(float, (4, 4), elements=st.floats(-5, 5)), st.data())
def test_nearest_pd_is_frobenius_nearest(a, data):
    # any PSD candidate is at least as far from m as the clipped projection
    m = 0.5 * (a + a.T)
    proj = nearest_pd(m, 0.0)
    b = data.draw(arrays(float, (4, 4), elements=st.floats(-3, 3)))
    cand = b @ b.T
    assert np.linalg.norm(m - proj) <= np.linalg.norm(m - cand) + 1e-9


@given(game_and_strategies())
def test_covariance_matches_brute_force_and_psd(case):
    g, _, p = case
    c = covariance_matrix(g, p).values
    np.testing.assert_allclose(c, loop_cov(g, p), atol=1e-12)
    assert np.linalg.eigvalsh(c)[0] >= -1e-10


@given(games(max_actions=5), st.data())
def test_rho_scheme_symmetric(g, data):
    p = data.draw(simplex_points(g.n_actions))
    cfg = RiskConfig(tau=0.3)
    m = symmetrize_rho(raw_risk_matrix(g, p, cfg), g, p, cfg).values
    assert np.abs(m - m.T).max(initial=0.0) == 0.0


@given(game_and_strategies())
def test_dual_entries_nonnegative(case):
    g, _, p = case
    m = symmetrize_dual(g, p, RiskConfig(tau=0.5, degree=2.5)).values
    assert np.all(m >= 0)
