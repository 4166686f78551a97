import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from drae.game import StateGame

settings.register_profile(
    "default",
    max_examples=200,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def pytest_collection_modifyitems(items):
    for item in items:
        if getattr(getattr(item, "obj", None), "is_hypothesis_test", False):
            item.add_marker(pytest.mark.property)

finite = st.floats(min_value=-5, max_value=5, allow_nan=False, allow_infinity=False)


@st.composite
def games(draw, max_actions=5, max_states=3, min_actions=1):
    n = draw(st.integers(min_actions, max_actions))
    s = draw(st.integers(1, max_states))
    r = draw(arrays(float, (n, n, s), elements=finite))
    w = draw(arrays(float, s, elements=st.floats(0.05, 1.0)))
    return StateGame(r, w / w.sum())


@st.composite
def simplex_points(draw, n, eps=0.0):
    w = draw(arrays(float, n, elements=st.floats(0.0, 1.0)))
    w = w + 1e-3
    return eps + (1 - n * eps) * w / w.sum()


@st.composite
def game_and_strategies(draw, max_actions=5, max_states=3):
    g = draw(games(max_actions, max_states))
    a = draw(simplex_points(g.n_actions))
    b = draw(simplex_points(g.n_actions))
    return g, a, b


def random_game(rng, n, s=1, scale=1.0):
    q = rng.uniform(0.1, 1.0, s)
    return StateGame(scale * rng.normal(size=(n, n, s)), q / q.sum())


def random_simplex(rng, n):
    return rng.dirichlet(np.ones(n))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def mp_game():
    """Matching-pennies-like 2x2 coordination game used throughout the examples."""
    return StateGame.single_state([[1.0, -1.0], [-1.0, 1.0]])
