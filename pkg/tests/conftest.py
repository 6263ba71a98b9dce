import numpy as np
import pytest
from hypothesis import strategies as st

from bellforge.config import NoiseSpec
from bellforge.linalg import Layout, random_hermitian, random_state, random_unitary
from bellforge.questions import Question, QuestionSet
from bellforge.strategy import depolarize, honest_strategy

ATOL = 1e-9


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running checks, deselect with -m \"not slow\"")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=[1, 2, 3])
def honest(request):
    return honest_strategy(request.param)


@pytest.fixture
def honest2():
    return honest_strategy(2)


def specials_of(*texts, m=5):
    return QuestionSet([Question.parse(text, m) for text in texts], m)


def noisy(n, p):
    return depolarize(honest_strategy(n), NoiseSpec("depolarizing", p))


seeds = st.integers(min_value=0, max_value=2 ** 32 - 1)


@st.composite
def unitaries(draw, dim=2):
    return random_unitary(dim, np.random.default_rng(draw(seeds)))


@st.composite
def hermitians(draw, dim=2, scale=1.0):
    return random_hermitian(dim, np.random.default_rng(draw(seeds)), scale)


@st.composite
def states(draw, layout=Layout.qubits(["A", "B"])):
    return random_state(layout, np.random.default_rng(draw(seeds)))
