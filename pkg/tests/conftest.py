import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from src.bench import gen_cs  # noqa: E402
from src.models.problems import Problem, ProblemKind  # noqa: E402

FIXTURES_DIR = os.path.join(os.path.dirname(__file__), "fixtures")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def fixtures_dir():
    return FIXTURES_DIR


@pytest.fixture
def small_cs():
    """Noiseless 60 x 150 compressed-sensing instance with 6 nonzeros."""
    return gen_cs(60, 150, 6, nf=0.0, seed=3)


@pytest.fixture
def decoupled_problem():
    """A = I, b = (3, 0, 0, 0, 0): every coordinate is its own 1-D problem."""
    return Problem(ProblemKind.LEAST_SQUARES, np.eye(5), np.array([3.0, 0.0, 0.0, 0.0, 0.0]))


@pytest.fixture
def model_problems(rng):
    """One small instance of each model, keyed by kind."""
    m, n = 30, 12
    A = rng.standard_normal((m, n))
    return {
        ProblemKind.LEAST_SQUARES: Problem(ProblemKind.LEAST_SQUARES, A, rng.standard_normal(m)),
        ProblemKind.LOGISTIC_L2: Problem(
            ProblemKind.LOGISTIC_L2, A, (rng.random(m) < 0.5).astype(float), ridge=0.1
        ),
        ProblemKind.SQUARED_HINGE_SVM: Problem(
            ProblemKind.SQUARED_HINGE_SVM, A, np.where(rng.random(m) < 0.5, -1.0, 1.0), ridge=0.1
        ),
    }
