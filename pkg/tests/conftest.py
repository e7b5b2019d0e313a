import numpy as np
import pytest

from tsdrop.model import make_student, make_teacher
from tsdrop.rng import STUDENT, TEACHER, CounterRNG


@pytest.fixture
def pair():
    """Small orthogonal teacher (M=2) and student (K=3) at N=50."""
    teacher = make_teacher(2, 50, "orthogonal", CounterRNG(11, TEACHER))
    student = make_student(3, 50, CounterRNG(11, STUDENT))
    return teacher, student


def naive_dot(a, b):
    total = 0.0
    for x, y in zip(a, b):
        total += float(x) * float(y)
    return total


@pytest.fixture
def rng():
    return CounterRNG(2024, 99)


def random_psd_state(seed, M=2, K=3):
    """Gram matrix of random vectors, split into T, R, Q."""
    gen = np.random.default_rng(seed)
    X = gen.normal(size=(M + K, 40)) / np.sqrt(40)
    G = X @ X.T
    G = 0.5 * (G + G.T)
    return G[:M, :M], G[M:, :M], G[M:, M:]


ACCEPTANCE_RESULTS = {}


def record_criterion(number, passed, detail):
    ACCEPTANCE_RESULTS[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        passed, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
