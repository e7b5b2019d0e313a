import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsdrop.model import (
    InputSample,
    StudentNetwork,
    activation,
    activation_deriv,
    forward,
    inner_potentials,
    make_student,
    make_teacher,
    sample_input,
)
from tsdrop.rng import STUDENT, TEACHER, CounterRNG

from conftest import naive_dot

finite = st.floats(-50, 50, allow_nan=False)


def erf_oracle(x):
    mpmath.mp.dps = 30
    return float(mpmath.erf(mpmath.mpf(x) / mpmath.sqrt(2)))


def test_activation_at_origin():
    assert activation(0.0) == 0.0


def test_activation_at_three():
    assert activation(3.0) == pytest.approx(0.99730, abs=1e-5)
    assert activation(3.0) == pytest.approx(erf_oracle(3.0), abs=1e-12)


@pytest.mark.parametrize("x", [-4.5, -1.0, -0.1, 0.3, 1.0, 2.2, 6.0])
def test_activation_matches_high_precision_erf(x):
    assert activation(x) == pytest.approx(erf_oracle(x), abs=1e-12)


@given(finite)
def test_activation_odd_and_bounded(x):
    assert activation(-x) == -activation(x)
    assert -1.0 <= activation(x) <= 1.0


def test_activation_strictly_increasing_on_grid():
    x = np.linspace(-5, 5, 2001)
    assert np.all(np.diff(activation(x)) > 0)


def test_deriv_at_origin():
    h = 1e-5
    fd = (activation(h) - activation(-h)) / (2 * h)
    assert activation_deriv(0.0) == pytest.approx(0.7978845608, abs=1e-9)
    assert activation_deriv(0.0) == pytest.approx(fd, abs=1e-9)


@given(finite)
def test_deriv_even(x):
    assert activation_deriv(x) == activation_deriv(-x)


def test_deriv_matches_central_difference():
    h = 1e-4
    x = np.linspace(-6, 6, 2401)
    fd = (activation(x + h) - activation(x - h)) / (2 * h)
    assert np.max(np.abs(activation_deriv(x) - fd)) <= 1e-6


def test_deriv_positive_and_peaks_at_zero():
    x = np.linspace(-8, 8, 4001)
    d = activation_deriv(x)
    assert np.all(d > 0)
    assert np.all(d <= activation_deriv(0.0))
    assert activation_deriv(0.0) == pytest.approx(math.sqrt(2 / math.pi), abs=1e-15)


def test_orthogonal_teacher_rows_nearly_orthogonal():
    t = make_teacher(2, 1000, "orthogonal", CounterRNG(3, TEACHER))
    assert abs(t.B[0] @ t.B[1]) < 0.15
    assert np.all(t.v == 0.5)
    norms = np.linalg.norm(t.B, axis=1)
    assert np.all(np.abs(norms - 1) < 4 / math.sqrt(1000))


def test_singular_teacher_copies_row():
    t = make_teacher(2, 1000, "singular", CounterRNG(3, TEACHER))
    assert np.array_equal(t.B[0], t.B[1])
    assert t.v.tolist() == [0.5, 0.5]


def test_singular_teacher_requires_two_units():
    with pytest.raises(ValueError, match="M=2"):
        make_teacher(3, 10, "singular", CounterRNG(1, TEACHER))


def test_teacher_is_immutable():
    t = make_teacher(2, 10, "orthogonal", CounterRNG(1, TEACHER))
    with pytest.raises(ValueError):
        t.B[0, 0] = 1.0
    with pytest.raises(Exception):
        t.v = np.zeros(2)


def test_teacher_row_norm_mean_one_across_seeds():
    sq = np.array([np.sum(make_teacher(1, 4, "orthogonal", CounterRNG(s, TEACHER)).B ** 2)
                   for s in range(1000)])
    # |B|^2 = chi2_4 / 4: mean 1, variance 2/4
    assert abs(sq.mean() - 1.0) < 3 * sq.std(ddof=1) / math.sqrt(sq.size)


def test_orthonormalize_option():
    t = make_teacher(3, 50, "orthogonal", CounterRNG(2, TEACHER), orthonormalize=True)
    assert np.allclose(t.B @ t.B.T, np.eye(3), atol=1e-12)


def test_student_init_statistics():
    w = np.concatenate([make_student(2, 1000, CounterRNG(s, STUDENT)).w for s in range(1000)])
    assert abs(w.var(ddof=1) - 0.1) < 0.01
    norms = np.concatenate([np.linalg.norm(make_student(4, 1000, CounterRNG(s, STUDENT)).J, axis=1)
                            for s in range(200)])
    assert abs(norms.mean() - 1.0) < 0.01


def test_student_deterministic():
    a = make_student(3, 20, CounterRNG(5, STUDENT))
    b = make_student(3, 20, CounterRNG(5, STUDENT))
    assert np.array_equal(a.J, b.J) and np.array_equal(a.w, b.w)


def test_rademacher_norm_exact():
    x = sample_input(333, "rademacher", CounterRNG(1, 3))
    assert x.norm_sq == 333.0


def test_gaussian_norm_concentrates():
    x = sample_input(10_000, "gaussian", CounterRNG(1, 3))
    assert 0.9 <= x.norm_sq / 10_000 <= 1.1
    assert x.norm_sq == pytest.approx(float(np.sum(x.xi ** 2)), rel=1e-14)


def test_sample_deterministic():
    a = sample_input(50, "gaussian", CounterRNG(4, 3))
    b = sample_input(50, "gaussian", CounterRNG(4, 3))
    assert np.array_equal(a.xi, b.xi)


def test_inner_potentials_trivial_cases():
    x = sample_input(5, "gaussian", CounterRNG(1, 3))
    assert np.array_equal(inner_potentials(np.zeros((3, 5)), x), np.zeros(3))
    assert np.allclose(inner_potentials(np.eye(5), x), x.xi, rtol=0, atol=0)


def test_inner_potentials_match_naive_sum():
    gen = np.random.default_rng(0)
    W = gen.normal(size=(4, 37))
    x = InputSample(gen.normal(size=37))
    got = inner_potentials(W, x)
    for r in range(4):
        assert got[r] == pytest.approx(naive_dot(W[r], x.xi), rel=1e-12)


def test_inner_potentials_dimension_mismatch():
    with pytest.raises(ValueError):
        inner_potentials(np.zeros((2, 4)), InputSample(np.zeros(5)))


def test_forward_examples():
    assert forward([0.0, 0.0], [0.3, -2.0]) == 0.0
    assert forward([0.5, 0.5], [0.0, 0.0]) == 0.0
    assert forward([0.5, 0.5], [1.0, 1.0]) == pytest.approx(2 * 0.5 * erf_oracle(1.0), abs=1e-6)
    assert forward([0.5, 0.5], [1.0, 1.0]) == pytest.approx(0.682689492137086, abs=1e-12)


def test_forward_dimension_mismatch():
    with pytest.raises(ValueError):
        forward([1.0], [0.0, 1.0])


@settings(max_examples=100)
@given(st.lists(st.tuples(finite, finite, finite), min_size=1, max_size=6),
       st.floats(-3, 3), st.floats(-3, 3))
def test_forward_linear_in_out_weights(rows, a, b):
    u = np.array([r[0] for r in rows])
    z = np.array([r[1] for r in rows])
    y = np.array([r[2] for r in rows])
    lhs = forward(a * u + b * z, y)
    rhs = a * forward(u, y) + b * forward(z, y)
    scale = np.sum(np.abs(a * u) + np.abs(b * z)) + 1e-300
    assert abs(lhs - rhs) <= 1e-12 * scale


def test_student_shape_check():
    with pytest.raises(ValueError):
        StudentNetwork(np.zeros((2, 3)), np.zeros(3))
