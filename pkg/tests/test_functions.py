"""Boundary families: closed-form derivatives, bounds, rescaling inversion."""

import math

import numpy as np
import pytest

from superbranch import (
    BoundaryOutOfRange,
    Constant,
    Cosine,
    Exponential,
    Polynomial,
    RescalingKind,
    eval_derivative,
    invert_boundary,
    rescale_forward,
)
from superbranch.functions import BoundaryFunction

TYPE1 = RescalingKind("type1")
TYPE2 = RescalingKind("type2")


# -- derivatives ------------------------------------------------------


def test_eval_derivative_examples():
    assert eval_derivative(Cosine(1.0, 1.0), 1, 0.0) == pytest.approx(0.0, abs=1e-15)
    assert eval_derivative(Constant(0.5), 3, 7.0) == 0.0
    assert eval_derivative(Exponential(1.0, 0.5), 2, 0.0) == pytest.approx(0.25)


def test_cosine_offset_only_at_order_zero():
    f = Cosine(0.2, 0.5, offset=0.3)
    assert eval_derivative(f, 0, 0.0) == pytest.approx(0.5)
    assert eval_derivative(f, 2, 0.0) == pytest.approx(-0.2 * 0.25)


@pytest.mark.parametrize(
    "f",
    [
        Cosine(0.7, 0.4, phase=0.3, offset=0.1),
        Exponential(0.5, 0.3),
        Polynomial([1.0, -2.0, 0.5, 3.0]),
    ],
    ids=["cosine", "exponential", "polynomial"],
)
def test_derivative_recurrence_central_difference(f):
    """f^(n+1) equals the numeric derivative of f^(n) to 1e-6 relative."""
    h = 1e-5
    for n in range(4):
        for x in (-1.3, 0.0, 2.1):
            numeric = (eval_derivative(f, n, x + h) - eval_derivative(f, n, x - h)) / (
                2 * h
            )
            exact = eval_derivative(f, n + 1, x)
            assert numeric == pytest.approx(exact, rel=1e-6, abs=1e-8)


def test_polynomial_derivatives_terminate():
    p = Polynomial([0.0, 0.0, 1.0])  # x^2
    assert eval_derivative(p, 2, 5.0) == pytest.approx(2.0)
    assert eval_derivative(p, 3, 5.0) == 0.0


# -- admissibility bounds ---------------------------------------------


def test_cosine_bound_geometric():
    assert Cosine(0.2, 0.5).derivative_sum_bound() == pytest.approx(0.4)
    assert Cosine(1.0, 1.5).derivative_sum_bound() == math.inf
    assert Cosine(1.0, 1.0).derivative_sum_bound() == math.inf


def test_exponential_bound_window_relative():
    f = Exponential(1.0, 0.5)
    small = f.derivative_sum_bound((-1.0, 1.0))
    large = f.derivative_sum_bound((-10.0, 10.0))
    assert small < large < math.inf
    assert Exponential(1.0, 1.2).derivative_sum_bound((-1.0, 1.0)) == math.inf


def test_polynomial_bound_finite():
    assert math.isfinite(Polynomial([1.0, 0.0, 1.0]).derivative_sum_bound((-2.0, 2.0)))


def test_constant_bound():
    assert Constant(0.7).derivative_sum_bound() == pytest.approx(0.7)


# -- rescaling inversion ----------------------------------------------


def test_invert_zero_is_zero():
    f = invert_boundary(Constant(0.0), 0.3, TYPE1)
    assert float(np.asarray(f(0.0))) == pytest.approx(0.0, abs=1e-15)


def test_invert_type2_closed_form():
    f = invert_boundary(Constant(0.2), 0.2, TYPE2)
    assert float(np.asarray(f(1.0))) == pytest.approx(math.asinh(0.04) / 0.2)
    assert float(np.asarray(f(1.0))) == pytest.approx(0.1999467, abs=1e-6)


def test_invert_type1_beta_limit():
    values = [
        float(np.asarray(invert_boundary(Constant(0.5), b, TYPE1)(0.0)))
        for b in (0.1, 0.05)
    ]
    errs = [abs(v - 0.5) for v in values]
    assert errs[1] < 0.6 * errs[0]  # O(beta) convergence to g


@pytest.mark.parametrize("rescaling", [TYPE1, TYPE2], ids=["type1", "type2"])
@pytest.mark.parametrize(
    "g",
    [Cosine(0.3, 0.5, offset=0.2), Exponential(0.2, 0.3), Polynomial([0.1, 0.05])],
    ids=["cosine", "exponential", "polynomial"],
)
def test_forward_inverse_round_trip(rescaling, g):
    """rescale_forward(invert_boundary(g)) == g to 1e-12 at 100 points."""
    beta = 0.4
    f = invert_boundary(g, beta, rescaling)
    rng = np.random.default_rng(42)
    xs = rng.uniform(-3.0, 3.0, size=100)
    back = rescale_forward(np.asarray(f(xs)), beta, rescaling)
    assert np.max(np.abs(back - np.asarray(g(xs)))) < 1e-12


def test_type1_out_of_range():
    f = invert_boundary(Constant(0.9), 2.0, TYPE1)  # beta * g = 1.8 >= 1
    with pytest.raises(BoundaryOutOfRange):
        f(0.0)


def test_inverted_derivative_table_matches_finite_differences():
    g = Cosine(0.2, 0.4, offset=0.1)
    for rescaling in (TYPE1, TYPE2):
        f = invert_boundary(g, 0.3, rescaling)
        xs = np.array([-0.7, 0.0, 1.3])
        table = f.derivative_table(xs, 3)
        h = 1e-4
        for n in range(1, 4):
            lo = f.derivative_table(xs - h, n - 1)[n - 1]
            hi = f.derivative_table(xs + h, n - 1)[n - 1]
            numeric = (hi - lo) / (2 * h)
            assert np.allclose(table[n], numeric, rtol=1e-5, atol=1e-7)


def test_derivative_table_order_zero_is_value():
    g = Cosine(0.2, 0.4)
    f = invert_boundary(g, 0.3, TYPE2)
    xs = np.linspace(-1, 1, 7)
    assert np.allclose(f.derivative_table(xs, 0)[0], np.asarray(f(xs)))


# -- serialization ----------------------------------------------------


@pytest.mark.parametrize(
    "f",
    [
        Cosine(0.2, 0.5, phase=0.1, offset=0.3),
        Exponential(1.5, -0.2),
        Polynomial([1.0, 2.0]),
        Constant(0.25),
    ],
    ids=["cosine", "exponential", "polynomial", "constant"],
)
def test_json_round_trip(f):
    assert BoundaryFunction.from_json(f.to_json()) == f


def test_from_json_unknown_family():
    with pytest.raises(ValueError):
        BoundaryFunction.from_json({"family": "gaussian", "a": 1.0})
