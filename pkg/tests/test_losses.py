import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from glrnet.errors import ConfigurationError
from glrnet.losses import (
    cross_entropy,
    cross_entropy_grad,
    get_loss,
    get_loss_grad,
    softmax,
    zero_one_loss,
)

finite = st.floats(-50, 50, allow_nan=False)
vectors = arrays(np.float64, st.integers(2, 10), elements=finite)


def hot(k, m):
    o = np.zeros(m)
    o[k] = 1.0
    return o


def test_softmax_uniform():
    assert np.allclose(softmax(np.zeros(10)), 0.1, atol=1e-15)


def test_softmax_two_point():
    e = math.e
    assert np.allclose(softmax([1.0, 0.0]), [e / (e + 1), 1 / (e + 1)], atol=1e-15)
    assert softmax([1.0, 0.0])[0] == pytest.approx(0.7311, abs=1e-4)


def test_softmax_survives_large_inputs():
    p = softmax([1000.0, 0.0, -1000.0])
    assert np.all(np.isfinite(p)) and p[0] == 1.0


@settings(max_examples=100)
@given(x=vectors, c=finite)
def test_softmax_normalised_and_shift_invariant(x, c):
    p = softmax(x)
    assert np.all(p >= 0)
    assert abs(p.sum() - 1.0) <= 1e-12
    assert np.allclose(softmax(x + c), p, atol=1e-12, rtol=0)


def test_cross_entropy_uniform_is_log10():
    assert cross_entropy(np.zeros(10), hot(3, 10)) == pytest.approx(math.log(10), abs=1e-12)
    assert cross_entropy(np.zeros(10), hot(3, 10)) == pytest.approx(2.302585, abs=1e-6)


def test_cross_entropy_two_point():
    expected = -math.log(math.e / (math.e + 1))
    assert cross_entropy([1.0, 0.0], hot(0, 2)) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.3133, abs=1e-4)


def test_cross_entropy_vanishes_for_dominant_hot_entry():
    losses = [cross_entropy([s, 0.0, 0.0], hot(0, 3)) for s in (1, 10, 30)]
    assert losses[0] > losses[1] > losses[2] > 0
    assert losses[2] < 1e-12


@settings(max_examples=100)
@given(x=vectors, k=st.integers(0, 9))
def test_cross_entropy_non_negative(x, k):
    assert cross_entropy(x, hot(k % len(x), len(x))) >= 0


def test_cross_entropy_grad_uniform():
    g = cross_entropy_grad(np.zeros(10), hot(0, 10))
    assert np.allclose(g, [-0.9] + [0.1] * 9, atol=1e-15)


@settings(max_examples=50)
@given(x=arrays(np.float64, st.integers(2, 10), elements=st.floats(-5, 5)), k=st.integers(0, 9))
def test_cross_entropy_grad_sums_to_zero_and_matches_fd(x, k):
    o = hot(k % len(x), len(x))
    g = cross_entropy_grad(x, o)
    assert abs(g.sum()) < 1e-12
    h = 1e-6
    fd = np.array([(cross_entropy(x + h * e, o) - cross_entropy(x - h * e, o)) / (2 * h)
                   for e in np.eye(len(x))])
    assert np.allclose(g, fd, atol=1e-6)


def test_zero_one_examples():
    x = np.array([5.0] + [0.0] * 9)
    assert zero_one_loss(x, hot(0, 10)) == 0.0
    assert zero_one_loss(x, hot(1, 10)) == 1.0
    assert zero_one_loss(np.zeros(10), hot(0, 10)) == 0.0


@settings(max_examples=100)
@given(x=arrays(np.float64, st.integers(2, 10), elements=st.integers(-64, 64).map(lambda i: i / 8)),
       k=st.integers(0, 9))
def test_zero_one_invariant_under_increasing_map(x, k):
    o = hot(k % len(x), len(x))
    assert zero_one_loss(2 * x + 3, o) == zero_one_loss(x, o)


def test_losses_broadcast_over_batches():
    x = np.zeros((4, 3, 10))
    o = np.broadcast_to(hot(2, 10), (3, 10))
    assert cross_entropy(x, o).shape == (4, 3)
    assert zero_one_loss(x, o).shape == (4, 3)


def test_registry_lookups():
    assert get_loss("zero_one") is zero_one_loss
    assert get_loss_grad("cross_entropy") is cross_entropy_grad
    with pytest.raises(ConfigurationError):
        get_loss("hinge")
    with pytest.raises(ConfigurationError):
        get_loss_grad("zero_one")
