import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from botcascade import nn

finite = st.floats(-50, 50, allow_nan=False)


def test_softmax_examples():
    np.testing.assert_allclose(nn.softmax([0, 0]), [0.5, 0.5], atol=1e-12)
    np.testing.assert_allclose(nn.softmax([1, 1, 1]), [1 / 3] * 3, atol=1e-12)
    np.testing.assert_allclose(nn.softmax([math.log(2), 0]), [2 / 3, 1 / 3], atol=1e-12)


def test_softmax_large_logits_do_not_overflow():
    p = nn.softmax([1000.0, 0.0])
    assert np.all(np.isfinite(p)) and p[0] == pytest.approx(1.0)


@given(arrays(np.float64, st.integers(1, 6), elements=finite))
def test_softmax_is_a_distribution(z):
    p = nn.softmax(z)
    assert np.all(p >= 0) and abs(p.sum() - 1) < 1e-9


@given(arrays(np.float64, st.integers(1, 6), elements=finite), st.floats(-100, 100))
def test_softmax_shift_invariant(z, c):
    np.testing.assert_allclose(nn.softmax(z), nn.softmax(z + c), atol=1e-9)


def test_cross_entropy_examples():
    assert nn.cross_entropy_loss([1, 0], [1, 0]) == 0
    assert nn.cross_entropy_loss([1, 0], [0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-12)
    assert nn.cross_entropy_loss([0, 1], [0.25, 0.75]) == pytest.approx(-math.log(0.75), abs=1e-12)


def test_cross_entropy_clips_zero_probability():
    assert nn.cross_entropy_loss([1, 0], [0, 1]) == pytest.approx(-math.log(1e-12))


def test_cross_entropy_shape_mismatch():
    with pytest.raises(ValueError):
        nn.cross_entropy_loss([1, 0], [0.2, 0.3, 0.5])


@given(arrays(np.float64, 3, elements=finite), st.integers(0, 2))
def test_cross_entropy_nonnegative(z, k):
    y = np.eye(3)[k]
    assert nn.cross_entropy_loss(y, nn.softmax(z)) >= 0


def test_expsum_examples():
    assert nn.expsum_activation([0.0]) == pytest.approx(0.5)
    assert nn.expsum_activation([0.0, 0.0]) == pytest.approx(2 / 3, abs=1e-12)
    assert nn.expsum_activation([-1000.0]) < 1e-6
    assert nn.expsum_activation([1000.0, 1000.0]) == pytest.approx(1.0)


@given(arrays(np.float64, st.integers(1, 5), elements=finite))
def test_expsum_matches_direct_formula(z):
    f = np.exp(z).sum()
    assert nn.expsum_activation(z) == pytest.approx(f / (f + 1), rel=1e-9, abs=1e-12)


@given(arrays(np.float64, 2, elements=finite), st.floats(0, 20))
def test_expsum_monotone_in_logits(z, bump):
    assert nn.expsum_activation(z + bump) >= nn.expsum_activation(z) - 1e-15


def test_dense_forward_examples():
    x = np.array([[1.0, -2.0], [3.0, 4.0]])
    np.testing.assert_allclose(nn.dense_forward(x, np.eye(2), np.zeros(2)), x)
    np.testing.assert_allclose(nn.dense_forward([[-1.0, 2.0]], np.eye(2), np.zeros(2), "leaky_relu"), [[-0.2, 2.0]])
    out = nn.dense_forward([[1.0, 1.0]], [[1.0], [1.0]], [0.0], "sigmoid")
    assert out[0, 0] == pytest.approx(1 / (1 + math.exp(-2)), abs=1e-12)


def test_dense_forward_shape_error():
    with pytest.raises(ValueError):
        nn.dense_forward(np.ones((1, 3)), np.ones((2, 2)), np.zeros(2))
    with pytest.raises(ValueError):
        nn.dense_forward(np.ones((1, 2)), np.ones((2, 2)), np.zeros(2), "swish")


def test_adam_examples():
    params = {"w": np.array([0.0])}
    state = nn.AdamState(0.1)
    nn.adam_update(params, {"w": np.array([1.0])}, state)
    assert params["w"][0] == pytest.approx(-0.1, abs=1e-6)
    assert state.step == 1
    params = {"w": np.array([1.5, -2.0])}
    state = nn.AdamState(0.1)
    nn.adam_update(params, {"w": np.zeros(2)}, state)
    np.testing.assert_array_equal(params["w"], [1.5, -2.0])
    assert state.step == 1


def test_adam_deterministic():
    def run():
        p = {"w": np.array([0.3, 0.1])}
        s = nn.AdamState(0.01, beta1=0.5)
        for g in ([1.0, -1.0], [0.2, 0.4]):
            nn.adam_update(p, {"w": np.array(g)}, s)
        return p["w"]
    np.testing.assert_array_equal(run(), run())


def test_adam_rejects_non_finite_gradient_by_name():
    params = {"a": np.zeros(2), "b": np.zeros(2)}
    with pytest.raises(FloatingPointError, match="'b'"):
        nn.adam_update(params, {"a": np.ones(2), "b": np.array([np.nan, 0])}, nn.AdamState(0.1))
    np.testing.assert_array_equal(params["a"], 0)


def test_grad_check_quadratic():
    params = {"p": np.random.default_rng(0).normal(size=(4, 3))}
    err = nn.grad_check(lambda ps: (0.5 * float((ps["p"] ** 2).sum()), {"p": ps["p"].copy()}), params)
    assert err < 1e-7


def _dense_ce(x, y):
    def loss_fn(ps):
        pre = x @ ps["W"] + ps["b"]
        h = nn.sigmoid(pre)
        z = h @ ps["V"]
        p = nn.softmax(z)
        n = len(x)
        loss = float(np.mean(-np.log(p[np.arange(n), y])))
        dz = p.copy()
        dz[np.arange(n), y] -= 1
        dz /= n
        dh = dz @ ps["V"].T
        gpre = dh * h * (1 - h)
        return loss, {"W": x.T @ gpre, "b": gpre.sum(0), "V": h.T @ dz}
    return loss_fn


def test_grad_check_dense_sigmoid_cross_entropy():
    r = np.random.default_rng(1)
    x = r.normal(size=(5, 4))
    y = r.integers(0, 2, 5)
    params = {"W": r.normal(size=(4, 3)), "b": r.normal(size=3), "V": r.normal(size=(3, 2))}
    assert nn.grad_check(_dense_ce(x, y), params, probe_count=20) < 1e-4


def test_grad_check_expsum_bce():
    r = np.random.default_rng(2)
    x = r.normal(size=(6, 3))
    t = r.integers(0, 2, 6).astype(float)

    def loss_fn(ps):
        z = x @ ps["W"]
        s = nn.logsumexp(z)
        loss = nn.binary_cross_entropy_from_logit(s, t)
        dz = ((nn.sigmoid(s) - t) / len(x))[:, None] * nn.softmax(z)
        return loss, {"W": x.T @ dz}
    assert nn.grad_check(loss_fn, {"W": r.normal(size=(3, 2))}, probe_count=6) < 1e-4


def test_grad_check_detects_wrong_gradient():
    params = {"p": np.ones(3)}
    err = nn.grad_check(lambda ps: (float((ps["p"] ** 2).sum()), {"p": ps["p"].copy()}), params, probe_count=3)
    assert err > 0.1


def test_fan_in_uniform_bounds():
    w = nn.fan_in_uniform(np.random.default_rng(0), 24, 100)
    assert w.shape == (24, 100)
    assert np.abs(w).max() <= math.sqrt(6 / 24)


def test_dropout_mask_scaling():
    m = nn.dropout_mask(np.random.default_rng(0), (2000, 50), 0.4)
    assert set(np.unique(m)) <= {0.0, 1 / 0.6}
    assert m.mean() == pytest.approx(1.0, abs=0.02)
    np.testing.assert_array_equal(nn.dropout_mask(np.random.default_rng(0), (3, 3), 0.0), 1)


def test_weights_round_trip_and_validation():
    blocks = {"a": np.arange(6.0).reshape(2, 3), "b": np.array([0.5])}
    doc = nn.weights_to_dict(blocks)
    back = nn.weights_from_dict(doc, {"a": (2, 3), "b": (1,)})
    np.testing.assert_array_equal(back["a"], blocks["a"])
    with pytest.raises(ValueError):
        nn.weights_from_dict(doc, {"a": (3, 2), "b": (1,)})
    with pytest.raises(ValueError):
        nn.weights_from_dict(doc, {"c": (1,)})
    with pytest.raises(ValueError):
        nn.weights_from_dict({**doc, "version": 99})
