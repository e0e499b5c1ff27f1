import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sapda import nn, oracles
from sapda.data import philox

from conftest import random_params

PROBE = np.array([[0.5, -1.0], [2.0, 1.5]])
# recorded from the seed-42 network after the gradient checks passed
GOLDEN_PROBE = np.array(
    [
        [0.4179072856270819, 0.29348049567424384, 0.17925775596627994, 0.10935446273239426],
        [0.05691484086395117, 0.2058466346907844, 0.20024200682041754, 0.5369965176248469],
    ]
)


def test_zero_network_classifier_is_uniform():
    p = nn.NetworkParams.zeros(3, 5)
    probs, _ = nn.forward(p, np.random.default_rng(0).normal(size=(7, 3)), "classifier")
    assert np.array_equal(probs, np.full((7, 5), 0.2))


@pytest.mark.parametrize("head", ["domain", "cluster"])
def test_zero_network_binary_heads_are_half(head):
    p = nn.NetworkParams.zeros(3, 5)
    out, _ = nn.forward(p, np.ones((4, 3)), head)
    assert np.array_equal(out, np.full(4, 0.5))


def test_golden_probe():
    p = nn.NetworkParams.init(2, 4, philox(42, 1))
    probs, _ = nn.forward(p, PROBE, "classifier")
    np.testing.assert_array_equal(probs, GOLDEN_PROBE)


def test_dimension_mismatch():
    p = nn.NetworkParams.zeros(3, 4)
    with pytest.raises(nn.ConfigurationError):
        nn.forward(p, np.ones((2, 4)), "classifier")
    with pytest.raises(nn.ConfigurationError):
        nn.forward(p, np.ones((0, 3)), "classifier")
    with pytest.raises(nn.ConfigurationError):
        nn.forward(p, np.ones((1, 3)), "softmax")


def test_shapes_and_classifier_width(rng):
    p = nn.NetworkParams.init(2, 7, rng)
    assert p.weights["c.W"].shape == (16, 7)
    assert p.weights["f1.W"].shape == (2, 64)
    assert {k: v.shape for k, v in p.grads.items()} == {k: v.shape for k, v in p.weights.items()}


def test_single_linear_layer_squared_loss_closed_form(rng):
    # head_backward on the classifier layer is a plain affine map of the features
    p = nn.NetworkParams.init(2, 3, rng, hidden=4, feature_dim=5)
    f = rng.normal(size=(1, 5))
    y = rng.normal(size=(1, 3))
    ht = nn.head_forward(p, f, "classifier")
    p.zero_grad()
    nn.head_backward(p, ht, 2.0 * (ht.logits - y))
    W, b = p.weights["c.W"], p.weights["c.b"]
    resid = f @ W + b - y
    np.testing.assert_allclose(p.grads["c.W"], 2.0 * f.T @ resid, rtol=1e-14, atol=1e-15)
    np.testing.assert_allclose(p.grads["c.b"], 2.0 * resid[0], rtol=1e-14, atol=1e-15)


def _ce(p, x, y):
    probs, _ = nn.forward(p, x, "classifier")
    return float(-np.log(probs[np.arange(len(y)), y]).mean())


def test_cross_entropy_finite_differences(rng):
    p = random_params(rng)
    x = rng.normal(size=(9, 3)) * 2
    y = rng.integers(0, 5, size=9)
    probs, tape = nn.forward(p, x, "classifier")
    g = probs.copy()
    g[np.arange(9), y] -= 1.0
    p.zero_grad()
    nn.backward(p, tape, g / 9)
    picks = oracles.sample_parameter_indices(
        _restricted(p, ("f1", "f2", "f3", "c")), 100, rng
    )
    assert len(picks) == 100
    for name, idx in picks:
        fd = oracles.finite_difference(lambda q: _ce(q, x, y), p, name, idx)
        assert oracles.relative_error(p.grads[name][idx], fd) < 1e-4, (name, idx)


def _restricted(p, layers):
    sub = nn.NetworkParams(p.input_dim, p.num_classes, p.hidden, p.feature_dim)
    sub.weights = {k: v for k, v in p.weights.items() if k.split(".")[0] in layers}
    return sub


def test_zero_upstream_gives_zero_gradient(rng):
    p = random_params(rng)
    _, tape = nn.forward(p, rng.normal(size=(4, 3)), "domain")
    p.zero_grad()
    nn.backward(p, tape, np.zeros(4))
    assert all(not v.any() for v in p.grads.values())


def test_stale_tape_rejected(rng):
    p = random_params(rng)
    _, tape = nn.forward(p, rng.normal(size=(4, 3)), "classifier")
    p.grads["c.b"] += 1.0
    nn.sgd_step(p, nn.LrSchedule(), 0.0)
    with pytest.raises(nn.StaleTapeError):
        nn.backward(p, tape, np.zeros((4, 5)))


def _feature_grad(lam, reverse, rng_seed=5):
    r = philox(rng_seed, 0)
    p = random_params(r)
    x = r.normal(size=(6, 3))
    _, tape = nn.forward(p, x, "domain")
    p.zero_grad()
    up = r.normal(size=6)
    nn.backward(p, tape, up, nn.GradientReversal(lam) if reverse else None)
    return {k: v for k, v in p.grads.items() if k.startswith("f")}, p


def test_reversal_forward_is_identity(rng):
    f = rng.normal(size=(5, 4))
    out = nn.reverse_gradient(f, 3.0)
    assert out is f or np.array_equal(out, f)


def test_reversal_lambda_zero_blocks_gradient():
    g, _ = _feature_grad(0.0, True)
    assert all(not v.any() for v in g.values())


def test_reversal_lambda_one_negates():
    rev, _ = _feature_grad(1.0, True)
    plain, _ = _feature_grad(0.0, False)
    for k in plain:
        np.testing.assert_array_equal(rev[k], -plain[k])


def test_reversal_linear_in_lambda():
    one, _ = _feature_grad(1.0, True)
    two, _ = _feature_grad(2.0, True)
    for k in one:
        np.testing.assert_allclose(two[k], 2.0 * one[k], rtol=1e-13, atol=1e-300)


def test_reversal_rejects_negative():
    with pytest.raises(ValueError):
        nn.GradientReversal(-0.1)


def test_rate_schedule():
    s = nn.LrSchedule(0.01, 10.0, 0.75)
    assert s.rate(0.0) == 0.01
    assert math.isclose(s.rate(1.0), 1.6556002607617019e-3, rel_tol=1e-12)
    rates = [s.rate(q) for q in np.linspace(0, 1, 50)]
    assert all(a >= b > 0 for a, b in zip(rates, rates[1:]))
    with pytest.raises(ValueError):
        s.rate(1.5)


def test_sgd_zero_gradient_leaves_params(rng):
    p = random_params(rng)
    before = {k: v.copy() for k, v in p.weights.items()}
    nn.sgd_step(p, nn.LrSchedule(), 0.3)
    for k in before:
        np.testing.assert_array_equal(p.weights[k], before[k])


def test_sgd_update_rule_and_zeroing(rng):
    p = random_params(rng)
    g = {k: rng.normal(size=v.shape) for k, v in p.weights.items()}
    before = {k: v.copy() for k, v in p.weights.items()}
    for k in g:
        p.grads[k][...] = g[k]
    s = nn.LrSchedule(0.05, 10.0, 0.75)
    nn.sgd_step(p, s, 0.5)
    for k in g:
        np.testing.assert_array_equal(p.weights[k], before[k] - s.rate(0.5) * g[k])
        assert not p.grads[k].any()


def test_sgd_rejects_non_finite(rng):
    p = random_params(rng)
    p.grads["f2.W"][0, 0] = np.nan
    with pytest.raises(nn.NonFiniteError):
        nn.sgd_step(p, nn.LrSchedule(), 0.0)


def test_grl_ramp():
    assert nn.grl_lambda(0.0) == 0.0
    assert 0.999 < nn.grl_lambda(1.0) < 1.0


def test_init_deterministic():
    a = nn.NetworkParams.init(2, 8, philox(3, 1))
    b = nn.NetworkParams.init(2, 8, philox(3, 1))
    for k in a.weights:
        np.testing.assert_array_equal(a.weights[k], b.weights[k])


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (6, 2), elements=st.floats(-50, 50)))
def test_output_ranges(x):
    p = nn.NetworkParams.init(2, 5, philox(11, 1))
    probs, _ = nn.forward(p, x, "classifier")
    assert np.all(np.abs(probs.sum(axis=1) - 1.0) < 1e-12)
    for head in ("domain", "cluster"):
        out, _ = nn.forward(p, x, head)
        assert np.all((out > 0) & (out < 1))
