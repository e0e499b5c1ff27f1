"""Small dense network with hand-written reverse mode.

Four sub-networks share one parameter store:

    extractor   x -> tanh(64) -> tanh(64) -> tanh(feature_dim)
    classifier  features -> |C_s| logits   (softmax)
    domain      features -> 1 logit        (logistic)
    cluster     features -> 1 logit        (logistic)

Weights are stored as ``(fan_in, fan_out)`` so a layer computes ``x @ W + b``.
Every backward routine *accumulates* into ``params.grads``; ``sgd_step`` consumes
and zeroes them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

HEADS = ("classifier", "domain", "cluster")
EXTRACTOR_LAYERS = ("f1", "f2", "f3")
_HEAD_LAYER = {"classifier": "c", "domain": "d", "cluster": "cl"}


class ConfigurationError(ValueError):
    """Raised for shape or configuration mismatches."""


class StaleTapeError(RuntimeError):
    """Raised when a tape is replayed against parameters that changed since forward."""


class NonFiniteError(FloatingPointError):
    """Raised when a gradient or parameter stops being finite."""


@dataclass
class NetworkParams:
    input_dim: int
    num_classes: int
    hidden: int = 64
    feature_dim: int = 16
    weights: dict = field(default_factory=dict)
    grads: dict = field(default_factory=dict)
    version: int = 0

    @classmethod
    def init(cls, input_dim, num_classes, rng, hidden=64, feature_dim=16):
        """Glorot-uniform weights, zero biases."""
        if input_dim < 1 or num_classes < 1:
            raise ConfigurationError("input_dim and num_classes must be positive")
        p = cls(input_dim, num_classes, hidden, feature_dim)
        for name, (fan_in, fan_out) in p.layer_shapes().items():
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            p.weights[name + ".W"] = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            p.weights[name + ".b"] = np.zeros(fan_out)
        p.zero_grad()
        return p

    @classmethod
    def zeros(cls, input_dim, num_classes, hidden=64, feature_dim=16):
        p = cls(input_dim, num_classes, hidden, feature_dim)
        for name, (fan_in, fan_out) in p.layer_shapes().items():
            p.weights[name + ".W"] = np.zeros((fan_in, fan_out))
            p.weights[name + ".b"] = np.zeros(fan_out)
        p.zero_grad()
        return p

    def layer_shapes(self):
        h, f = self.hidden, self.feature_dim
        return {
            "f1": (self.input_dim, h),
            "f2": (h, h),
            "f3": (h, f),
            "c": (f, self.num_classes),
            "d": (f, 1),
            "cl": (f, 1),
        }

    def zero_grad(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.weights.items()}

    def copy(self):
        return NetworkParams(
            self.input_dim,
            self.num_classes,
            self.hidden,
            self.feature_dim,
            {k: v.copy() for k, v in self.weights.items()},
            {k: v.copy() for k, v in self.grads.items()},
            self.version,
        )

    def touch(self):
        """Mark parameters as mutated; outstanding tapes become stale."""
        self.version += 1

    def num_scalars(self):
        return sum(v.size for v in self.weights.values())


@dataclass
class FeatureTape:
    x: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    features: np.ndarray
    version: int


@dataclass
class HeadTape:
    head: str
    features: np.ndarray
    logits: np.ndarray
    probs: np.ndarray
    version: int


@dataclass
class Tape:
    feature: FeatureTape
    head: HeadTape


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def extract(params, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ConfigurationError("expected a non-empty (batch, input_dim) array")
    if x.shape[1] != params.input_dim:
        raise ConfigurationError(
            f"input dimension {x.shape[1]} does not match extractor input {params.input_dim}"
        )
    w = params.weights
    h1 = np.tanh(x @ w["f1.W"] + w["f1.b"])
    h2 = np.tanh(h1 @ w["f2.W"] + w["f2.b"])
    f = np.tanh(h2 @ w["f3.W"] + w["f3.b"])
    return FeatureTape(x, h1, h2, f, params.version)


def head_forward(params, features, head):
    if head not in _HEAD_LAYER:
        raise ConfigurationError(f"unknown head {head!r}; expected one of {HEADS}")
    name = _HEAD_LAYER[head]
    logits = features @ params.weights[name + ".W"] + params.weights[name + ".b"]
    if head == "classifier":
        probs = softmax(logits)
    else:
        logits = logits[:, 0]
        probs = sigmoid(logits)
    return HeadTape(head, features, logits, probs, params.version)


def forward(params, x, head):
    """Run ``x`` through the extractor and one head.

    Returns ``(probs, tape)``. Classifier rows lie on the simplex; the domain and
    cluster heads return one logistic output per sample.
    """
    ft = extract(params, x)
    ht = head_forward(params, ft.features, head)
    return ht.probs, Tape(ft, ht)


def _check_fresh(params, tape_version):
    if tape_version != params.version:
        raise StaleTapeError(
            f"tape recorded at version {tape_version}, parameters now at {params.version}"
        )


def head_backward(params, tape, grad_logits):
    """Accumulate head parameter gradients; return the gradient w.r.t. features."""
    _check_fresh(params, tape.version)
    name = _HEAD_LAYER[tape.head]
    g = np.asarray(grad_logits, dtype=np.float64)
    if g.ndim == 1:
        g = g[:, None]
    params.grads[name + ".W"] += tape.features.T @ g
    params.grads[name + ".b"] += g.sum(axis=0)
    return g @ params.weights[name + ".W"].T


def extract_backward(params, tape, grad_features):
    _check_fresh(params, tape.version)
    w, gr = params.weights, params.grads
    d3 = grad_features * (1.0 - tape.features**2)
    gr["f3.W"] += tape.h2.T @ d3
    gr["f3.b"] += d3.sum(axis=0)
    d2 = (d3 @ w["f3.W"].T) * (1.0 - tape.h2**2)
    gr["f2.W"] += tape.h1.T @ d2
    gr["f2.b"] += d2.sum(axis=0)
    d1 = (d2 @ w["f2.W"].T) * (1.0 - tape.h1**2)
    gr["f1.W"] += tape.x.T @ d1
    gr["f1.b"] += d1.sum(axis=0)
    return d1 @ w["f1.W"].T


def backward(params, tape, grad_logits, reversal=None):
    """Backpropagate a logit-space gradient through one head and the extractor.

    ``reversal`` is an optional :class:`GradientReversal` placed between the
    extractor and the head.
    """
    grad_f = head_backward(params, tape.head, grad_logits)
    if reversal is not None:
        grad_f = reversal.backward(grad_f)
    extract_backward(params, tape.feature, grad_f)


class GradientReversal:
    """Identity forward; multiplies the backward gradient by ``-lam``."""

    def __init__(self, lam=1.0):
        if lam < 0:
            raise ValueError("reversal scale must be non-negative")
        self.lam = float(lam)

    def forward(self, features):
        return features

    def backward(self, grad):
        return -self.lam * grad


def reverse_gradient(features, lam):
    return GradientReversal(lam).forward(features)


def grl_lambda(progress, gamma=10.0):
    """Adversarial weight ramp from 0 at the start to ~1 at the end."""
    return 2.0 / (1.0 + math.exp(-gamma * progress)) - 1.0


@dataclass(frozen=True)
class LrSchedule:
    gamma0: float = 0.01
    eta: float = 10.0
    alpha: float = 0.75

    def rate(self, progress):
        if not 0.0 <= progress <= 1.0:
            raise ValueError(f"progress must lie in [0, 1], got {progress}")
        return self.gamma0 / (1.0 + self.eta * progress) ** self.alpha


def sgd_step(params, schedule, progress):
    """Plain SGD update at the annealed rate; gradients are zeroed afterwards."""
    for name, g in params.grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient in {name}")
    rate = schedule.rate(progress)
    for name, g in params.grads.items():
        params.weights[name] -= rate * g
        if not np.all(np.isfinite(params.weights[name])):
            raise NonFiniteError(f"non-finite parameter in {name} after update")
    params.zero_grad()
    params.touch()
    return params
