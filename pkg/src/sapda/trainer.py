"""End-to-end training loop with periodic class-weight re-estimation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import losses, nn
from .data import STREAM_BATCH, STREAM_INIT, minibatch, philox
from .weights import WeightTable, compute_class_weights, evaluate_weights, select_k, uniform_table

log = logging.getLogger(__name__)

MODES = (
    "sapda",
    "sapda-hard2",
    "sapda-soft3",
    "unweighted-adversarial",
    "source-only",
    "no-cluster-head",
    "no-weight-eval",
)

# mode -> (adversarial, cluster head, entropy factor, weighting)
_MODE_TABLE = {
    "sapda": (True, True, True, "adaptive"),
    "sapda-hard2": (True, True, True, "k2"),
    "sapda-soft3": (True, True, True, "k3"),
    "unweighted-adversarial": (True, False, False, "none"),
    "source-only": (False, False, False, "none"),
    "no-cluster-head": (True, False, True, "adaptive"),
    "no-weight-eval": (True, True, True, "soft"),
}

BETA_SWEEP = (0.01, 0.02, 0.05, 0.1, 0.5, 1.0)


class TrainingAborted(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 4000
    interval: int = 250
    batch_size: int = 64
    beta: float = 0.1
    gamma0: float = 0.01
    eta: float = 10.0
    alpha: float = 0.75
    lambda_ramp: bool = True
    tau_uniform: float = 0.1
    mode: str = "sapda"
    seed: int = 0
    balanced_source: bool = True
    target_entropy_min: bool = False
    entropy_lambda: float = 0.1
    hidden: int = 64
    feature_dim: int = 16

    def validate(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; valid modes: {', '.join(MODES)}")
        if self.interval < 1:
            raise ValueError("interval must be at least 1")
        if self.iterations < self.interval:
            raise ValueError("iterations must be >= interval")
        if self.iterations % self.interval:
            raise ValueError("iterations must be a multiple of interval")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if not self.gamma0 > 0:
            raise ValueError("gamma0 must be positive")
        if self.eta < 0 or self.alpha < 0:
            raise ValueError("eta and alpha must be non-negative")
        if self.tau_uniform < 0:
            raise ValueError("tau_uniform must be non-negative")
        return self

    @property
    def schedule(self):
        return nn.LrSchedule(self.gamma0, self.eta, self.alpha)


@dataclass
class RunRow:
    iteration: int
    loss_c: float
    loss_d: float
    loss_cl: float
    total: float
    accuracy: float
    k_star: int
    ch2: float | None
    ch3: float | None
    clamp_count: int
    class_scores: np.ndarray
    weights: np.ndarray


@dataclass
class RunResult:
    params: nn.NetworkParams
    history: list = field(default_factory=list)
    config: TrainConfig | None = None

    @property
    def final(self):
        return self.history[-1]


def predict(params, x):
    probs, _ = nn.forward(params, x, "classifier")
    return probs


def evaluate(params, test_set):
    """Fraction of labeled samples whose argmax prediction is correct."""
    if test_set.labels is None or len(test_set) == 0:
        raise ValueError("evaluation needs a non-empty labeled set")
    pred = np.argmax(predict(params, test_set.inputs), axis=1)
    return float(np.mean(pred == test_set.labels))


def class_scores(params, target_set):
    return compute_class_weights(predict(params, target_set.inputs))


def _frozen(table):
    table.weights.setflags(write=False)
    return table


def update_table(config, scores):
    _, _, _, weighting = _MODE_TABLE[config.mode]
    n = len(scores)
    if weighting == "none":
        return _frozen(uniform_table(n))
    if weighting == "soft":
        k_star, _, ch = select_k(scores, config.tau_uniform)
        return _frozen(WeightTable(np.array(scores, dtype=np.float64), k_star, ch))
    force = {"adaptive": None, "k2": 2, "k3": 3}[weighting]
    return _frozen(evaluate_weights(scores, config.tau_uniform, force_k=force))


def train(task, config, on_row=None):
    """Train on ``task``; returns a :class:`RunResult` with one row per update."""
    config.validate()
    adversarial, use_cluster, use_entropy, _ = _MODE_TABLE[config.mode]
    spec = task.spec
    params = nn.NetworkParams.init(
        spec.input_dim,
        spec.source_classes,
        philox(config.seed, STREAM_INIT),
        config.hidden,
        config.feature_dim,
    )
    rng = philox(config.seed, STREAM_BATCH)
    table = _frozen(uniform_table(spec.source_classes))
    schedule = config.schedule
    result = RunResult(params, [], config)
    acc = {"c": 0.0, "d": 0.0, "cl": 0.0, "clamp": 0}
    T = config.iterations

    for it in range(1, T + 1):
        q = (it - 1) / T
        lam = nn.grl_lambda(q) if config.lambda_ramp else 1.0
        sb = minibatch(task.source, config.batch_size, rng, balanced=config.balanced_source)
        tb = minibatch(task.target_train, config.batch_size, rng)
        ns = len(sb.inputs)
        ft = nn.extract(params, np.vstack([sb.inputs, tb.inputs]))
        fs, ftg = ft.features[:ns], ft.features[ns:]
        w = table.lookup(sb.labels)
        grad_f = np.zeros_like(ft.features)

        l_c, g = losses.classifier_loss_from_features(params, fs, sb.labels, w, use_entropy)
        grad_f[:ns] += g
        l_d = l_cl = 0.0
        clamps = 0
        if adversarial:
            coef = w
            if use_entropy:
                probs = nn.head_forward(params, fs, "classifier").probs
                coef = w * losses.entropy_weight(probs)
            l_d, gs, gt, k = losses.domain_loss_from_features(params, fs, ftg, coef, lam)
            grad_f[:ns] += gs
            grad_f[ns:] += gt
            clamps += k
        if use_cluster and config.beta > 0:
            l_cl, gs, gt, k = losses.cluster_loss_from_features(params, fs, ftg, w, config.beta)
            grad_f[:ns] += gs
            grad_f[ns:] += gt
            clamps += k
        if config.target_entropy_min and adversarial:
            _, g = losses.target_entropy_from_features(params, ftg, config.entropy_lambda)
            grad_f[ns:] += g

        if not all(math.isfinite(v) for v in (l_c, l_d, l_cl)):
            raise TrainingAborted(
                f"non-finite loss at iteration {it}: L_c={l_c} L_d={l_d} L_cl={l_cl}"
            )
        nn.extract_backward(params, ft, grad_f)
        try:
            nn.sgd_step(params, schedule, q)
        except nn.NonFiniteError as exc:
            raise TrainingAborted(f"iteration {it}: {exc}") from exc

        acc["c"] += l_c
        acc["d"] += l_d
        acc["cl"] += l_cl
        acc["clamp"] += clamps

        if it % config.interval == 0:
            scores = class_scores(params, task.target_train)
            table = update_table(config, scores)
            n_it = config.interval
            row = RunRow(
                iteration=it,
                loss_c=acc["c"] / n_it,
                loss_d=acc["d"] / n_it,
                loss_cl=acc["cl"] / n_it,
                total=(acc["c"] + config.beta * acc["cl"]) / n_it,
                accuracy=evaluate(params, task.target_test),
                k_star=table.k_star,
                ch2=table.ch_scores.get(2),
                ch3=table.ch_scores.get(3),
                clamp_count=acc["clamp"],
                class_scores=scores,
                weights=np.array(table.weights),
            )
            result.history.append(row)
            acc = {"c": 0.0, "d": 0.0, "cl": 0.0, "clamp": 0}
            log.debug(
                "it=%d acc=%.4f k*=%d weights=%s", it, row.accuracy, row.k_star, row.weights
            )
            if on_row is not None:
                on_row(row)
    return result


def run_ablations(task, base_config, modes=MODES):
    """Train every mode with the same task and seed."""
    if not modes:
        raise ValueError("need at least one mode")
    for m in modes:
        if m not in MODES:
            raise ValueError(f"unknown mode {m!r}; valid modes: {', '.join(MODES)}")
    return {m: train(task, replace(base_config, mode=m)) for m in modes}
