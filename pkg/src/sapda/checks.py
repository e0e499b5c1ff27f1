"""Invariant suite run by ``sapda check``.

Each check returns a :class:`CheckResult`; :func:`run_all` runs them in order.
The suite uses its own fixed seeds and finishes in well under a minute.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import losses, nn, oracles
from .data import BLOBS8TO4, generate_task, philox
from .weights import (
    WeightTable,
    assign_weights,
    compute_class_weights,
    evaluate_weights,
    optimal_partition,
    select_k,
)

GRAD_TOL = 1e-4
GRAD_H = 1e-5


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def _random_simplex(rng, n, c):
    z = rng.normal(size=(n, c)) * 2.0
    return nn.softmax(z)


def check_simplex_rows(rng):
    params = nn.NetworkParams.init(3, 6, rng)
    x = rng.normal(size=(50, 3)) * 3
    probs, _ = nn.forward(params, x, "classifier")
    dom, _ = nn.forward(params, x, "domain")
    cl, _ = nn.forward(params, x, "cluster")
    err = float(np.max(np.abs(probs.sum(axis=1) - 1.0)))
    inside = bool(np.all((dom > 0) & (dom < 1) & (cl > 0) & (cl < 1)))
    return CheckResult(
        "softmax rows on simplex, logistic outputs in (0,1)",
        err < 1e-12 and inside and bool(np.all(probs >= 0)),
        f"max |row sum - 1| = {err:.2e}",
    )


def check_normalization(rng):
    worst = 0.0
    ok = True
    for _ in range(200):
        p = _random_simplex(rng, rng.integers(1, 20), rng.integers(2, 12))
        wc = compute_class_weights(p)
        ok &= wc.max() == 1.0 and bool(np.all((wc >= 0) & (wc <= 1)))
        worst = max(worst, abs(wc.max() - 1.0))
    return CheckResult("class scores max-normalized into [0,1]", ok, f"max |max-1| = {worst}")


def check_entropy_weight(rng):
    ms = []
    for c in (2, 3, 8, 31):
        ms.append(losses.entropy_weight(_random_simplex(rng, 200, c)))
        ms.append(losses.entropy_weight(np.eye(c)))
        ms.append(losses.entropy_weight(np.full((1, c), 1.0 / c)))
    m = np.concatenate(ms)
    ok = bool(np.all((m > 1.0) & (m <= 2.0)))
    return CheckResult("entropy weight in (1, 2]", ok, f"range [{m.min():.6f}, {m.max():.6f}]")


def _random_scores(rng, n):
    w = rng.uniform(0, 1, size=n)
    return w / w.max()


def check_weight_image(rng):
    ok = True
    for _ in range(300):
        w = _random_scores(rng, int(rng.integers(4, 16)))
        t = evaluate_weights(w)
        vals = set(np.unique(t.weights))
        if t.k_star == 1:
            ok &= vals == {1.0}
        elif t.k_star == 2:
            ok &= vals <= {0.0, 1.0}
        else:
            p = t.partition
            a3 = p.means[1]
            ok &= vals <= {0.0, 1.0, a3} and 0.0 < a3 < 1.0
            ok &= max(w[j] for j in p.groups[2]) < a3 < min(w[j] for j in p.groups[0])
        shared_min = min(w[j] for j in t.partition.groups[0]) if t.partition else -1
        ok &= bool(np.all(t.weights[w >= shared_min] == 1.0))
    return CheckResult("weight table image within {0, group mean, 1}", bool(ok))


def check_monotone_cost(rng):
    ok = True
    for _ in range(300):
        w = rng.uniform(0, 1, size=int(rng.integers(3, 14)))
        c = [optimal_partition(w, k).cost for k in (1, 2, 3)]
        ok &= c[2] <= c[1] <= c[0]
    return CheckResult("partition cost non-increasing in k", bool(ok))


def check_permutation(rng):
    ok = True
    for _ in range(200):
        n = int(rng.integers(4, 14))
        w = _random_scores(rng, n)
        perm = rng.permutation(n)
        a = evaluate_weights(w)
        b = evaluate_weights(w[perm])
        ok &= a.k_star == b.k_star and np.array_equal(a.weights[perm], b.weights)
    return CheckResult("weight table permutes with class indices", bool(ok))


def check_scale(rng):
    ok = True
    for _ in range(200):
        w = rng.uniform(0.05, 1, size=int(rng.integers(4, 12)))
        c = float(rng.uniform(0.1, 10))
        for k in (2, 3):
            p, q = optimal_partition(w, k), optimal_partition(c * w, k)
            ok &= p.groups == q.groups
            ok &= math.isclose(q.cost, c * c * p.cost, rel_tol=1e-9, abs_tol=1e-15)
    return CheckResult("partition cost scales with c^2, groups unchanged", bool(ok))


def check_partition_oracle(rng, trials=60):
    ok = True
    for _ in range(trials):
        n = int(rng.integers(4, 9))
        w = rng.uniform(0, 1, size=n)
        for k in (2, 3):
            ok &= optimal_partition(w, k).cost == oracles.brute_force_partition(w, k)[0]
    return CheckResult("contiguous search matches exhaustive set partitions", bool(ok))


def check_outlier_invisibility(rng):
    task = generate_task(BLOBS8TO4)
    params = nn.NetworkParams.init(2, 8, philox(7, 1))
    idx = rng.integers(0, len(task.source), size=64)
    xs, ys = task.source.inputs[idx].copy(), task.source.labels[idx]
    xt = task.target_train.inputs[rng.integers(0, len(task.target_train), size=64)]
    weights = np.ones(8)
    weights[5] = 0.0
    table = WeightTable(weights, 2, {})
    hidden = ys == 5

    def grads(x_src):
        p = params.copy()
        p.zero_grad()
        losses.weighted_classifier_loss(p, x_src, ys, table)
        g_c = {k: v.copy() for k, v in p.grads.items()}
        p.zero_grad()
        fs = nn.extract(p, x_src)
        ft = nn.extract(p, xt)
        coef = table.lookup(ys) * losses.entropy_weight(
            nn.head_forward(p, fs.features, "classifier").probs
        )
        _, gs, _, _ = losses.domain_loss_from_features(p, fs.features, ft.features, coef, 1.0)
        nn.extract_backward(p, fs, gs)
        return g_c, {k: v.copy() for k, v in p.grads.items()}

    a_c, a_d = grads(xs)
    moved = xs.copy()
    moved[hidden] += rng.normal(size=(int(hidden.sum()), 2)) * 5.0
    b_c, b_d = grads(moved)
    same = all(np.array_equal(a_c[k], b_c[k]) for k in a_c) and all(
        np.array_equal(a_d[k], b_d[k]) for k in a_d
    )
    return CheckResult(
        "zero-weight class samples do not affect gradients",
        bool(same and hidden.any()),
        f"{int(hidden.sum())} perturbed samples",
    )


def gradient_check(loss, n_params=100, seed=0, reversal=None):
    """Compare accumulated gradients with central differences.

    ``loss`` is one of ``classifier``, ``domain`` or ``cluster``. Returns
    ``(max_rel_err, checked)``. For ``domain`` with ``reversal=lam`` only
    extractor entries are compared, against ``lam`` times the objective
    gradient.
    """
    rng = philox(seed, 9)
    ncls = 5
    params = nn.NetworkParams.init(3, ncls, rng, hidden=12, feature_dim=6)
    for v in params.weights.values():
        v += rng.normal(scale=0.1, size=v.shape)
    xs = rng.normal(size=(16, 3)) * 2
    ys = rng.integers(0, ncls, size=16)
    xt = rng.normal(size=(12, 3)) * 2 + 0.5
    w = rng.choice([0.0, 0.4, 1.0], size=ncls)
    table = WeightTable(w, 3, {})
    base_probs, _ = nn.forward(params, xs, "classifier")
    m = losses.entropy_weight(base_probs)
    coef = table.lookup(ys) * m

    if loss == "classifier":
        heads = ("c",)

        def analytic(p):
            losses.weighted_classifier_loss(p, xs, ys, table, use_entropy=True)

        def value(p):
            ft = nn.extract(p, xs)
            return losses.classifier_loss_from_features(p, ft.features, ys, coef, False)[0]

    elif loss == "domain":
        heads = ("d",)
        lam = reversal

        def analytic(p):
            losses.weighted_domain_loss(
                p, xs, ys, xt, table, lam=lam or 0.0, reverse=reversal is not None
            )

        def value(p):
            fs, ft = nn.extract(p, xs), nn.extract(p, xt)
            obj = losses.domain_loss_from_features(p, fs.features, ft.features, coef)[0]
            return lam * obj if reversal is not None else -obj

    elif loss == "cluster":
        heads = ("cl",)

        def analytic(p):
            losses.cluster_loss(p, xs, ys, xt, table)

        def value(p):
            fs, ft = nn.extract(p, xs), nn.extract(p, xt)
            return losses.cluster_loss_from_features(p, fs.features, ft.features, table.lookup(ys))[0]

    else:
        raise ValueError(f"unknown loss {loss!r}")

    layers = ("f1", "f2", "f3") if reversal is not None else ("f1", "f2", "f3") + heads
    sub = nn.NetworkParams(params.input_dim, params.num_classes, params.hidden, params.feature_dim)
    sub.weights = {k: v for k, v in params.weights.items() if k.split(".")[0] in layers}
    picks = oracles.sample_parameter_indices(sub, n_params, rng)

    p = params.copy()
    p.zero_grad()
    analytic(p)
    worst = 0.0
    for name, index in picks:
        fd = oracles.finite_difference(value, params, name, index, GRAD_H)
        worst = max(worst, oracles.relative_error(p.grads[name][index], fd))
    return worst, len(picks)


def check_gradients(rng, n_params=100):
    results = []
    for loss in ("classifier", "domain", "cluster"):
        err, n = gradient_check(loss, n_params)
        results.append((loss, err, n))
    err, n = gradient_check("domain", n_params, reversal=0.7)
    results.append(("domain (reversed)", err, n))
    ok = all(e < GRAD_TOL for _, e, _ in results)
    detail = ", ".join(f"{name}: {e:.1e} over {n}" for name, e, n in results)
    return CheckResult("finite-difference gradient agreement", ok, detail)


def reversal_gradients(lam, reverse=True, seed=3):
    rng = philox(seed, 9)
    params = nn.NetworkParams.init(2, 4, rng, hidden=10, feature_dim=5)
    xs, xt = rng.normal(size=(10, 2)), rng.normal(size=(9, 2)) + 1
    ys = rng.integers(0, 4, size=10)
    table = WeightTable(np.array([1.0, 1.0, 0.5, 0.0]), 3, {})
    params.zero_grad()
    losses.weighted_domain_loss(params, xs, ys, xt, table, lam=lam, reverse=reverse)
    return {k: v for k, v in params.grads.items() if k.startswith("f")}


def check_reversal(rng):
    plain = reversal_gradients(0.0, reverse=False)
    worst = 0.0
    for lam in (0.0, 0.5, 1.0, 2.0):
        rev = reversal_gradients(lam)
        for k in plain:
            scale = np.abs(lam * plain[k]).max() + 1e-300
            worst = max(worst, float(np.abs(rev[k] + lam * plain[k]).max() / scale))
    return CheckResult(
        "gradient reversal antisymmetry", worst < 1e-12, f"max relative residual {worst:.1e}"
    )


def check_select_k_examples(rng):
    cases = [
        (np.full(6, 1.0), 1),
        (np.array([1, 0.98, 0.96, 0.05, 0.03, 0.01]), 2),
        (np.array([1, 0.97, 0.52, 0.48, 0.04, 0.01]), 3),
    ]
    got = [select_k(w)[0] for w, _ in cases]
    want = [k for _, k in cases]
    return CheckResult("group count selection on reference vectors", got == want, f"got {got}")


def check_assign_rules(rng):
    w = np.array([1.0, 0.9, 0.1, 0.05])
    t2 = assign_weights(w, 2, optimal_partition(w, 2))
    w3 = np.array([1, 0.97, 0.52, 0.48, 0.04, 0.01])
    t3 = assign_weights(w3, 3, optimal_partition(w3, 3))
    ok = list(t2.weights) == [1, 1, 0, 0] and np.allclose(t3.weights[2:4], 0.5, atol=1e-15)
    return CheckResult("two- and three-group weight rules", bool(ok))


CHECKS = (
    check_simplex_rows,
    check_normalization,
    check_entropy_weight,
    check_weight_image,
    check_monotone_cost,
    check_permutation,
    check_scale,
    check_partition_oracle,
    check_select_k_examples,
    check_assign_rules,
    check_outlier_invisibility,
    check_reversal,
    check_gradients,
)


def run_all(seed=0):
    out = []
    for fn in CHECKS:
        rng = philox(seed, 100 + len(out))
        t0 = time.perf_counter()
        try:
            res = fn(rng)
        except Exception as exc:  # report, keep going
            res = CheckResult(fn.__name__, False, f"raised {type(exc).__name__}: {exc}")
        res.detail = (res.detail + f" [{time.perf_counter() - t0:.2f}s]").strip()
        out.append(res)
    return out
