"""Independent reference computations used by the invariant suite and tests.

Nothing here shares code with the paths it checks: partitions are enumerated
over every set partition (not just contiguous ones), the CH score is evaluated
term by term with plain loops, and gradients are central finite differences.
"""

from __future__ import annotations

import math

import numpy as np


def set_partitions(n, k):
    """Yield every partition of ``range(n)`` into exactly ``k`` non-empty blocks.

    Uses restricted growth strings, so each partition appears once.
    """
    labels = [0] * n

    def rec(i, used):
        if i == n:
            if used == k:
                blocks = [[] for _ in range(k)]
                for j, b in enumerate(labels):
                    blocks[b].append(j)
                yield blocks
            return
        if k - used > n - i:
            return
        for b in range(min(used + 1, k)):
            labels[i] = b
            yield from rec(i + 1, used + (b == used))

    yield from rec(0, 0)


def brute_force_partition(w, k):
    """Lowest within-group cost over all set partitions; returns ``(cost, blocks)``."""
    w = [float(v) for v in w]
    n = len(w)
    best = (math.inf, None)
    for blocks in set_partitions(n, k):
        sq = []
        for b in blocks:
            mean = math.fsum(w[j] for j in b) / len(b)
            for j in b:
                sq.append((w[j] - mean) ** 2)
        cost = math.fsum(sq) / n
        if cost < best[0]:
            best = (cost, blocks)
    return best


def reference_ch(w, blocks):
    """Calinski-Harabasz score written out loop by loop."""
    n, k = len(w), len(blocks)
    grand = 0.0
    for v in w:
        grand += v
    grand /= n
    between = 0.0
    within = 0.0
    for b in blocks:
        centre = 0.0
        for j in b:
            centre += w[j]
        centre /= len(b)
        between += (len(b) / n) * (centre - grand) * (centre - grand)
        for j in b:
            within += (w[j] - centre) * (w[j] - centre)
    within /= k
    if within == 0.0:
        return math.inf
    return (between / (k - 1)) / (within / (n - k))


def finite_difference(fn, params, name, index, h=1e-5):
    """Central difference of scalar ``fn(params)`` w.r.t. one parameter entry."""
    plus = params.copy()
    plus.weights[name][index] += h
    minus = params.copy()
    minus.weights[name][index] -= h
    return (fn(plus) - fn(minus)) / (2.0 * h)


def sample_parameter_indices(params, count, rng):
    """``count`` distinct (name, index) pairs drawn uniformly over all scalars."""
    names = sorted(params.weights)
    sizes = [params.weights[n].size for n in names]
    offsets = np.cumsum([0] + sizes)
    flat = rng.choice(offsets[-1], size=min(count, offsets[-1]), replace=False)
    out = []
    for f in sorted(flat):
        i = int(np.searchsorted(offsets, f, side="right") - 1)
        arr = params.weights[names[i]]
        out.append((names[i], np.unravel_index(int(f - offsets[i]), arr.shape)))
    return out


def relative_error(a, b, floor=1e-8):
    return abs(a - b) / max(abs(a), abs(b), floor)


def nearest_centroid_accuracy(train_x, train_y, test_x, test_y):
    classes = np.unique(train_y)
    cents = np.stack([train_x[train_y == c].mean(axis=0) for c in classes])
    d = ((test_x[:, None, :] - cents[None, :, :]) ** 2).sum(axis=2)
    return float(np.mean(classes[np.argmin(d, axis=1)] == test_y))
