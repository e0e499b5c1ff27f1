"""Self-adaptive class weights.

Target-side classifier outputs are averaged into one score per source class,
max-normalized, clustered in 1-D into k = 1, 2 or 3 groups, and turned into a
per-class weight: 1 for the top group, 0 for the bottom group and the group mean
for a middle group.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

MAX_GROUPS = 3


@dataclass(frozen=True)
class Partition:
    """Groups of class indices, ordered from highest to lowest mean."""

    k: int
    groups: tuple
    means: tuple
    cost: float

    @property
    def sizes(self):
        return tuple(len(g) for g in self.groups)

    def assignment(self, n):
        """Group id (1-based, 1 = highest mean) for each class index."""
        out = np.zeros(n, dtype=int)
        for m, g in enumerate(self.groups, start=1):
            out[list(g)] = m
        return out


@dataclass(frozen=True)
class WeightTable:
    weights: np.ndarray
    k_star: int
    ch_scores: dict
    partition: Partition | None = None

    def lookup(self, labels):
        return self.weights[np.asarray(labels, dtype=int)]

    def to_json(self, iteration, class_scores):
        return {
            "iteration": int(iteration),
            "kStar": int(self.k_star),
            "ch2": _json_float(self.ch_scores.get(2)),
            "ch3": _json_float(self.ch_scores.get(3)),
            "wc": [float(v) for v in class_scores],
            "weights": [float(v) for v in self.weights],
        }


def _json_float(v):
    if v is None:
        return None
    if math.isinf(v):
        return "inf"
    return float(v)


def uniform_table(num_classes):
    return WeightTable(np.ones(num_classes), 1, {})


def compute_class_weights(probs):
    """Mean classifier output over target samples, divided by its max entry."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] == 0:
        raise ValueError("need at least one row of class probabilities")
    mean = probs.mean(axis=0)
    top = mean.max()
    if not top > 0:
        raise ValueError("class score vector is all zero")
    wc = mean / top
    wc[np.argmax(mean)] = 1.0
    return wc


def partition_cost(w, groups):
    """Total within-group squared deviation, divided by the class count.

    ``math.fsum`` keeps the value independent of summation order.
    """
    w = [float(v) for v in w]
    terms = []
    for g in groups:
        mu = math.fsum(w[j] for j in g) / len(g)
        terms.extend((w[j] - mu) ** 2 for j in g)
    return math.fsum(terms) / len(w)


def _group_mean(w, g):
    return math.fsum(float(w[j]) for j in g) / len(g)


def make_partition(w, groups):
    """Wrap arbitrary non-empty ``groups`` of class indices as a :class:`Partition`."""
    groups = [tuple(sorted(int(j) for j in g)) for g in groups]
    if any(not g for g in groups):
        raise ValueError("groups must be non-empty")
    means = [_group_mean(w, g) for g in groups]
    order = sorted(range(len(groups)), key=lambda t: (-means[t], groups[t]))
    return Partition(
        len(groups),
        tuple(groups[t] for t in order),
        tuple(means[t] for t in order),
        partition_cost(w, groups),
    )


def optimal_partition(w, k):
    """Exact least-squares split of ``w`` into ``k`` contiguous groups.

    Every placement of ``k - 1`` breaks over the values sorted by
    ``(value, class index)`` is scored; the lexicographically first minimum wins.
    """
    w = np.asarray(w, dtype=np.float64)
    n = len(w)
    if not 1 <= k <= MAX_GROUPS:
        raise ValueError(f"k must be 1, 2 or 3, got {k}")
    if k > n:
        raise ValueError(f"cannot split {n} classes into {k} non-empty groups")
    order = sorted(range(n), key=lambda j: (w[j], j))
    best_cost, best_groups = math.inf, None
    for breaks in itertools.combinations(range(1, n), k - 1):
        edges = (0, *breaks, n)
        groups = [order[edges[t] : edges[t + 1]] for t in range(k)]
        cost = partition_cost(w, groups)
        if cost < best_cost:
            best_cost, best_groups = cost, groups
    # highest mean first
    best_groups = [tuple(sorted(g)) for g in reversed(best_groups)]
    means = tuple(_group_mean(w, g) for g in best_groups)
    return Partition(k, tuple(best_groups), means, best_cost)


def ch_index(w, partition):
    """Calinski-Harabasz score of a partition of scalar class scores.

    Between-group dispersion weights each group by ``|S_m| / n``; the
    within-group dispersion is averaged over the ``k`` groups. A partition with
    zero within-group dispersion scores ``inf``.
    """
    w = np.asarray(w, dtype=np.float64)
    n, k = len(w), partition.k
    if k < 2:
        raise ValueError("CH index needs at least two groups")
    if n <= k:
        raise ValueError("CH index needs more classes than groups")
    mu = math.fsum(w) / n
    tr_b = math.fsum(len(g) / n * (a - mu) ** 2 for g, a in zip(partition.groups, partition.means))
    tr_s = math.fsum(
        (w[j] - a) ** 2 for g, a in zip(partition.groups, partition.means) for j in g
    ) / k
    if tr_s == 0.0:
        return math.inf
    return (tr_b / (k - 1)) / (tr_s / (n - k))


def select_k(w, tau_uniform=0.1):
    """Pick the group count.

    Returns ``(k_star, partitions, ch_scores)``. A spread below ``tau_uniform``
    means no outlier classes are detectable and gives ``k_star = 1``; otherwise
    the larger CH score among k = 2 and k = 3 wins, ties going to k = 2.
    """
    w = np.asarray(w, dtype=np.float64)
    if len(w) < 4:
        raise ValueError("group count selection needs at least 4 classes")
    partitions = {k: optimal_partition(w, k) for k in (1, 2, 3)}
    scores = {k: ch_index(w, partitions[k]) for k in (2, 3)}
    if w.max() - w.min() < tau_uniform:
        return 1, partitions, scores
    k_star = 3 if scores[3] > scores[2] else 2
    return k_star, partitions, scores


def assign_weights(w, k_star, partition, ch_scores=None):
    n = len(w)
    if partition.k != k_star:
        raise ValueError("partition group count does not match k_star")
    out = np.ones(n)
    if k_star >= 2:
        out[list(partition.groups[-1])] = 0.0
    if k_star == 3:
        out[list(partition.groups[1])] = partition.means[1]
    return WeightTable(out, k_star, dict(ch_scores or {}), partition)


def evaluate_weights(w, tau_uniform=0.1, force_k=None):
    """Full pipeline from normalized class scores to a weight table.

    ``force_k`` pins the group count (the fixed two- and three-group variants).
    """
    k_star, partitions, scores = select_k(w, tau_uniform)
    if force_k is not None:
        k_star = force_k
    return assign_weights(w, k_star, partitions[k_star], scores)
