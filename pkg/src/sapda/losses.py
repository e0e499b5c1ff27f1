"""Weighted classifier, adversarial domain, and cluster losses.

Each ``*_from_features`` function works on already-extracted features: it returns
the loss value together with the gradient w.r.t. the features, and accumulates
head-parameter gradients into ``params.grads``. The public wrappers run the
extractor as well, which is what the gradient checks exercise.

Sample weights ``w`` and entropy factors ``m`` are constants during
differentiation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn

CLAMP = 1e-7


@dataclass
class LossBundle:
    classifier: float
    domain: float
    cluster: float
    beta: float
    clamp_count: int = 0

    @property
    def total(self):
        return self.classifier + self.beta * self.cluster


def entropy(probs):
    p = np.asarray(probs, dtype=np.float64)
    safe = np.where(p > 0, p, 1.0)
    return -(p * np.log(safe)).sum(axis=-1)


def entropy_weight(probs):
    """Confidence factor ``1 + exp(-H)``, in (1, 2]."""
    return 1.0 + np.exp(-entropy(probs))


def _clamp(p):
    clipped = np.clip(p, CLAMP, 1.0 - CLAMP)
    return clipped, int(np.count_nonzero(clipped != p))


def classifier_loss_from_features(params, features, labels, sample_weights, use_entropy=True):
    ht = nn.head_forward(params, features, "classifier")
    n = len(labels)
    labels = np.asarray(labels, dtype=int)
    p = ht.probs
    m = entropy_weight(p) if use_entropy else np.ones(n)
    coef = np.asarray(sample_weights, dtype=np.float64) * m
    picked = p[np.arange(n), labels]
    ce = -np.log(np.maximum(picked, 1e-300))
    loss = float((coef * ce).sum() / n)
    grad = p.copy()
    grad[np.arange(n), labels] -= 1.0
    grad *= (coef / n)[:, None]
    grad_f = nn.head_backward(params, ht, grad)
    return loss, grad_f


def domain_loss_from_features(params, feat_s, feat_t, source_coef, lam=1.0, reverse=True):
    """Adversarial objective ``mean_s(c log D) + mean_t log(1 - D)``.

    The discriminator ascends the objective (its stored gradient is the negated
    objective gradient). With ``reverse`` the extractor receives ``lam`` times the
    objective gradient, so it descends it; without reversal every parameter sees
    the gradient of the negated objective.

    Returns ``(objective, grad_feat_s, grad_feat_t, clamp_count)``.
    """
    ns, nt = len(feat_s), len(feat_t)
    if ns == 0 or nt == 0:
        raise ValueError("domain loss needs non-empty source and target batches")
    feats = np.vstack([feat_s, feat_t])
    ht = nn.head_forward(params, feats, "domain")
    d, clamps = _clamp(ht.probs)
    c = np.asarray(source_coef, dtype=np.float64)
    ds, dt = d[:ns], d[ns:]
    obj = float((c * np.log(ds)).sum() / ns + np.log(1.0 - dt).sum() / nt)
    # d(obj)/d(logit): source c(1-D)/ns, target -D/nt; clamped entries pass no gradient
    g = np.concatenate([c * (1.0 - ds) / ns, -dt / nt])
    g[d != ht.probs] = 0.0
    grad_f = nn.head_backward(params, ht, -g)
    if reverse:
        grad_f = nn.GradientReversal(lam).backward(grad_f)
    return obj, grad_f[:ns], grad_f[ns:], clamps


def _bce(p, t):
    return -(t * np.log(p) + (1.0 - t) * np.log(1.0 - p))


def cluster_loss_from_features(params, feat_s, feat_t, source_targets, scale=1.0):
    """Soft-label binary cross-entropy of the cluster head.

    Source samples target their class weight; target samples target 1. The loss is
    the sum of the two domain means. ``scale`` multiplies the gradients only.
    """
    ns, nt = len(feat_s), len(feat_t)
    feats = np.vstack([feat_s, feat_t])
    ht = nn.head_forward(params, feats, "cluster")
    p, clamps = _clamp(ht.probs)
    t = np.concatenate([np.asarray(source_targets, dtype=np.float64), np.ones(nt)])
    per = _bce(p, t)
    loss = float(per[:ns].sum() / ns + per[ns:].sum() / nt)
    denom = np.concatenate([np.full(ns, ns), np.full(nt, nt)]).astype(np.float64)
    g = scale * (p - t) / denom
    g[p != ht.probs] = 0.0
    grad_f = nn.head_backward(params, ht, g)
    return loss, grad_f[:ns], grad_f[ns:], clamps


def target_entropy_from_features(params, feat_t, scale=1.0):
    """Mean prediction entropy on target samples (optional extra term)."""
    ht = nn.head_forward(params, feat_t, "classifier")
    p = ht.probs
    h = entropy(p)
    logp = np.log(np.maximum(p, 1e-300))
    # dH/dz_k = -p_k (log p_k + H)
    g = -p * (logp + h[:, None]) * (scale / len(p))
    grad_f = nn.head_backward(params, ht, g)
    return float(h.mean()), grad_f


def weighted_classifier_loss(params, x, labels, table, use_entropy=True):
    """Weighted, entropy-scaled cross-entropy on a source batch; accumulates gradients."""
    ft = nn.extract(params, x)
    w = table.lookup(labels)
    loss, grad_f = classifier_loss_from_features(params, ft.features, labels, w, use_entropy)
    nn.extract_backward(params, ft, grad_f)
    return loss


def weighted_domain_loss(params, xs, labels, xt, table, lam=1.0, use_entropy=True, reverse=True):
    """Weighted adversarial objective over a source and a target batch.

    Returns ``(objective, clamp_count)``.
    """
    fs = nn.extract(params, xs)
    fts = nn.extract(params, xt)
    coef = table.lookup(labels)
    if use_entropy:
        probs = nn.head_forward(params, fs.features, "classifier").probs
        coef = coef * entropy_weight(probs)
    obj, gs, gt, clamps = domain_loss_from_features(
        params, fs.features, fts.features, coef, lam, reverse
    )
    nn.extract_backward(params, fs, gs)
    nn.extract_backward(params, fts, gt)
    return obj, clamps


def cluster_loss(params, xs, labels, xt, table, scale=1.0):
    """Returns ``(loss, clamp_count)``."""
    fs = nn.extract(params, xs)
    fts = nn.extract(params, xt)
    loss, gs, gt, clamps = cluster_loss_from_features(
        params, fs.features, fts.features, table.lookup(labels), scale
    )
    nn.extract_backward(params, fs, gs)
    nn.extract_backward(params, fts, gt)
    return loss, clamps
