"""Seeded Gaussian-blob benchmarks for partial domain adaptation.

Source classes sit evenly on a circle of radius ``radius`` in the first two input
coordinates. The target domain holds only the first ``target_classes`` of them,
with each center moved by ``x -> scale * Rot(theta) x + translation``.

Randomness comes from numpy's Philox-4x64 counter-based generator keyed by
``(seed, stream)``, so a seed means the same bits on every platform.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

STREAM_DATA = 0
STREAM_INIT = 1
STREAM_BATCH = 2


def philox(seed, stream=0):
    return np.random.Generator(np.random.Philox(key=[int(seed), int(stream)]))


@dataclass(frozen=True)
class PdaTaskSpec:
    source_classes: int = 8
    target_classes: int = 4
    samples_per_class: int = 200
    input_dim: int = 2
    radius: float = 4.0
    noise: float = 0.45
    rotation_deg: float = 30.0
    scale: float = 1.1
    translation: tuple = ()
    seed: int = 0

    def validate(self):
        if self.source_classes < 1 or self.target_classes < 1:
            raise ValueError("class counts must be positive")
        if self.target_classes > self.source_classes:
            raise ValueError("target_classes must not exceed source_classes")
        if self.samples_per_class < 2:
            raise ValueError("samples_per_class must be at least 2 (target is split in half)")
        if self.input_dim < 2:
            raise ValueError("input_dim must be at least 2")
        if not self.noise > 0:
            raise ValueError("noise must be positive")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if self.translation and len(self.translation) != self.input_dim:
            raise ValueError("translation length must equal input_dim")

    def shift_vector(self):
        t = np.zeros(self.input_dim)
        if self.translation:
            t[:] = self.translation
        return t


BLOBS8TO4 = PdaTaskSpec()


@dataclass
class DomainSet:
    inputs: np.ndarray
    labels: np.ndarray | None
    domain: str

    def __len__(self):
        return len(self.inputs)


@dataclass
class DomainBatch:
    inputs: np.ndarray
    labels: np.ndarray | None
    domain: str


@dataclass
class PdaTask:
    spec: PdaTaskSpec
    source: DomainSet
    target_train: DomainSet
    target_test: DomainSet
    shared_classes: tuple = field(default=())


def source_centers(spec):
    c = np.zeros((spec.source_classes, spec.input_dim))
    ang = 2.0 * math.pi * np.arange(spec.source_classes) / spec.source_classes
    c[:, 0] = spec.radius * np.cos(ang)
    c[:, 1] = spec.radius * np.sin(ang)
    return c


def rotation(spec):
    r = np.eye(spec.input_dim)
    th = math.radians(spec.rotation_deg)
    r[0, 0], r[0, 1] = math.cos(th), -math.sin(th)
    r[1, 0], r[1, 1] = math.sin(th), math.cos(th)
    return r


def target_centers(spec):
    src = source_centers(spec)[: spec.target_classes]
    return spec.scale * src @ rotation(spec).T + spec.shift_vector()


def generate_task(spec):
    """Build ``(source, target_train, target_test)`` wrapped in a :class:`PdaTask`.

    Each target class is split in half: the first half is unlabeled training
    data, the second half the labeled test set.
    """
    spec.validate()
    rng = philox(spec.seed, STREAM_DATA)
    n, d = spec.samples_per_class, spec.input_dim
    src_c = source_centers(spec)
    tgt_c = target_centers(spec)
    xs = np.vstack([c + spec.noise * rng.standard_normal((n, d)) for c in src_c])
    ys = np.repeat(np.arange(spec.source_classes), n)
    half = n // 2
    tr_x, te_x, te_y = [], [], []
    for cls, c in enumerate(tgt_c):
        pts = c + spec.noise * rng.standard_normal((n, d))
        tr_x.append(pts[:half])
        te_x.append(pts[half:])
        te_y.append(np.full(n - half, cls))
    return PdaTask(
        spec,
        DomainSet(xs, ys, "source"),
        DomainSet(np.vstack(tr_x), None, "target"),
        DomainSet(np.vstack(te_x), np.concatenate(te_y), "target"),
        tuple(range(spec.target_classes)),
    )


def minibatch(dataset, batch_size, rng, balanced=False):
    """Sample ``batch_size`` rows with replacement.

    ``balanced`` draws an equal share from every class (the remainder goes to a
    random subset of classes); it needs labels.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    if len(dataset) == 0:
        raise ValueError("cannot sample from an empty set")
    if balanced:
        if dataset.labels is None:
            raise ValueError("balanced sampling needs labels")
        classes = np.unique(dataset.labels)
        per, extra = divmod(batch_size, len(classes))
        counts = np.full(len(classes), per)
        counts[rng.permutation(len(classes))[:extra]] += 1
        idx = np.concatenate(
            [
                rng.choice(np.flatnonzero(dataset.labels == c), size=k, replace=True)
                for c, k in zip(classes, counts)
            ]
        )
    else:
        idx = rng.integers(0, len(dataset), size=batch_size)
    labels = None if dataset.labels is None else dataset.labels[idx]
    return DomainBatch(dataset.inputs[idx], labels, dataset.domain)


def dump_csv(task, path):
    """Write all three splits as ``domain,class,x0..x(d-1)`` rows."""
    d = task.spec.input_dim
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["domain", "class"] + [f"x{i}" for i in range(d)])
        parts = [
            ("source", task.source.inputs, task.source.labels),
            ("target_train", task.target_train.inputs, None),
            ("target_test", task.target_test.inputs, task.target_test.labels),
        ]
        for name, xs, ys in parts:
            for i, row in enumerate(xs):
                cls = "" if ys is None else int(ys[i])
                wr.writerow([name, cls] + [repr(float(v)) for v in row])


def load_csv(path, spec):
    rows = {"source": ([], []), "target_train": ([], []), "target_test": ([], [])}
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            xs, ys = rows[rec["domain"]]
            xs.append([float(rec[f"x{i}"]) for i in range(spec.input_dim)])
            ys.append(int(rec["class"]) if rec["class"] != "" else -1)
    src_x, src_y = rows["source"]
    tr_x, _ = rows["target_train"]
    te_x, te_y = rows["target_test"]
    return PdaTask(
        spec,
        DomainSet(np.array(src_x), np.array(src_y), "source"),
        DomainSet(np.array(tr_x), None, "target"),
        DomainSet(np.array(te_x), np.array(te_y), "target"),
        tuple(range(spec.target_classes)),
    )
