"""Experiment orchestration and artifact files.

Layout of one experiment directory::

    <out>/<kind>-<timestamp>-<digest>/
        manifest.cfg            resolved manifest
        summary.json            mean/std final target accuracy per condition
        summary.csv             same numbers, one row per condition
        figures/summary.png
        <condition>/
            weights_final.json  final class scores, weights and k* per seed
            seed_<s>/history.csv
            seed_<s>/history.json
            figures/...

Floats are written with 9 significant digits; every file is written to a
temporary name and renamed into place.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from datetime import datetime
from pathlib import Path

import numpy as np

from .data import generate_task
from .trainer import train

log = logging.getLogger(__name__)


def fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.9g}"


def rounded(v):
    """The float a reader recovers from the written text."""
    return float(fmt(v))


def write_atomic(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_value(v):
    if isinstance(v, dict):
        return {k: _json_value(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_json_value(x) for x in v]
    if isinstance(v, (bool, str)) or v is None:
        return v
    if isinstance(v, (int, np.integer)):
        return int(v)
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return rounded(v)


def dump_json(obj):
    return json.dumps(_json_value(obj), indent=2) + "\n"


def history_columns(num_classes):
    base = [
        "iteration",
        "L_c",
        "L_d",
        "L_cl",
        "total",
        "target_acc",
        "k_star",
        "ch2",
        "ch3",
        "clamp_count",
    ]
    return base + [f"wc_{j}" for j in range(num_classes)] + [f"w_{j}" for j in range(num_classes)]


def history_csv(rows, num_classes):
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(history_columns(num_classes))
    for r in rows:
        wr.writerow(
            [
                fmt(r.iteration),
                fmt(r.loss_c),
                fmt(r.loss_d),
                fmt(r.loss_cl),
                fmt(r.total),
                fmt(r.accuracy),
                fmt(r.k_star),
                fmt(r.ch2),
                fmt(r.ch3),
                fmt(r.clamp_count),
            ]
            + [fmt(v) for v in r.class_scores]
            + [fmt(v) for v in r.weights]
        )
    return buf.getvalue()


def history_records(rows):
    return [
        {
            "iteration": r.iteration,
            "kStar": r.k_star,
            "ch2": r.ch2,
            "ch3": r.ch3,
            "wc": list(r.class_scores),
            "weights": list(r.weights),
        }
        for r in rows
    ]


def read_history(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@dataclass(frozen=True)
class Condition:
    name: str
    task: object
    train: object


def conditions(manifest):
    """Expand a manifest into named (task, train config) conditions."""
    m = manifest
    if m.kind == "single":
        return [Condition(m.train.mode, m.task, m.train)]
    if m.kind == "ablation":
        return [Condition(mode, m.task, replace(m.train, mode=mode)) for mode in m.modes]
    if m.kind == "beta-sweep":
        return [Condition(f"beta_{fmt(b)}", m.task, replace(m.train, beta=b)) for b in m.betas]
    if m.kind == "class-sweep":
        return [
            Condition(f"target_classes_{c}", replace(m.task, target_classes=c), m.train)
            for c in m.target_class_list
        ]
    raise ValueError(f"unknown experiment kind {m.kind!r}")


def _run_one(cond, seed):
    task = generate_task(replace(cond.task, seed=seed))
    result = train(task, replace(cond.train, seed=seed))
    return cond.name, seed, result.history, task.shared_classes


def run_dir_for(manifest, now=None):
    now = now or datetime.now()
    stamp = now.strftime("%Y%m%d-%H%M%S")
    return Path(manifest.out) / f"{manifest.kind}-{stamp}-{manifest.digest()}"


def _ensure_writable(path):
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise PermissionError(f"output directory {path} is not writable: {exc}") from exc


def run_experiment(manifest, run_dir=None):
    """Run every (condition, seed) of ``manifest`` and write the artifact files.

    Returns the experiment directory.
    """
    manifest.validate()
    out = Path(run_dir) if run_dir is not None else run_dir_for(manifest)
    if run_dir is None and out.exists():
        out = out.with_name(out.name + f"-{os.getpid()}")
    _ensure_writable(out)
    write_atomic(out / "manifest.cfg", manifest.dumps())

    conds = conditions(manifest)
    jobs = [(c, s) for c in conds for s in manifest.seeds]
    results = {}
    if manifest.jobs > 1:
        with ProcessPoolExecutor(max_workers=manifest.jobs) as pool:
            for name, seed, hist, shared in pool.map(_run_one, *zip(*jobs)):
                results[(name, seed)] = (hist, shared)
    else:
        for c, s in jobs:
            log.info("running %s seed=%d", c.name, s)
            name, seed, hist, shared = _run_one(c, s)
            results[(name, seed)] = (hist, shared)

    summary = []
    for c in conds:
        ncls = c.task.source_classes
        finals = {}
        for s in manifest.seeds:
            hist, shared = results[(c.name, s)]
            sd = out / c.name / f"seed_{s}"
            write_atomic(sd / "history.csv", history_csv(hist, ncls))
            write_atomic(sd / "history.json", dump_json(history_records(hist)))
            last = hist[-1]
            finals[s] = {
                "seed": s,
                "kStar": last.k_star,
                "wc": list(last.class_scores),
                "weights": list(last.weights),
                "target_acc": last.accuracy,
                "shared_classes": list(shared),
            }
        write_atomic(
            out / c.name / "weights_final.json",
            dump_json({"condition": c.name, "runs": [finals[s] for s in manifest.seeds]}),
        )
        accs = [rounded(finals[s]["target_acc"]) for s in manifest.seeds]
        summary.append(
            {
                "condition": c.name,
                "seeds": list(manifest.seeds),
                "final_accuracy": accs,
                "mean_accuracy": float(np.mean(accs)),
                "std_accuracy": float(np.std(accs)),
                "final_k_star": [finals[s]["kStar"] for s in manifest.seeds],
            }
        )
    write_atomic(out / "summary.json", dump_json({"kind": manifest.kind, "conditions": summary}))
    write_atomic(out / "summary.csv", summary_csv(summary, manifest.seeds))

    if manifest.figures:
        from . import plots

        plots.render_experiment(out, manifest, [c.name for c in conds])
    return out


def summary_csv(summary, seeds):
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["condition", "mean_accuracy", "std_accuracy"] + [f"acc_seed_{s}" for s in seeds])
    for row in summary:
        wr.writerow(
            [row["condition"], fmt(row["mean_accuracy"]), fmt(row["std_accuracy"])]
            + [fmt(a) for a in row["final_accuracy"]]
        )
    return buf.getvalue()
