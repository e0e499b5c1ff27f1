"""Experiment manifests: flat ``key = value`` files, env overrides and CLI flags.

Resolution order, later wins: built-in defaults, config file, ``SAPDA_<KEY>``
environment variables, command-line flags. The resolved manifest is written back
in the same format and parses to an identical manifest.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from .data import PdaTaskSpec
from .trainer import BETA_SWEEP, MODES, TrainConfig

ENV_PREFIX = "SAPDA_"
KINDS = ("single", "ablation", "beta-sweep", "class-sweep")


class ConfigError(ValueError):
    pass


def _bool(s):
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _list(conv):
    def parse(s):
        s = str(s).strip()
        if not s:
            return ()
        return tuple(conv(p.strip()) for p in s.split(","))

    return parse


# key -> parser, one table per manifest section
_TASK_KEYS = {
    "source_classes": int,
    "target_classes": int,
    "samples_per_class": int,
    "input_dim": int,
    "radius": float,
    "noise": float,
    "rotation_deg": float,
    "scale": float,
    "translation": _list(float),
}
_TRAIN_KEYS = {
    "iterations": int,
    "interval": int,
    "batch_size": int,
    "beta": float,
    "gamma0": float,
    "eta": float,
    "alpha": float,
    "lambda_ramp": _bool,
    "tau_uniform": float,
    "mode": str,
    "balanced_source": _bool,
    "target_entropy_min": _bool,
    "entropy_lambda": float,
    "hidden": int,
    "feature_dim": int,
}
_EXPERIMENT_KEYS = {
    "kind": str,
    "seeds": _list(int),
    "out": str,
    "modes": _list(str),
    "betas": _list(float),
    "target_class_list": _list(int),
    "figures": _bool,
    "jobs": int,
}
VALID_KEYS = tuple(_TASK_KEYS) + tuple(_TRAIN_KEYS) + tuple(_EXPERIMENT_KEYS)


@dataclass(frozen=True)
class ExperimentManifest:
    task: PdaTaskSpec = field(default_factory=PdaTaskSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    kind: str = "single"
    seeds: tuple = (0, 1, 2, 3, 4)
    out: str = "runs"
    modes: tuple = MODES
    betas: tuple = BETA_SWEEP
    target_class_list: tuple = (2, 4, 6, 8)
    figures: bool = True
    jobs: int = 1

    def validate(self):
        try:
            replace(self.task, seed=0).validate()
            self.train.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {', '.join(KINDS)}, got {self.kind!r}")
        if not self.seeds:
            raise ConfigError("seeds must list at least one seed")
        if any(s < 0 for s in self.seeds):
            raise ConfigError("seeds must be non-negative")
        if not self.modes:
            raise ConfigError("modes must list at least one mode")
        bad = [m for m in self.modes if m not in MODES]
        if bad:
            raise ConfigError(f"unknown modes {bad}; valid modes: {', '.join(MODES)}")
        if not self.betas or any(b < 0 for b in self.betas):
            raise ConfigError("betas must be a non-empty list of non-negative values")
        if not self.target_class_list or any(
            not 1 <= c <= self.task.source_classes for c in self.target_class_list
        ):
            raise ConfigError("target_class_list entries must lie in [1, source_classes]")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        return self

    def flat(self):
        out = {}
        for k in _TASK_KEYS:
            out[k] = getattr(self.task, k)
        for k in _TRAIN_KEYS:
            out[k] = getattr(self.train, k)
        for k in _EXPERIMENT_KEYS:
            out[k] = getattr(self, k)
        return out

    def dumps(self):
        lines = []
        for k, v in self.flat().items():
            lines.append(f"{k} = {_format(v)}")
        return "\n".join(lines) + "\n"

    def digest(self):
        return hashlib.sha256(self.dumps().encode()).hexdigest()[:8]


def _format(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(_format(x) for x in v)
    return str(v)


def parse_text(text, source="<text>"):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        values[key] = val
    return values


def apply(manifest, values, source="config"):
    """Return a new manifest with string ``values`` applied."""
    task, train, exp = {}, {}, {}
    for key, raw in values.items():
        if key not in VALID_KEYS:
            raise ConfigError(
                f"{source}: unknown key {key!r}; valid keys: {', '.join(VALID_KEYS)}"
            )
        for table, bucket in ((_TASK_KEYS, task), (_TRAIN_KEYS, train), (_EXPERIMENT_KEYS, exp)):
            if key in table:
                try:
                    bucket[key] = table[key](raw)
                except ValueError as exc:
                    raise ConfigError(f"{source}: bad value for {key}: {exc}") from exc
    return replace(
        manifest,
        task=replace(manifest.task, **task),
        train=replace(manifest.train, **train),
        **exp,
    )


def env_values(environ=None):
    environ = os.environ if environ is None else environ
    out = {}
    for k, v in environ.items():
        if k.startswith(ENV_PREFIX):
            key = k[len(ENV_PREFIX) :].lower()
            if key in VALID_KEYS:
                out[key] = v
    return out


def load(path=None, overrides=None, environ=None):
    """Resolve a manifest from defaults, an optional file, env and overrides."""
    m = ExperimentManifest()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        m = apply(m, parse_text(p.read_text(), str(p)), str(p))
    m = apply(m, env_values(environ), "environment")
    if overrides:
        m = apply(m, {k: str(v) for k, v in overrides.items()}, "flags")
    return m.validate()


def loads(text):
    return apply(ExperimentManifest(), parse_text(text)).validate()
