"""Self-adaptive partial domain adaptation on a small numpy network."""

from .data import BLOBS8TO4, PdaTaskSpec, generate_task
from .trainer import MODES, TrainConfig, evaluate, run_ablations, train
from .weights import (
    WeightTable,
    assign_weights,
    ch_index,
    compute_class_weights,
    evaluate_weights,
    optimal_partition,
    select_k,
)

__all__ = [
    "BLOBS8TO4",
    "MODES",
    "PdaTaskSpec",
    "TrainConfig",
    "WeightTable",
    "assign_weights",
    "ch_index",
    "compute_class_weights",
    "evaluate",
    "evaluate_weights",
    "generate_task",
    "optimal_partition",
    "run_ablations",
    "select_k",
    "train",
]
