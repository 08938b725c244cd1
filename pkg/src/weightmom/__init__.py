"""WeightMom: iterative pruning by windowed weight-magnitude momentum."""

from .allocate import ImportanceTable, importance, layer_keep_fractions, w_avg
from .magtrack import MagnitudeHistory
from .netcore import Adam, Model, Tensor, build_model, softmax_cross_entropy
from .pruner import (Masks, PruneSchedule, apply_masks, baseline_prune,
                     prune_step, prune_train_loop)

__version__ = "0.1.0"

__all__ = [
    "Adam", "ImportanceTable", "MagnitudeHistory", "Masks", "Model",
    "PruneSchedule", "Tensor", "apply_masks", "baseline_prune", "build_model",
    "importance", "layer_keep_fractions", "prune_step", "prune_train_loop",
    "softmax_cross_entropy", "w_avg",
]
