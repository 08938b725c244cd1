"""Sliding-window tracking of per-weight absolute magnitudes.

One sample per epoch, taken after the last optimizer step of that epoch.
The momentum score of a weight is the mean of its |w| samples over the
window (an exponentially weighted variant is available via mode="ema").
"""

from __future__ import annotations

import numpy as np


class HistoryError(RuntimeError):
    """Structural or usage error against a magnitude history."""


class MagnitudeHistory:
    """Ring buffer of the last `window` epoch-end |w| values per weight.

    Buffers are keyed by model layer index; each holds a (window, layer_size)
    float64 array. Memory is exactly window floats per tracked weight.
    """

    def __init__(self, model, window=15, mode="mean", ema_coeff=0.9):
        if window < 1:
            raise ValueError("window must be a positive integer")
        if mode not in ("mean", "ema"):
            raise ValueError(f"unknown momentum mode: {mode!r}")
        self.window = window
        self.mode = mode
        self.ema_coeff = ema_coeff
        self.epochs_recorded = 0
        self._head = 0
        self._shapes = {}
        self._buffers = {}
        for _, idx, layer in model.prunable():
            self._shapes[idx] = layer.weight.shape
            self._buffers[idx] = np.zeros((window, layer.weight.size))

    def layer_indices(self):
        return sorted(self._buffers)

    def record_epoch(self, model):
        """Append |w| for every tracked weight; evicts the oldest sample."""
        prunable = {idx: layer for _, idx, layer in model.prunable()}
        if set(prunable) != set(self._buffers):
            raise HistoryError("model layer set changed since history creation")
        for idx, layer in prunable.items():
            if layer.weight.shape != self._shapes[idx]:
                raise HistoryError(
                    f"layer {idx} changed shape since history creation")
            self._buffers[idx][self._head] = np.abs(layer.weight.data).ravel()
        self._head = (self._head + 1) % self.window
        self.epochs_recorded += 1

    def is_warm(self):
        return self.epochs_recorded >= self.window

    def _require_warm(self):
        if not self.is_warm():
            raise HistoryError(
                f"history not warm: {self.epochs_recorded} of "
                f"{self.window} epochs recorded")

    def _chronological(self, layer_idx):
        # rows ordered oldest -> newest
        buf = self._buffers[layer_idx]
        return np.roll(buf, -self._head, axis=0)

    def scores(self, layer_idx):
        """Momentum score for every weight in the layer (flat order)."""
        self._require_warm()
        if self.mode == "mean":
            buf = self._buffers[layer_idx]
            mean = buf.mean(axis=0)
            # a constant buffer scores exactly that constant, no rounding
            constant = (buf == buf[0]).all(axis=0)
            return np.where(constant, buf[0], mean)
        buf = self._chronological(layer_idx)
        a = self.ema_coeff
        weights = a ** np.arange(self.window - 1, -1, -1)
        weights /= weights.sum()
        return weights @ buf

    def momentum_score(self, layer_idx, flat_index):
        return float(self.scores(layer_idx)[flat_index])

    def below_counts(self, layer_idx, threshold):
        """Per-weight count of window epochs with |w| strictly below threshold."""
        self._require_warm()
        if threshold < 0:
            raise ValueError("threshold must be non-negative")
        return (self._buffers[layer_idx] < threshold).sum(axis=0)

    def below_count(self, layer_idx, flat_index, threshold):
        return int(self.below_counts(layer_idx, threshold)[flat_index])

    def buffer_nbytes(self):
        return sum(buf.nbytes for buf in self._buffers.values())

    def state(self):
        """Serializable state (used by the checkpoint writer)."""
        return {
            "window": self.window,
            "mode": self.mode,
            "ema_coeff": self.ema_coeff,
            "epochs_recorded": self.epochs_recorded,
            "head": self._head,
            "buffers": dict(self._buffers),
        }

    def load_state(self, state):
        if state["window"] != self.window or set(state["buffers"]) != set(self._buffers):
            raise HistoryError("checkpointed history does not match this model")
        self.mode = state["mode"]
        self.ema_coeff = state["ema_coeff"]
        self.epochs_recorded = state["epochs_recorded"]
        self._head = state["head"]
        for idx, buf in state["buffers"].items():
            if buf.shape != self._buffers[idx].shape:
                raise HistoryError(f"history buffer {idx} shape mismatch")
            self._buffers[idx] = buf
