"""Sparsity masks and the iterative prune-train-prune loop.

Masks are monotone (bits only flip 1 -> 0, no regrowth). Pruning is gated
twice: a weight must fall below the layer's score quantile AND have spent at
least K of the last T epochs below that threshold. Weights blocked by the
persistence gate are carried as a shortfall to the next prune event.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import netcore
from .allocate import layer_keep_fractions
from .magtrack import MagnitudeHistory


class MaskError(ValueError):
    pass


class Masks:
    """Per-layer flat keep/prune bit arrays, keyed by model layer index."""

    def __init__(self, bits):
        self.bits = dict(bits)

    @classmethod
    def ones_like(cls, model):
        return cls({idx: np.ones(layer.weight.size, dtype=np.uint8)
                    for _, idx, layer in model.prunable()})

    def __getitem__(self, idx):
        return self.bits[idx]

    def __contains__(self, idx):
        return idx in self.bits

    def __iter__(self):
        return iter(sorted(self.bits))

    def copy(self):
        return Masks({i: b.copy() for i, b in self.bits.items()})

    def density(self):
        kept = sum(int(b.sum()) for b in self.bits.values())
        total = sum(b.size for b in self.bits.values())
        return kept / total

    def layer_density(self, idx):
        b = self.bits[idx]
        return int(b.sum()) / b.size


def apply_masks(model, masks):
    """Zero every masked-out weight in place; kept weights are untouched."""
    for _, idx, layer in model.prunable():
        mask = masks[idx]
        if mask.size != layer.weight.size:
            raise MaskError(
                f"mask for layer {idx} has {mask.size} bits, "
                f"weight has {layer.weight.size}")
        layer.weight.data.ravel()[mask == 0] = 0.0
    return model


@dataclass
class PruneSchedule:
    """Epoch-indexed plan from full density down to the target."""

    target_density: float
    warmup_epochs: int = 15
    interval: int = 5
    final_prune_epoch: int = 35
    power: int = 3

    def __post_init__(self):
        if not 0.0 < self.target_density <= 1.0:
            raise ValueError(f"target density {self.target_density} not in (0, 1]")
        if self.interval < 1:
            raise ValueError("prune interval must be >= 1")
        if self.final_prune_epoch <= self.warmup_epochs:
            raise ValueError("final prune epoch must come after warmup")

    def density_at(self, epoch):
        if epoch < self.warmup_epochs:
            return 1.0
        if epoch >= self.final_prune_epoch:
            return self.target_density
        frac = (epoch - self.warmup_epochs) / (
            self.final_prune_epoch - self.warmup_epochs)
        d = self.target_density
        return d + (1.0 - d) * (1.0 - frac) ** self.power

    def prune_epochs(self):
        return [e for e in range(self.warmup_epochs, self.final_prune_epoch + 1)
                if (e - self.warmup_epochs) % self.interval == 0]


@dataclass
class LayerPrune:
    position: int
    tau: float
    pruned: int
    shortfall: int


@dataclass
class PruneEvent:
    epoch: int
    density_before: float
    density_after: float
    layers: list = field(default_factory=list)


def prune_step(model, masks, history, table, persistence_k, epoch=-1):
    """Prune each layer down toward its quota from the importance table.

    Candidates are the lowest-score kept weights beyond the quota (ties broken
    by flat index ascending, lower index pruned first). A candidate is pruned
    only if its magnitude sat below the layer threshold for at least
    `persistence_k` of the window epochs; blocked candidates are recorded as
    shortfall and never substituted for.
    """
    event = PruneEvent(epoch, masks.density(), masks.density())
    for pos, idx, layer in model.prunable():
        quota = table.quota(pos)
        mask = masks[idx]
        kept = np.flatnonzero(mask)
        n_prune = kept.size - quota
        if n_prune <= 0:
            continue
        scores = history.scores(idx)[kept]
        order = np.lexsort((kept, scores))
        tau = float(scores[order[n_prune]])
        candidates = kept[order[:n_prune]]
        below = history.below_counts(idx, tau)
        pruned = candidates[below[candidates] >= persistence_k]
        mask[pruned] = 0
        layer.weight.data.ravel()[pruned] = 0.0
        event.layers.append(
            LayerPrune(pos, tau, int(pruned.size), int(n_prune - pruned.size)))
    event.density_after = masks.density()
    return event


def baseline_prune(model, strategy, density, seed, k_min=0.01, w_avg_mode="mean"):
    """One-shot baseline masks at the same per-layer quotas as the main method.

    "random" keeps a uniform random subset of each layer; "oneshot_magnitude"
    keeps the top-|w| weights per layer.
    """
    masks = Masks.ones_like(model)
    if density >= 1.0:
        return masks
    sizes = model.layer_sizes()
    table = layer_keep_fractions(sizes, density, k_min, w_avg_mode)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x626173]))
    for pos, idx, layer in model.prunable():
        n = layer.weight.size
        quota = table.quota(pos)
        if strategy == "random":
            keep = rng.choice(n, size=quota, replace=False)
        elif strategy == "oneshot_magnitude":
            mags = np.abs(layer.weight.data.ravel())
            order = np.lexsort((np.arange(n), mags))
            keep = order[n - quota:]
        else:
            raise ValueError(f"unknown baseline strategy: {strategy!r}")
        mask = np.zeros(n, dtype=np.uint8)
        mask[keep] = 1
        masks.bits[idx] = mask
    return masks


@dataclass
class RunResult:
    metrics: list            # one dict per epoch
    events: list             # PruneEvent per schedule firing
    model: object
    masks: object
    final_density: float


def _evaluate(model, x, y, batch_size=512):
    correct = 0
    for start in range(0, len(x), batch_size):
        logits, _ = model.forward(x[start:start + batch_size])
        correct += int((logits.argmax(axis=1) == y[start:start + batch_size]).sum())
    return correct / len(x)


def prune_train_loop(model, data, cfg, method="weightmom", run_id="run",
                     checkpoint_path=None, checkpoint_every=0, resume_from=None,
                     importance_dir=None, epoch_callback=None):
    """Train `model` on `data`, pruning per `cfg.schedule` and `method`.

    data is (x_train, y_train, x_test, y_test). Methods: "dense" never prunes;
    "weightmom" runs the iterative momentum-gated schedule; "random" prunes at
    initialization; "oneshot" trains dense, prunes once by magnitude at the
    schedule's final epoch, then fine-tunes. Returns per-epoch metrics and the
    prune events. Resuming from a checkpoint reproduces the uninterrupted run
    bit-exactly from the checkpoint epoch onward.
    """
    from . import checkpoint as ckpt

    x_train, y_train, x_test, y_test = data
    schedule = cfg.schedule
    optimizer = netcore.Adam(
        model, lr=cfg.lr, decay=cfg.lr_decay, decay_interval=cfg.lr_decay_interval,
        beta1=cfg.beta1, beta2=cfg.beta2, epsilon=cfg.epsilon)
    history = MagnitudeHistory(model, window=cfg.window, mode=cfg.momentum_mode,
                               ema_coeff=cfg.ema_coeff)
    masks = Masks.ones_like(model)
    start_epoch = 0

    if method == "random":
        masks = baseline_prune(model, "random", schedule.target_density, cfg.seed,
                               cfg.k_min, cfg.w_avg_mode)
        apply_masks(model, masks)

    if resume_from is not None:
        state = ckpt.read_checkpoint(resume_from)
        ckpt.restore_training_state(state, model, masks, history, optimizer)
        start_epoch = state.epoch + 1

    prune_epochs = set(schedule.prune_epochs()) if method in ("weightmom", "oneshot") \
        else set()
    metrics = []
    events = []
    sizes = model.layer_sizes()

    for epoch in range(start_epoch, cfg.total_epochs):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, epoch, 0x7472]))
        perm = rng.permutation(len(x_train))
        loss_sum = 0.0
        for start in range(0, len(perm), cfg.batch_size):
            sel = perm[start:start + cfg.batch_size]
            logits, caches = model.forward(x_train[sel])
            loss, dlogits = netcore.softmax_cross_entropy(logits, y_train[sel])
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite loss at epoch {epoch}; last checkpoint retained")
            grads = model.backward(dlogits, caches)
            optimizer.step(grads, epoch, masks=masks.bits)
            loss_sum += loss * len(sel)
        train_loss = loss_sum / len(perm)

        history.record_epoch(model)

        if epoch in prune_epochs:
            target = schedule.density_at(epoch)
            if method == "weightmom" and history.is_warm():
                table = layer_keep_fractions(sizes, target, cfg.k_min, cfg.w_avg_mode)
                event = prune_step(model, masks, history, table,
                                   cfg.persistence_k, epoch)
                events.append(event)
                if importance_dir is not None:
                    table.write_csv(
                        f"{importance_dir}/importance_{run_id}_epoch{epoch:03d}.csv")
            elif method == "oneshot" and epoch == schedule.final_prune_epoch:
                masks = baseline_prune(model, "oneshot_magnitude", target, cfg.seed,
                                       cfg.k_min, cfg.w_avg_mode)
                apply_masks(model, masks)

        test_acc = _evaluate(model, x_test, y_test)
        metrics.append({
            "run_id": run_id,
            "seed": cfg.seed,
            "method": method,
            "epoch": epoch,
            "lr": optimizer.lr_at_epoch(epoch),
            "train_loss": train_loss,
            "test_acc": test_acc,
            "global_density": masks.density(),
        })
        if epoch_callback is not None:
            epoch_callback(epoch, model, masks)
        if checkpoint_path and checkpoint_every and (epoch + 1) % checkpoint_every == 0:
            ckpt.write_checkpoint(checkpoint_path, model, masks, history, optimizer,
                                  epoch=epoch, meta={"run_id": run_id,
                                                     "method": method,
                                                     "seed": cfg.seed})

    return RunResult(metrics, events, model, masks, masks.density())
