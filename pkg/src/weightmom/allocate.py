"""Per-layer importance ratios and keep-fraction allocation.

A layer's importance is its parameter count divided by (depth position x
average layer size). A global density target is split into per-layer keep
fractions proportional to importance, clamped to [k_min, 1] and rescaled by
water-filling so the global kept-weight budget is met exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass


class AllocationError(ValueError):
    """Invalid layer configuration or infeasible density budget."""


def w_avg(sizes):
    """Average parameter count over prunable layers."""
    if not sizes:
        raise AllocationError("no prunable layers")
    return sum(sizes) / len(sizes)


def importance(sizes, position, w_avg_mode="mean"):
    """Importance ratio of the layer at 1-based depth `position`.

    w_avg_mode "as_printed" divides by W_l / sum(W) instead of the mean layer
    size; it exists for comparison only and makes importance independent of
    the layer's own size.
    """
    if not 1 <= position <= len(sizes):
        raise AllocationError(f"layer position {position} out of range")
    wl = sizes[position - 1]
    if w_avg_mode == "mean":
        return wl / (position * w_avg(sizes))
    if w_avg_mode == "as_printed":
        return wl / (position * (wl / sum(sizes)))
    raise AllocationError(f"unknown w_avg_mode: {w_avg_mode!r}")


@dataclass
class LayerAllocation:
    position: int          # 1-based depth among prunable layers
    size: int              # weight count W_l
    importance: float
    keep_fraction: float

    @property
    def quota(self):
        """Kept-weight count for this layer."""
        return min(self.size, max(1, round(self.keep_fraction * self.size)))


@dataclass
class ImportanceTable:
    rows: list
    density: float
    avg_layer_size: float

    def keep_fraction(self, position):
        return self.rows[position - 1].keep_fraction

    def quota(self, position):
        return self.rows[position - 1].quota

    def kept_weights(self):
        return sum(r.keep_fraction * r.size for r in self.rows)

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["layer", "l", "W_l", "I_l", "k_l"])
            for r in self.rows:
                writer.writerow([r.position, r.position, r.size,
                                 repr(r.importance), repr(r.keep_fraction)])


def layer_keep_fractions(sizes, density, k_min=0.01, w_avg_mode="mean"):
    """Allocate a global density across layers, proportional to importance.

    Water-filling: layers whose proportional share falls outside [k_min, 1]
    are pinned at the bound and the remaining budget is redistributed over
    the free layers. If the floor alone exceeds the budget, the floor is
    lowered to the uniform density so the budget stays feasible.
    """
    n = len(sizes)
    if n == 0:
        raise AllocationError("no prunable layers")
    if not 0.0 < density <= 1.0:
        raise AllocationError(f"density must be in (0, 1], got {density}")
    total = sum(sizes)
    budget = round(density * total)
    if budget < n:
        raise AllocationError(
            f"density {density} leaves fewer than one weight per layer "
            f"({budget} kept across {n} layers)")
    imps = [importance(sizes, l, w_avg_mode) for l in range(1, n + 1)]

    floor = min(k_min, budget / total)

    def kept_at(alpha):
        return [min(1.0, max(floor, alpha * imps[i])) for i in range(n)]

    def budget_at(alpha):
        return sum(k * w for k, w in zip(kept_at(alpha), sizes))

    # budget_at is continuous and non-decreasing in alpha, with
    # budget_at(0) = floor*total <= budget and budget_at(hi) = total >= budget
    lo, hi = 0.0, max(1.0 / i for i in imps)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if budget_at(mid) < budget:
            lo = mid
        else:
            hi = mid
    keep = kept_at(hi)

    table = ImportanceTable(
        rows=[LayerAllocation(l + 1, sizes[l], imps[l], keep[l]) for l in range(n)],
        density=density,
        avg_layer_size=w_avg(sizes),
    )
    return table
