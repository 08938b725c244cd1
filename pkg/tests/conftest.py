import numpy as np
import pytest

from weightmom import netcore


def finite_difference_grads(model, x, y, h=1e-5):
    """Central-difference loss gradients for every weight/bias entry.

    Independent of the backprop path: only uses forward + the loss.
    """
    def loss_at():
        logits, _ = model.forward(x)
        loss, _ = netcore.softmax_cross_entropy(logits, y)
        return loss

    grads = {}
    for _, idx, layer in model.prunable():
        pair = []
        for param in (layer.weight, layer.bias):
            flat = param.data.ravel()
            g = np.zeros_like(flat)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = loss_at()
                flat[i] = orig - h
                down = loss_at()
                flat[i] = orig
                g[i] = (up - down) / (2 * h)
            pair.append(g.reshape(param.data.shape))
        grads[idx] = tuple(pair)
    return grads


def max_rel_error(analytic, numeric):
    worst = 0.0
    for idx in analytic:
        for a, n in zip(analytic[idx], numeric[idx]):
            denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-4)
            worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
