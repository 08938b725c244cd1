"""Dense tensor core: layers, backprop, loss, and the Adam/step-decay optimizer.

Everything runs in float64 on a single thread so that repeated runs with the
same seed produce bit-identical trajectories.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    """Raised when a tensor or batch does not match the expected shape."""


class Tensor:
    """A named-free, row-major float64 array. Rejects NaN/Inf at construction."""

    __slots__ = ("data",)

    def __init__(self, data, shape=None):
        arr = np.array(data, dtype=np.float64, order="C")
        if shape is not None:
            if int(np.prod(shape)) != arr.size:
                raise ShapeError(
                    f"cannot view {arr.size} values as shape {tuple(shape)}"
                )
            arr = arr.reshape(shape)
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor contains NaN or Inf")
        self.data = arr

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def copy(self):
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"


def kaiming_uniform(shape, fan_in, rng):
    bound = np.sqrt(6.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape))


class Linear:
    kind = "linear"

    def __init__(self, in_features, out_features, rng=None):
        self.in_features = in_features
        self.out_features = out_features
        if rng is None:
            rng = np.random.default_rng(0)
        self.weight = kaiming_uniform((out_features, in_features), in_features, rng)
        self.bias = Tensor(np.zeros(out_features))

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(
                f"linear layer expects (N, {self.in_features}), got {x.shape}"
            )
        return x @ self.weight.data.T + self.bias.data, x

    def backward(self, grad_out, cache):
        x = cache
        grad_w = grad_out.T @ x
        grad_b = grad_out.sum(axis=0)
        grad_in = grad_out @ self.weight.data
        return grad_in, grad_w, grad_b


class Conv2d:
    kind = "conv2d"

    def __init__(self, in_channels, out_channels, kernel_size, stride=1, padding=1,
                 rng=None):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding
        if rng is None:
            rng = np.random.default_rng(0)
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = kaiming_uniform(
            (out_channels, in_channels, kernel_size, kernel_size), fan_in, rng)
        self.bias = Tensor(np.zeros(out_channels))

    def _check(self, x):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeError(
                f"conv2d layer expects (N, {self.in_channels}, H, W), got {x.shape}"
            )

    def forward(self, x):
        self._check(x)
        k, s, p = self.kernel_size, self.stride, self.padding
        n, c, h, w = x.shape
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        # (N, C, OH, OW, k, k) view over the padded input
        win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        oh, ow = win.shape[2], win.shape[3]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n, oh * ow, c * k * k)
        wf = self.weight.data.reshape(self.out_channels, -1)
        out = cols @ wf.T + self.bias.data
        out = out.transpose(0, 2, 1).reshape(n, self.out_channels, oh, ow)
        return out, (x.shape, cols, (oh, ow))

    def backward(self, grad_out, cache):
        (n, c, h, w), cols, (oh, ow) = cache
        k, s, p = self.kernel_size, self.stride, self.padding
        wf = self.weight.data.reshape(self.out_channels, -1)
        g = grad_out.reshape(n, self.out_channels, oh * ow).transpose(0, 2, 1)
        grad_b = g.sum(axis=(0, 1))
        grad_w = np.einsum("npf,npq->fq", g, cols).reshape(self.weight.shape)
        gcols = (g @ wf).reshape(n, oh, ow, c, k, k)
        # scatter-add columns back onto the padded input grid
        gxp = np.zeros((n, c, h + 2 * p, w + 2 * p))
        for i in range(k):
            for j in range(k):
                gxp[:, :, i:i + oh * s:s, j:j + ow * s:s] += \
                    gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        grad_in = gxp[:, :, p:p + h, p:p + w]
        return grad_in, grad_w, grad_b


class ReLU:
    kind = "relu"
    weight = None
    bias = None

    def forward(self, x):
        return np.maximum(x, 0.0), x

    def backward(self, grad_out, cache):
        return grad_out * (cache > 0.0), None, None


class Flatten:
    kind = "flatten"
    weight = None
    bias = None

    def forward(self, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, grad_out, cache):
        return grad_out.reshape(cache), None, None


class Model:
    """Ordered layer stack. Prunable layers are the weight-bearing ones,
    numbered 1-based in forward order."""

    def __init__(self, layers):
        self.layers = list(layers)

    def prunable(self):
        """[(position, layer_index, layer)] for layers that own a weight tensor."""
        out = []
        pos = 0
        for i, layer in enumerate(self.layers):
            if layer.weight is not None:
                pos += 1
                out.append((pos, i, layer))
        return out

    def layer_sizes(self):
        return [layer.weight.size for _, _, layer in self.prunable()]

    def num_params(self):
        total = 0
        for layer in self.layers:
            if layer.weight is not None:
                total += layer.weight.size + layer.bias.size
        return total

    def forward(self, batch):
        x = np.asarray(batch, dtype=np.float64)
        caches = []
        for i, layer in enumerate(self.layers):
            try:
                x, cache = layer.forward(x)
            except ShapeError as e:
                raise ShapeError(f"layer {i} ({layer.kind}): {e}") from None
            caches.append(cache)
        return x, caches

    def backward(self, grad_logits, caches):
        """Gradients per weight-bearing layer index: {layer_index: (gw, gb)}."""
        if caches is None or len(caches) != len(self.layers):
            raise ValueError("forward cache missing or stale; run forward first")
        grads = {}
        g = grad_logits
        for i in range(len(self.layers) - 1, -1, -1):
            g, gw, gb = self.layers[i].backward(g, caches[i])
            if self.layers[i].weight is not None:
                grads[i] = (gw, gb)
        return grads


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over the batch and its gradient wrt logits.

    Log-sum-exp stabilized; finite for |logits| up to ~1e3 and beyond.
    """
    labels = np.asarray(labels)
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(lse - shifted[np.arange(n), labels]))
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)
    grad = probs
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


class Adam:
    """Adam with step-decay learning rate (base 0.05, halved every 30 epochs)."""

    def __init__(self, model, lr=0.05, decay=0.5, decay_interval=30,
                 beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.model = model
        self.base_lr = lr
        self.decay = decay
        self.decay_interval = decay_interval
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        self.m = {}
        self.v = {}
        for i, layer in enumerate(model.layers):
            if layer.weight is not None:
                self.m[i] = (np.zeros(layer.weight.shape), np.zeros(layer.bias.shape))
                self.v[i] = (np.zeros(layer.weight.shape), np.zeros(layer.bias.shape))

    def lr_at_epoch(self, epoch):
        if epoch < 0:
            raise ValueError("epoch must be >= 0")
        return self.base_lr * self.decay ** (epoch // self.decay_interval)

    def step(self, grads, epoch, masks=None):
        """One Adam update. Masked weight positions stay exactly zero."""
        lr = self.lr_at_epoch(epoch)
        self.step_count += 1
        t = self.step_count
        b1, b2, eps = self.beta1, self.beta2, self.epsilon
        for i, (gw, gb) in grads.items():
            if not (np.all(np.isfinite(gw)) and np.all(np.isfinite(gb))):
                raise FloatingPointError(
                    f"non-finite gradient in layer {i}; aborting run")
            layer = self.model.layers[i]
            mask = None
            if masks is not None and i in masks:
                mask = masks[i].reshape(layer.weight.shape)
                gw = gw * mask
            for (param, grad, slot) in ((layer.weight, gw, 0), (layer.bias, gb, 1)):
                m = self.m[i][slot]
                v = self.v[i][slot]
                m *= b1
                m += (1 - b1) * grad
                v *= b2
                v += (1 - b2) * grad * grad
                mhat = m / (1 - b1 ** t)
                vhat = v / (1 - b2 ** t)
                param.data -= lr * mhat / (np.sqrt(vhat) + eps)
            if mask is not None:
                layer.weight.data *= mask


def build_model(arch, input_shape, num_classes, seed, hidden=(256, 128)):
    """Model factory.

    arch "mlp": flatten -> hidden linear+relu stack -> classes.
    arch "smallconv": two stride-2 convs then two linears (~150k params on
    32x32x3 inputs).
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6d6f6d]))
    if arch == "mlp":
        in_features = int(np.prod(input_shape))
        layers = [Flatten()]
        prev = in_features
        for h in hidden:
            layers.append(Linear(prev, h, rng))
            layers.append(ReLU())
            prev = h
        layers.append(Linear(prev, num_classes, rng))
        return Model(layers)
    if arch == "smallconv":
        if len(input_shape) != 3:
            raise ShapeError(f"smallconv expects (C, H, W) input, got {input_shape}")
        c, h, w = input_shape
        layers = [
            Conv2d(c, 16, 3, stride=2, padding=1, rng=rng),
            ReLU(),
            Conv2d(16, 32, 3, stride=2, padding=1, rng=rng),
            ReLU(),
            Flatten(),
        ]
        fh, fw = (h + 1) // 2, (w + 1) // 2
        fh, fw = (fh + 1) // 2, (fw + 1) // 2
        layers.append(Linear(32 * fh * fw, 64, rng))
        layers.append(ReLU())
        layers.append(Linear(64, num_classes, rng))
        return Model(layers)
    raise ValueError(f"unknown architecture: {arch!r}")
