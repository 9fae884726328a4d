"""Minimal deterministic feed-forward engine with exact backprop.

Layers: dense, conv2d (stride 1, zero padding preserving spatial size),
relu, tanh, maxpool2 (2x2, stride 2), flatten. Image tensors are NHWC;
dense weights are (n_in, n_out) with one column per neuron; conv filters
are (f, f, c_in, c_out). Just enough to train desk-scale networks.
"""

from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    """Layer shapes do not compose, or a batch does not fit the network."""


@dataclass(frozen=True)
class LayerSpec:
    kind: str                      # dense | conv2d | relu | tanh | maxpool2 | flatten
    n_in: int = 0                  # dense
    n_out: int = 0                 # dense
    kernel: int = 0                # conv2d
    c_in: int = 0                  # conv2d
    c_out: int = 0                 # conv2d

    KINDS = ("dense", "conv2d", "relu", "tanh", "maxpool2", "flatten")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind == "conv2d" and self.kernel % 2 == 0:
            raise ValueError("conv2d kernel must be odd (same-size zero padding)")

    @property
    def trainable(self):
        return self.kind in ("dense", "conv2d")

    def to_dict(self):
        d = {"kind": self.kind}
        if self.kind == "dense":
            d.update(n_in=self.n_in, n_out=self.n_out)
        elif self.kind == "conv2d":
            d.update(kernel=self.kernel, c_in=self.c_in, c_out=self.c_out)
        return d

    @staticmethod
    def from_dict(d):
        return LayerSpec(**d)


def dense(n_in, n_out):
    return LayerSpec("dense", n_in=n_in, n_out=n_out)


def conv2d(kernel, c_in, c_out):
    return LayerSpec("conv2d", kernel=kernel, c_in=c_in, c_out=c_out)


def relu():
    return LayerSpec("relu")


def tanh():
    return LayerSpec("tanh")


def maxpool2():
    return LayerSpec("maxpool2")


def flatten():
    return LayerSpec("flatten")


def output_shape(spec, in_shape):
    """Shape (without batch axis) after one layer; raises ShapeError."""
    if spec.kind == "dense":
        if in_shape != (spec.n_in,):
            raise ShapeError(f"dense expects ({spec.n_in},), got {in_shape}")
        return (spec.n_out,)
    if spec.kind == "conv2d":
        if len(in_shape) != 3 or in_shape[2] != spec.c_in:
            raise ShapeError(f"conv2d expects (H, W, {spec.c_in}), got {in_shape}")
        return (in_shape[0], in_shape[1], spec.c_out)
    if spec.kind == "maxpool2":
        if len(in_shape) != 3 or in_shape[0] % 2 or in_shape[1] % 2:
            raise ShapeError(f"maxpool2 expects even (H, W, C), got {in_shape}")
        return (in_shape[0] // 2, in_shape[1] // 2, in_shape[2])
    if spec.kind == "flatten":
        return (int(np.prod(in_shape)),)
    return in_shape                # relu / tanh


@dataclass
class NetworkParams:
    specs: list
    input_shape: tuple
    weights: list                  # per layer; None for non-trainable
    biases: list
    theta0_weights: list = field(default_factory=list)
    theta0_biases: list = field(default_factory=list)

    def snapshot_theta0(self):
        self.theta0_weights = [None if w is None else w.copy() for w in self.weights]
        self.theta0_biases = [None if b is None else b.copy() for b in self.biases]
        for a in self.theta0_weights + self.theta0_biases:
            if a is not None:
                a.flags.writeable = False

    def trainable_indices(self):
        return [i for i, s in enumerate(self.specs) if s.trainable]


def check_composition(specs, input_shape):
    shape = tuple(input_shape)
    for i, spec in enumerate(specs):
        try:
            shape = output_shape(spec, shape)
        except ShapeError as exc:
            raise ShapeError(f"layer {i} ({spec.kind}): {exc}") from exc
    return shape


def init_network(specs, input_shape, seed, sigma_init=0.1):
    """Gaussian-initialised parameters with a frozen theta0 snapshot."""
    if sigma_init < 0:
        raise ValueError("sigma_init must be >= 0")
    check_composition(specs, input_shape)
    rng = np.random.default_rng(np.random.SeedSequence([0x171717, int(seed)]))
    weights, biases = [], []
    for spec in specs:
        if spec.kind == "dense":
            weights.append(sigma_init * rng.standard_normal((spec.n_in, spec.n_out)))
            biases.append(np.zeros(spec.n_out))
        elif spec.kind == "conv2d":
            shape = (spec.kernel, spec.kernel, spec.c_in, spec.c_out)
            weights.append(sigma_init * rng.standard_normal(shape))
            biases.append(np.zeros(spec.c_out))
        else:
            weights.append(None)
            biases.append(None)
    params = NetworkParams(list(specs), tuple(input_shape), weights, biases)
    params.snapshot_theta0()
    return params


def _conv_forward(x, w, b):
    f = w.shape[0]
    pad = f // 2
    n, h, wd, _ = x.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    y = np.broadcast_to(b, (n, h, wd, w.shape[3])).copy()
    for di in range(f):
        for dj in range(f):
            y += xp[:, di:di + h, dj:dj + wd, :] @ w[di, dj]
    return y, xp


def _conv_backward(dy, xp, w):
    f = w.shape[0]
    pad = f // 2
    n, h, wd, _ = dy.shape
    dw = np.empty_like(w)
    dxp = np.zeros_like(xp)
    for di in range(f):
        for dj in range(f):
            patch = xp[:, di:di + h, dj:dj + wd, :]
            dw[di, dj] = np.tensordot(patch, dy, axes=([0, 1, 2], [0, 1, 2]))
            dxp[:, di:di + h, dj:dj + wd, :] += dy @ w[di, dj].T
    db = dy.sum(axis=(0, 1, 2))
    dx = dxp[:, pad:h + pad, pad:wd + pad, :] if pad else dxp
    return dx, dw, db


def _pool_forward(x):
    n, h, w, c = x.shape
    win = x.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4)
    win = win.reshape(n, h // 2, w // 2, c, 4)
    idx = win.argmax(axis=-1)      # first (row-major) max wins ties
    y = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return y, idx


def _pool_backward(dy, idx, in_shape):
    n, h, w, c = in_shape
    dwin = np.zeros((n, h // 2, w // 2, c, 4))
    np.put_along_axis(dwin, idx[..., None], dy[..., None], axis=-1)
    dwin = dwin.reshape(n, h // 2, w // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
    return dwin.reshape(n, h, w, c)


def forward(params, x):
    """Run the network; returns (per-layer cache list, logits)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1:] != params.input_shape:
        raise ShapeError(
            f"batch shape {x.shape[1:]} does not match input {params.input_shape}"
        )
    cache = []
    for i, spec in enumerate(params.specs):
        if spec.kind == "dense":
            cache.append(("dense", x))
            x = x @ params.weights[i] + params.biases[i]
        elif spec.kind == "conv2d":
            y, xp = _conv_forward(x, params.weights[i], params.biases[i])
            cache.append(("conv2d", xp, x.shape))
            x = y
        elif spec.kind == "relu":
            cache.append(("relu", x > 0))
            x = np.maximum(x, 0.0)
        elif spec.kind == "tanh":
            x = np.tanh(x)
            cache.append(("tanh", x))
        elif spec.kind == "maxpool2":
            y, idx = _pool_forward(x)
            cache.append(("maxpool2", idx, x.shape))
            x = y
        else:                      # flatten
            cache.append(("flatten", x.shape))
            x = x.reshape(x.shape[0], -1)
    return cache, x


def softmax_cross_entropy(logits, labels):
    """Mean loss and d loss / d logits for integer class labels."""
    logits = np.asarray(logits, dtype=np.float64)
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(logz - shifted[np.arange(n), labels]))
    probs = np.exp(shifted - logz[:, None])
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    return loss, dlogits / n


def loss_and_grad(params, x, y):
    """Mean softmax cross-entropy and exact parameter gradients."""
    y = np.asarray(y)
    cache, logits = forward(params, x)
    loss, grad = softmax_cross_entropy(logits, y)
    dweights = [None] * len(params.specs)
    dbiases = [None] * len(params.specs)
    for i in range(len(params.specs) - 1, -1, -1):
        entry = cache[i]
        kind = entry[0]
        if kind == "dense":
            xin = entry[1]
            dweights[i] = xin.T @ grad
            dbiases[i] = grad.sum(axis=0)
            grad = grad @ params.weights[i].T
        elif kind == "conv2d":
            grad, dweights[i], dbiases[i] = _conv_backward(grad, entry[1], params.weights[i])
        elif kind == "relu":
            grad = grad * entry[1]
        elif kind == "tanh":
            grad = grad * (1.0 - entry[1] ** 2)
        elif kind == "maxpool2":
            grad = _pool_backward(grad, entry[1], entry[2])
        else:                      # flatten
            grad = grad.reshape(entry[1])
    return loss, (dweights, dbiases)


def predict_logits(params, x, batch_size=256):
    out = []
    for start in range(0, len(x), batch_size):
        _, logits = forward(params, x[start:start + batch_size])
        out.append(logits)
    return np.concatenate(out, axis=0)


def evaluate(params, x, y, batch_size=256):
    """Mean loss and top-1 error rate over a dataset; no side effects."""
    if len(x) == 0:
        raise ValueError("empty dataset")
    y = np.asarray(y)
    logits = predict_logits(params, x, batch_size)
    loss, _ = softmax_cross_entropy(logits, y)
    error = float(np.mean(logits.argmax(axis=1) != y))
    return loss, error
