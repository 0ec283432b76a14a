"""Sequential conv/dense networks on NHWC float64 arrays.

Convolutions are cross-correlations with valid padding and stride 1, so each
spatial dimension shrinks by ``kernel - 1``.  Parameters are kept as a list with
one ``(weight, bias)`` pair per layer (``None`` for flatten).  Conv weights have
shape (kh, kw, in_channels, filters); dense weights (in_units, units).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DomainError

ACTIVATIONS = ("relu", "linear")


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # "conv2d" | "dense" | "flatten"
    filters: int = 0  # conv2d filters or dense units
    kernel: int = 0
    activation: str = "linear"

    def __post_init__(self):
        if self.kind not in ("conv2d", "dense", "flatten"):
            raise DomainError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise DomainError(f"unknown activation {self.activation!r}")
        if self.kind == "conv2d" and (self.filters < 1 or self.kernel < 1):
            raise DomainError("conv2d needs filters >= 1 and kernel >= 1")
        if self.kind == "dense" and self.filters < 1:
            raise DomainError("dense needs units >= 1")

    @property
    def units(self) -> int:
        return self.filters

    def to_dict(self) -> dict:
        return {"kind": self.kind, "filters": self.filters, "kernel": self.kernel, "activation": self.activation}


def conv2d(filters: int, kernel: int, activation: str = "relu") -> LayerSpec:
    return LayerSpec("conv2d", filters, kernel, activation)


def dense(units: int, activation: str = "relu") -> LayerSpec:
    return LayerSpec("dense", units, 0, activation)


def flatten() -> LayerSpec:
    return LayerSpec("flatten")


@dataclass(frozen=True)
class NetworkSpec:
    input_shape: tuple  # (height, width, channels)
    layers: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        self.output_shapes()  # validates

    def output_shapes(self) -> list[tuple]:
        """Per-layer output shape without the batch axis."""
        shape = self.input_shape
        out = []
        for i, layer in enumerate(self.layers):
            if layer.kind == "conv2d":
                if len(shape) != 3:
                    raise DomainError(f"layer {i}: conv2d needs a (h, w, c) input, got {shape}")
                h, w, _ = shape
                if layer.kernel > h or layer.kernel > w:
                    raise DomainError(f"layer {i}: kernel {layer.kernel} does not fit input {shape}")
                shape = (h - layer.kernel + 1, w - layer.kernel + 1, layer.filters)
            elif layer.kind == "flatten":
                shape = (int(np.prod(shape)),)
            else:
                if len(shape) != 1:
                    raise DomainError(f"layer {i}: dense needs a flat input, got {shape}")
                shape = (layer.filters,)
            out.append(shape)
        return out

    def layer_param_counts(self) -> list[int]:
        counts = []
        shape = self.input_shape
        for layer, out in zip(self.layers, self.output_shapes()):
            if layer.kind == "conv2d":
                counts.append(layer.kernel * layer.kernel * shape[2] * layer.filters + layer.filters)
            elif layer.kind == "dense":
                counts.append(shape[0] * layer.filters + layer.filters)
            else:
                counts.append(0)
            shape = out
        return counts

    @property
    def output_size(self) -> int:
        shapes = self.output_shapes()
        return int(np.prod(shapes[-1])) if shapes else int(np.prod(self.input_shape))

    def to_dict(self) -> dict:
        return {"input_shape": list(self.input_shape), "layers": [l.to_dict() for l in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> NetworkSpec:
        return cls(tuple(d["input_shape"]), tuple(LayerSpec(**l) for l in d["layers"]))


def param_count(net: NetworkSpec) -> int:
    return sum(net.layer_param_counts())


def param_shapes(net: NetworkSpec) -> list:
    shapes = []
    shape = net.input_shape
    for layer, out in zip(net.layers, net.output_shapes()):
        if layer.kind == "conv2d":
            shapes.append(((layer.kernel, layer.kernel, shape[2], layer.filters), (layer.filters,)))
        elif layer.kind == "dense":
            shapes.append(((shape[0], layer.filters), (layer.filters,)))
        else:
            shapes.append(None)
        shape = out
    return shapes


def init_params(net: NetworkSpec, rng: np.random.Generator) -> list:
    """He-normal weights for ReLU layers, std sqrt(1/fan_in) for linear ones; zero biases."""
    params = []
    for layer, shp in zip(net.layers, param_shapes(net)):
        if shp is None:
            params.append(None)
            continue
        wshape, bshape = shp
        fan_in = int(np.prod(wshape[:-1]))
        gain = 2.0 if layer.activation == "relu" else 1.0
        W = rng.standard_normal(wshape) * np.sqrt(gain / fan_in)
        params.append((W, np.zeros(bshape)))
    return params


def iter_arrays(params: list):
    for p in params:
        if p is not None:
            yield from p


# ---------------------------------------------------------------------------
# forward / backward
# ---------------------------------------------------------------------------


def _conv_forward(x: np.ndarray, W: np.ndarray, b: np.ndarray):
    N, H, Wd, C = x.shape
    k, _, _, F = W.shape
    Ho, Wo = H - k + 1, Wd - k + 1
    if Ho == 1 and Wo == 1:
        cols = x.reshape(N, k * k * C)
    else:
        # (N, Ho, Wo, C, k, k) -> (N, Ho, Wo, k, k, C)
        win = sliding_window_view(x, (k, k), axis=(1, 2)).transpose(0, 1, 2, 4, 5, 3)
        cols = win.reshape(N * Ho * Wo, k * k * C)
    out = cols @ W.reshape(k * k * C, F) + b
    return out.reshape(N, Ho, Wo, F), cols


def _conv_backward(dout: np.ndarray, cols: np.ndarray, x_shape: tuple, W: np.ndarray, need_dx: bool):
    N, H, Wd, C = x_shape
    k, _, _, F = W.shape
    Ho, Wo = H - k + 1, Wd - k + 1
    d2 = dout.reshape(N * Ho * Wo, F)
    dW = (cols.T @ d2).reshape(W.shape)
    db = d2.sum(axis=0)
    if not need_dx:
        return None, dW, db
    dcols = d2 @ W.reshape(k * k * C, F).T
    if Ho == 1 and Wo == 1:
        return dcols.reshape(x_shape), dW, db
    dcols = dcols.reshape(N, Ho, Wo, k, k, C)
    dx = np.zeros(x_shape)
    for i in range(k):
        for j in range(k):
            dx[:, i:i + Ho, j:j + Wo, :] += dcols[:, :, :, i, j, :]
    return dx, dW, db


@dataclass
class ForwardCache:
    net: NetworkSpec
    entries: list
    batch_size: int


def forward(net: NetworkSpec, params: list, batch: np.ndarray):
    """Run the network; returns ``(outputs, cache)``."""
    x = np.asarray(batch, dtype=float)
    if x.shape[1:] != net.input_shape:
        raise DomainError(f"batch shape {x.shape[1:]} does not match network input {net.input_shape}")
    entries = []
    for layer, p in zip(net.layers, params):
        if layer.kind == "flatten":
            entries.append(("flatten", x.shape))
            x = x.reshape(x.shape[0], -1)
            continue
        W, b = p
        if layer.kind == "conv2d":
            z, cols = _conv_forward(x, W, b)
            entry = ["conv2d", x.shape, cols, None]
        else:
            z = x @ W + b
            entry = ["dense", x.shape, x, None]
        if layer.activation == "relu":
            mask = z > 0.0
            z = np.where(mask, z, 0.0)
            entry[3] = mask
        entries.append(tuple(entry))
        x = z
    return x, ForwardCache(net, entries, x.shape[0])


def backward(net: NetworkSpec, params: list, cache: ForwardCache, output_grad: np.ndarray, input_grad: bool = False):
    """Reverse pass; returns per-layer ``(dW, db)`` grads (and dL/dinput if asked)."""
    if cache.net is not net and cache.net != net:
        raise DomainError("cache was produced by a different network")
    if len(cache.entries) != len(net.layers):
        raise DomainError("stale or foreign forward cache")
    g = np.asarray(output_grad, dtype=float)
    if g.shape[0] != cache.batch_size:
        raise DomainError("output gradient batch size does not match the cached forward pass")
    grads = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        entry = cache.entries[i]
        kind = entry[0]
        if kind == "flatten":
            g = g.reshape(entry[1])
            continue
        _, x_shape, saved, mask = entry
        if mask is not None:
            g = np.where(mask, g, 0.0)
        W, _ = params[i]
        need_dx = input_grad or i > 0
        if kind == "conv2d":
            g_in, dW, db = _conv_backward(g, saved, x_shape, W, need_dx)
        else:
            dW = saved.T @ g
            db = g.sum(axis=0)
            g_in = g @ W.T if need_dx else None
        grads[i] = (dW, db)
        g = g_in
    if input_grad:
        return grads, g
    return grads


def mae_loss(pred: np.ndarray, target: np.ndarray):
    """Mean absolute error over every entry, with subgradient sign(0) = 0."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise DomainError(f"shape mismatch: pred {pred.shape} vs target {target.shape}")
    d = pred - target
    return float(np.abs(d).mean()), np.sign(d) / d.size


# ---------------------------------------------------------------------------
# finite-difference checking
# ---------------------------------------------------------------------------


def gradient_check(net: NetworkSpec, params: list, batch: np.ndarray, n_checks: int,
                   rng: np.random.Generator, step: float = 1e-6) -> np.ndarray:
    """Relative errors between backprop and central differences.

    The scalar objective is ``sum(outputs * G)`` for a fixed random ``G``.
    Parameters are drawn layer-uniformly, then uniformly within the layer, so
    small layers are exercised too.  Relative error uses
    ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    out, cache = forward(net, params, batch)
    G = rng.standard_normal(out.shape)
    grads = backward(net, params, cache, G)
    arrays = [(li, pi) for li, p in enumerate(params) if p is not None for pi in range(2)]
    errs = []
    for _ in range(n_checks):
        li, pi = arrays[rng.integers(len(arrays))]
        arr = params[li][pi]
        flat_idx = int(rng.integers(arr.size))
        idx = np.unravel_index(flat_idx, arr.shape)
        orig = arr[idx]
        arr[idx] = orig + step
        fp = float((forward(net, params, batch)[0] * G).sum())
        arr[idx] = orig - step
        fm = float((forward(net, params, batch)[0] * G).sum())
        arr[idx] = orig
        num = (fp - fm) / (2.0 * step)
        ana = float(grads[li][pi][idx])
        errs.append(abs(ana - num) / max(abs(ana), abs(num), 1e-8))
    return np.array(errs)
