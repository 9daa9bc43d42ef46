"""Dense network with phase-shifted sine hidden layers and an affine head.

Parameters live in one flat float64 vector. Packing order, per hidden layer:
row-major ``W`` (d_out x d_in) then the phase vector ``phi`` (d_out); the
output head comes last as row-major ``V`` (c x d_last) then bias ``b``.

Single-example ``forward``/``backward`` are the readable reference path.
Batched training goes through the kernel picked in ``_backend``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _backend


@dataclass(frozen=True)
class Architecture:
    input_dim: int
    hidden_dims: tuple[int, ...]
    output_dim: int

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if len(self.hidden_dims) < 1:
            raise ValueError("architecture needs at least one hidden layer")
        if min(self.dims) < 1:
            raise ValueError(f"all layer widths must be >= 1, got {self.dims}")

    @property
    def dims(self) -> tuple[int, ...]:
        return (int(self.input_dim), *self.hidden_dims, int(self.output_dim))

    @property
    def n_params(self) -> int:
        d = self.dims
        return sum(o * i + o for i, o in zip(d[:-1], d[1:]))

    def unpack(self, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        """Split ``params`` into ``[(W, phi), ..., (V, b)]`` views (no copies)."""
        params = np.asarray(params)
        if params.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got shape {params.shape}")
        out = []
        off = 0
        for d_in, d_out in zip(self.dims[:-1], self.dims[1:]):
            W = params[off:off + d_out * d_in].reshape(d_out, d_in)
            off += d_out * d_in
            out.append((W, params[off:off + d_out]))
            off += d_out
        return out

    def pack(self, layers) -> np.ndarray:
        parts = []
        for (W, b), d_in, d_out in zip(layers, self.dims[:-1], self.dims[1:]):
            W = np.asarray(W, dtype=np.float64)
            b = np.asarray(b, dtype=np.float64)
            if W.shape != (d_out, d_in) or b.shape != (d_out,):
                raise ValueError(f"layer shape mismatch: {W.shape}, {b.shape} vs ({d_out}, {d_in})")
            parts.append(W.ravel())
            parts.append(b)
        if len(parts) != 2 * (len(self.dims) - 1):
            raise ValueError("wrong number of layers")
        return np.concatenate(parts)


@dataclass
class ActivationCache:
    inputs: list[np.ndarray] = field(default_factory=list)  # z^(l-1) fed to each layer
    pre: list[np.ndarray] = field(default_factory=list)  # a^(l) = W z + phi, sine layers only
    logits: np.ndarray | None = None


def init_params(arch: Architecture, seed) -> np.ndarray:
    """Glorot-uniform weights, zero phases and zero output bias."""
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    layers = []
    for d_in, d_out in zip(arch.dims[:-1], arch.dims[1:]):
        s = np.sqrt(6.0 / (d_in + d_out))
        layers.append((rng.uniform(-s, s, size=(d_out, d_in)), np.zeros(d_out)))
    return arch.pack(layers)


def quantum_layer_forward(W, phi, z_in) -> np.ndarray:
    W = np.asarray(W, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    z_in = np.asarray(z_in, dtype=np.float64)
    if W.ndim != 2 or phi.shape != (W.shape[0],) or z_in.shape != (W.shape[1],):
        raise ValueError(f"shape mismatch: W {W.shape}, phi {phi.shape}, z {z_in.shape}")
    return np.sin(W @ z_in + phi)


def quantum_layer_backward(W, pre, z_in, upstream):
    """Backprop through ``sin(W z + phi)``; ``pre`` is the cached ``W z + phi``.

    Returns ``(dW, dphi, dz_in)``.
    """
    W = np.asarray(W, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (W.shape[0],) or np.shape(pre) != upstream.shape or np.shape(z_in) != (W.shape[1],):
        raise ValueError("shape mismatch in quantum_layer_backward")
    g = upstream * np.cos(pre)
    return np.outer(g, z_in), g, W.T @ g


def forward(arch: Architecture, params, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (arch.input_dim,):
        raise ValueError(f"input has shape {x.shape}, expected ({arch.input_dim},)")
    layers = arch.unpack(params)
    cache = ActivationCache()
    z = x
    for W, phi in layers[:-1]:
        cache.inputs.append(z)
        a = W @ z + phi
        cache.pre.append(a)
        z = np.sin(a)
    V, b = layers[-1]
    cache.inputs.append(z)
    cache.logits = V @ z + b
    return cache.logits, cache


def backward(arch: Architecture, params, cache: ActivationCache, dlogits) -> np.ndarray:
    """Gradient of a scalar loss w.r.t. ``params`` given its gradient at the logits."""
    layers = arch.unpack(params)
    V, _ = layers[-1]
    grads = [None] * len(layers)
    g = np.asarray(dlogits, dtype=np.float64)
    grads[-1] = (np.outer(g, cache.inputs[-1]), g)
    up = V.T @ g
    for li in range(len(layers) - 2, -1, -1):
        dW, dphi, up = quantum_layer_backward(layers[li][0], cache.pre[li], cache.inputs[li], up)
        grads[li] = (dW, dphi)
    return arch.pack(grads)


def softmax_cross_entropy(logits, label: int):
    logits = np.asarray(logits, dtype=np.float64)
    c = logits.shape[0]
    if not 0 <= label < c:
        raise ValueError(f"label {label} out of range for {c} classes")
    shifted = logits - logits.max()
    e = np.exp(shifted)
    s = e.sum()
    loss = float(np.log(s) - shifted[label])
    d = e / s
    d[label] -= 1.0
    return max(loss, 0.0), d


def _xy(dataset):
    X = np.ascontiguousarray(dataset.X, dtype=np.float64)
    y = np.ascontiguousarray(dataset.y, dtype=np.int64)
    if len(y) == 0:
        raise ValueError("dataset is empty")
    return X, y


def local_loss(arch: Architecture, params, dataset) -> float:
    """Mean cross-entropy of the model over every example in ``dataset``."""
    X, y = _xy(dataset)
    return _backend.kernels.batch_mean_loss(np.ascontiguousarray(params, dtype=np.float64), arch.dims, X, y)


def loss_and_grad(arch: Architecture, params, X, y, kernels=None):
    k = kernels or _backend.kernels
    return k.loss_and_grad(
        np.ascontiguousarray(params, dtype=np.float64),
        arch.dims,
        np.ascontiguousarray(X, dtype=np.float64),
        np.ascontiguousarray(y, dtype=np.int64),
    )


def predict_logits(arch: Architecture, params, X) -> np.ndarray:
    return _backend.kernels.batch_logits(
        np.ascontiguousarray(params, dtype=np.float64), arch.dims, np.ascontiguousarray(X, dtype=np.float64)
    )


def predict(arch: Architecture, params, X) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. lowest class index on ties
    return np.argmax(predict_logits(arch, params, X), axis=1)


def sgd_step(params, grads, eta: float) -> np.ndarray:
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape:
        raise ValueError(f"length mismatch: {params.shape} vs {grads.shape}")
    if not np.all(np.isfinite(grads)):
        raise FloatingPointError("non-finite gradient")
    return params - eta * grads


def train_epochs(arch: Architecture, params, dataset, epochs: int, eta: float,
                 batch_size: int, rng: np.random.Generator, kernels=None) -> np.ndarray:
    """``epochs`` passes of mini-batch SGD, reshuffling from ``rng`` every epoch."""
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    X, y = _xy(dataset)
    k = kernels or _backend.kernels
    theta = np.array(params, dtype=np.float64)
    for _ in range(epochs):
        order = rng.permutation(len(y)).astype(np.int64)
        k.sgd_epoch(theta, arch.dims, X, y, order, int(batch_size), float(eta))
    return theta
