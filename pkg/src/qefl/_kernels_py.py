"""Pure-numpy batch kernels. Reference fallback for ``_kernels_c``.

Both modules expose the same three functions over a flat parameter vector
laid out per layer as row-major weights followed by the bias/phase vector.
``dims`` is ``(input_dim, *hidden_dims, output_dim)``; every layer except
the last applies ``sin``.
"""
from __future__ import annotations

import numpy as np


def _layers(params, dims):
    off = 0
    out = []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        W = params[off:off + d_out * d_in].reshape(d_out, d_in)
        off += d_out * d_in
        b = params[off:off + d_out]
        off += d_out
        out.append((W, b))
    return out


def batch_logits(params, dims, X):
    layers = _layers(params, dims)
    z = X
    for W, phi in layers[:-1]:
        z = np.sin(z @ W.T + phi)
    V, b = layers[-1]
    return z @ V.T + b


def _per_example_ce(logits, y):
    m = logits.max(axis=1, keepdims=True)
    shifted = logits - m
    lse = np.log(np.exp(shifted).sum(axis=1))
    return lse - shifted[np.arange(len(y)), y]


def batch_mean_loss(params, dims, X, y):
    return float(_per_example_ce(batch_logits(params, dims, X), y).mean())


def loss_and_grad(params, dims, X, y):
    """Mean cross-entropy over the batch and its gradient w.r.t. ``params``."""
    layers = _layers(params, dims)
    n = X.shape[0]
    zs = [X]
    pre = []
    z = X
    for W, phi in layers[:-1]:
        a = z @ W.T + phi
        pre.append(a)
        z = np.sin(a)
        zs.append(z)
    V, b = layers[-1]
    logits = z @ V.T + b

    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    s = e.sum(axis=1, keepdims=True)
    rows = np.arange(n)
    loss = float((np.log(s[:, 0]) + m[:, 0] - logits[rows, y]).mean())
    g = e / s
    g[rows, y] -= 1.0
    g /= n

    grads = []
    grads.append((g.T @ zs[-1], g.sum(axis=0)))
    dz = g @ V
    for li in range(len(layers) - 2, -1, -1):
        W, _ = layers[li]
        ga = dz * np.cos(pre[li])
        grads.append((ga.T @ zs[li], ga.sum(axis=0)))
        if li > 0:
            dz = ga @ W
    grads.reverse()
    flat = np.concatenate([np.concatenate((dW.ravel(), db)) for dW, db in grads])
    return loss, flat


def sgd_epoch(params, dims, X, y, order, batch_size, eta):
    """One epoch of mini-batch SGD over ``X[order]``, updating ``params`` in place."""
    n = len(order)
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        _, g = loss_and_grad(params, dims, X[idx], y[idx])
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient")
        params[:] = params - eta * g
