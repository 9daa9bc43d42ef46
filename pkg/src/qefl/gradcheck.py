"""Finite-difference check of the analytic gradients over random networks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .nn import Architecture, loss_and_grad

THRESHOLD = 1e-5
STEP = 1e-5


@dataclass
class BlockReport:
    name: str  # e.g. "W1", "phi1", "V", "b"
    rel_error: float
    worst_index: int  # coordinate inside the block with the largest absolute discrepancy
    worst_abs_error: float


@dataclass
class DrawReport:
    dims: tuple[int, ...]
    blocks: list[BlockReport]

    @property
    def rel_error(self) -> float:
        return max(b.rel_error for b in self.blocks)


def block_names(arch: Architecture) -> list[tuple[str, int]]:
    names = []
    d = arch.dims
    for li, (d_in, d_out) in enumerate(zip(d[:-1], d[1:]), start=1):
        head = li == len(d) - 1
        names.append(("V" if head else f"W{li}", d_out * d_in))
        names.append(("b" if head else f"phi{li}", d_out))
    return names


def relative_error(a, b) -> float:
    """``||a - b|| / (||a|| + ||b||)``, 0 when both vanish."""
    den = np.linalg.norm(a) + np.linalg.norm(b)
    return 0.0 if den == 0 else float(np.linalg.norm(a - b) / den)


def numeric_gradient(arch: Architecture, params, X, y, h: float = STEP) -> np.ndarray:
    k = _backend.KERNELS["python"]
    g = np.empty_like(params)
    for i in range(params.shape[0]):
        p = params.copy()
        p[i] += h
        up = k.batch_mean_loss(p, arch.dims, X, y)
        p[i] -= 2 * h
        down = k.batch_mean_loss(p, arch.dims, X, y)
        g[i] = (up - down) / (2 * h)
    return g


def check_draw(arch: Architecture, params, X, y, grad_fn=None, h: float = STEP) -> DrawReport:
    if grad_fn is None:
        grad_fn = lambda a, p, X_, y_: loss_and_grad(a, p, X_, y_)[1]  # noqa: E731
    analytic = grad_fn(arch, params, X, y)
    numeric = numeric_gradient(arch, params, X, y, h)
    blocks = []
    off = 0
    for name, size in block_names(arch):
        a = analytic[off:off + size]
        n = numeric[off:off + size]
        diff = np.abs(a - n)
        worst = int(np.argmax(diff))
        blocks.append(BlockReport(name, relative_error(a, n), worst, float(diff[worst])))
        off += size
    return DrawReport(arch.dims, blocks)


def random_case(rng: np.random.Generator):
    depth = int(rng.integers(1, 4))
    arch = Architecture(int(rng.integers(1, 6)), tuple(int(v) for v in rng.integers(1, 7, size=depth)),
                        int(rng.integers(2, 5)))
    params = rng.normal(0.0, 0.7, size=arch.n_params)
    n = int(rng.integers(1, 5))
    X = rng.uniform(-1, 1, size=(n, arch.input_dim))
    y = rng.integers(0, arch.output_dim, size=n)
    return arch, params, X, y


def run(seed: int = 0, draws: int = 100, grad_fn=None) -> list[DrawReport]:
    rng = np.random.default_rng(seed)
    return [check_draw(*random_case(rng), grad_fn=grad_fn) for _ in range(draws)]
