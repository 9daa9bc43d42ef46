"""Gaussian mutation, best-of-K selection and the improvement-probability estimator."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import Architecture, local_loss


@dataclass(frozen=True)
class MutationConfig:
    sigma: float = 0.1
    k: int = 10

    def __post_init__(self):
        if not np.isfinite(self.sigma) or self.sigma < 0:
            raise ValueError(f"sigma must be finite and >= 0, got {self.sigma}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")


@dataclass
class VariantOutcome:
    variant_index: int  # 1-based, as in best-of-K bookkeeping
    params: np.ndarray
    loss: float


def mutate(params, sigma: float, rng: np.random.Generator) -> np.ndarray:
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    params = np.asarray(params, dtype=np.float64)
    if sigma == 0:
        # no draw at all: keeps -0.0 entries bitwise intact
        return params.copy()
    return params + sigma * rng.standard_normal(params.shape[0])


def select_best(outcomes) -> VariantOutcome:
    """Minimal-loss outcome; ties go to the lowest ``variant_index``."""
    outcomes = list(outcomes)
    if not outcomes:
        raise ValueError("no variants to select from")
    return min(outcomes, key=lambda o: (o.loss, o.variant_index))


def _perturbation_pool(p: int, sigma: float, k: int, trials: int, rng) -> np.ndarray:
    if sigma == 0:
        return np.zeros((trials, k, p))
    return sigma * rng.standard_normal((trials, k, p))


def improvement_frequencies(arch: Architecture, params, dataset, sigma: float,
                            ks, trials: int, rng: np.random.Generator) -> dict[int, float]:
    """Improvement frequency for several K at once, from one shared perturbation pool.

    Trial ``t`` with budget ``K`` uses the first ``K`` perturbations drawn for
    that trial, so the frequencies are non-decreasing in ``K`` by construction.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    ks = sorted(set(int(k) for k in ks))
    if ks[0] < 1:
        raise ValueError("every K must be >= 1")
    theta = np.asarray(params, dtype=np.float64)
    base = local_loss(arch, theta, dataset)
    kmax = ks[-1]
    pool = _perturbation_pool(theta.shape[0], sigma, kmax, trials, rng)
    losses = np.empty((trials, kmax))
    for t in range(trials):
        for k in range(kmax):
            losses[t, k] = local_loss(arch, theta + pool[t, k], dataset) if sigma > 0 else base
    running_min = np.minimum.accumulate(losses, axis=1)
    return {k: float(np.mean(running_min[:, k - 1] < base)) for k in ks}


def estimate_improvement_probability(arch: Architecture, params, dataset, sigma: float,
                                     k: int, trials: int, rng: np.random.Generator) -> float:
    """Fraction of trials where the best of ``k`` fresh mutations strictly lowers the local loss.

    Pure perturbation test: the mutated variants are not fine-tuned.
    """
    return improvement_frequencies(arch, params, dataset, sigma, [k], trials, rng)[k]
