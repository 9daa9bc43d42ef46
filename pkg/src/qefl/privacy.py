"""Gaussian-mechanism noising, update clipping and per-round epsilon bookkeeping.

Per-round epsilon is ``Delta**2 / (2 * sigma_p**2)``. Totals across rounds
use naive linear composition and are labelled as such; no RDP or moments
accounting is attempted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np


@dataclass(frozen=True)
class PrivacyConfig:
    sigma_p: float = 0.01
    clip_norm: float | None = None
    enabled: bool = True
    delta: float = 1e-5

    def __post_init__(self):
        if not math.isfinite(self.sigma_p) or self.sigma_p < 0:
            raise ValueError(f"sigma_p must be finite and >= 0, got {self.sigma_p}")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ValueError(f"clip_norm must be > 0, got {self.clip_norm}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")

    @property
    def effective_sigma(self) -> float:
        return self.sigma_p if self.enabled else 0.0


@dataclass(frozen=True)
class PrivacyReport:
    round_index: int = 0
    delta_sensitivity: float = 0.0
    sensitivity_source: str = "none"  # "clip" or "empirical"
    epsilon: float = 0.0
    rounds_composed: int = 0
    epsilon_total: float = 0.0
    history: tuple = field(default=(), repr=False)

    @property
    def guaranteed(self) -> bool:
        """Only a clip-derived sensitivity yields an actual bound."""
        return self.sensitivity_source == "clip"


def add_noise(params, sigma_p: float, rng: np.random.Generator) -> np.ndarray:
    if sigma_p < 0:
        raise ValueError("sigma_p must be >= 0")
    params = np.asarray(params, dtype=np.float64)
    if sigma_p == 0:
        return params.copy()
    return params + sigma_p * rng.standard_normal(params.shape[0])


def update_norm(theta_selected, theta_global) -> float:
    return float(np.linalg.norm(np.asarray(theta_selected) - np.asarray(theta_global)))


def clip_update(theta_selected, theta_global, clip_norm: float) -> np.ndarray:
    if not clip_norm > 0:
        raise ValueError("clip_norm must be > 0")
    theta_selected = np.asarray(theta_selected, dtype=np.float64)
    theta_global = np.asarray(theta_global, dtype=np.float64)
    u = theta_selected - theta_global
    norm = float(np.linalg.norm(u))
    if norm <= clip_norm:
        return theta_selected.copy()
    return theta_global + u * (clip_norm / norm)


def epsilon_for(sensitivity: float, sigma_p: float) -> float:
    if sensitivity < 0:
        raise ValueError("sensitivity must be >= 0")
    if sigma_p <= 0:
        raise ValueError("sigma_p must be > 0: epsilon is unbounded without noise")
    return sensitivity ** 2 / (2.0 * sigma_p ** 2)


def account_round(report: PrivacyReport, sigma_p: float, *, clip_norm: float | None = None,
                  observed_norm: float | None = None, round_index: int | None = None) -> PrivacyReport:
    """Fold one round into ``report``; returns a new report.

    With clipping the sensitivity is the clip bound (a worst case); without
    it, the largest update norm seen this round, which is not a guarantee.
    A round released without noise (``sigma_p == 0``) is recorded as
    ``inf`` rather than raising, so long runs still log honestly.
    """
    if clip_norm is not None:
        sens, source = float(clip_norm), "clip"
    elif observed_norm is not None:
        sens, source = float(observed_norm), "empirical"
    else:
        raise ValueError("need a clip bound or an observed update norm")
    eps = epsilon_for(sens, sigma_p) if sigma_p > 0 else math.inf
    r = report.round_index + 1 if round_index is None else int(round_index)
    total = report.epsilon_total + eps
    return replace(
        report,
        round_index=r,
        delta_sensitivity=sens,
        sensitivity_source=source,
        epsilon=eps,
        rounds_composed=report.rounds_composed + 1,
        epsilon_total=total,
        history=report.history + ((r, sens, eps, total),),
    )


def privacy_csv(report: PrivacyReport) -> str:
    lines = ["round,delta_sensitivity,epsilon_round,epsilon_total"]
    for r, sens, eps, total in report.history:
        lines.append(f"{r},{sens!r},{eps!r},{total!r}")
    return "\n".join(lines) + "\n"
