"""Round orchestration: per-client mutate / fine-tune / select / noise, then server averaging.

Every random draw comes from a stream keyed on ``(master_seed, purpose,
round, client, variant)`` so running clients on a thread pool gives the same
bits as running them in order.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import metrics as _metrics
from .evolution import MutationConfig, VariantOutcome, mutate, select_best
from .nn import Architecture, local_loss, train_epochs
from .privacy import PrivacyConfig, PrivacyReport, account_round, add_noise, clip_update, update_norm
from .rng import Purpose, stream

log = logging.getLogger(__name__)

AGGREGATION_MODES = ("uniform", "weighted")


@dataclass(frozen=True)
class RoundConfig:
    n_clients: int = 5
    local_epochs: int = 5
    learning_rate: float = 0.05
    mutation: MutationConfig = field(default_factory=MutationConfig)
    privacy: PrivacyConfig = field(default_factory=PrivacyConfig)
    rounds: int = 20
    dropout_prob: float = 0.0
    aggregation: str = "uniform"
    batch_size: int = 32
    master_seed: int = 42

    def __post_init__(self):
        if self.n_clients < 1:
            raise ValueError("n_clients must be >= 1")
        if self.local_epochs < 1:
            raise ValueError("local_epochs must be >= 1")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if not self.learning_rate >= 0:
            # eta = 0 is accepted so learning can be switched off in controlled tests
            raise ValueError("learning_rate must be >= 0")
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise ValueError("dropout_prob must lie in [0, 1]")
        if self.aggregation not in AGGREGATION_MODES:
            raise ValueError(f"aggregation must be one of {AGGREGATION_MODES}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class ClientState:
    client_id: int
    shard: object  # data.Dataset

    def __post_init__(self):
        if len(self.shard) == 0:
            raise ValueError(f"client {self.client_id} has an empty shard")

    @property
    def n_examples(self) -> int:
        return len(self.shard)


@dataclass
class ClientUpdate:
    client_id: int
    theta_noised: np.ndarray
    best_loss: float
    best_variant: int
    variant_losses: list[float]
    update_norm: float  # norm of the released update before noise


@dataclass
class RoundOutcome:
    round_index: int
    theta: np.ndarray
    participants: list[int]
    client_losses: dict[int, float]
    privacy: PrivacyReport
    empty_round: bool = False


@dataclass
class RoundRecord:
    outcome: RoundOutcome
    metrics: _metrics.RoundMetrics


@dataclass(frozen=True)
class ObjectiveEstimateConfig:
    lam: float = 0.0
    mc_samples: int = 16

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValueError("lambda must be finite and >= 0")
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be >= 1")


def fine_tune_variant(arch: Architecture, theta_global, client: ClientState, cfg: RoundConfig,
                      round_index: int, k: int, kernels=None):
    """Variant ``k`` (1-based) of one client in one round: mutate, then E epochs of SGD."""
    seed = cfg.master_seed
    cid = client.client_id
    theta = mutate(theta_global, cfg.mutation.sigma, stream(seed, Purpose.MUTATION, round_index, cid, k))
    return train_epochs(arch, theta, client.shard, cfg.local_epochs, cfg.learning_rate, cfg.batch_size,
                        stream(seed, Purpose.SHUFFLE, round_index, cid, k), kernels=kernels)


def client_round(arch: Architecture, theta_global, client: ClientState, cfg: RoundConfig,
                 round_index: int = 1, kernels=None) -> ClientUpdate:
    outcomes = []
    for k in range(1, cfg.mutation.k + 1):
        theta_k = fine_tune_variant(arch, theta_global, client, cfg, round_index, k, kernels)
        outcomes.append(VariantOutcome(k, theta_k, local_loss(arch, theta_k, client.shard)))
    best = select_best(outcomes)
    selected = best.params
    if cfg.privacy.clip_norm is not None:
        selected = clip_update(selected, theta_global, cfg.privacy.clip_norm)
    norm = update_norm(selected, theta_global)
    noise_rng = stream(cfg.master_seed, Purpose.NOISE, round_index, client.client_id)
    return ClientUpdate(
        client_id=client.client_id,
        theta_noised=add_noise(selected, cfg.privacy.effective_sigma, noise_rng),
        best_loss=best.loss,
        best_variant=best.variant_index,
        variant_losses=[o.loss for o in outcomes],
        update_norm=norm,
    )


def aggregate(models, weights=None) -> np.ndarray:
    """Elementwise mean of ``models``; with ``weights`` (e.g. shard sizes), the weighted mean.

    Computed as ``lo + mean(models - lo)`` with ``lo`` the coordinatewise
    minimum and exactly-rounded sums (``math.fsum``), so the result does not
    depend on model order and identical inputs come back bit for bit.
    """
    models = [np.asarray(m, dtype=np.float64) for m in models]
    if not models:
        raise ValueError("nothing to aggregate")
    p = models[0].shape
    if any(m.shape != p for m in models):
        raise ValueError("models have different lengths")
    stacked = np.stack(models)
    lo = stacked.min(axis=0)
    hi = stacked.max(axis=0)
    diffs = stacked - lo
    if weights is None:
        shift = np.array([math.fsum(col) for col in diffs.T]) / len(models)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (len(models),) or np.any(w <= 0):
            raise ValueError("weights must be positive, one per model")
        share = w / math.fsum(w)
        shift = np.array([math.fsum(col) for col in (share[:, None] * diffs).T])
    return np.clip(lo + shift.reshape(p), lo, hi)


def _sample_participants(cfg: RoundConfig, clients, round_index: int) -> list[ClientState]:
    if cfg.dropout_prob == 0:
        return list(clients)
    u = stream(cfg.master_seed, Purpose.DROPOUT, round_index).random(len(clients))
    return [c for c, ui in zip(clients, u) if ui >= cfg.dropout_prob]


def run_round(arch: Architecture, theta_global, clients, cfg: RoundConfig, round_index: int,
              report: PrivacyReport, executor: ThreadPoolExecutor | None = None, kernels=None) -> RoundOutcome:
    if not clients:
        raise ValueError("need at least one client")
    theta_global = np.asarray(theta_global, dtype=np.float64)
    active = _sample_participants(cfg, clients, round_index)
    if not active:
        log.warning("round %d: every client dropped out, global model unchanged", round_index)
        return RoundOutcome(round_index, theta_global.copy(), [], {}, report, empty_round=True)

    def work(c):
        return client_round(arch, theta_global, c, cfg, round_index, kernels)

    updates = list(executor.map(work, active)) if executor is not None else [work(c) for c in active]
    weights = [c.n_examples for c in active] if cfg.aggregation == "weighted" else None
    theta = aggregate([u.theta_noised for u in updates], weights)
    report = account_round(
        report,
        cfg.privacy.effective_sigma,
        clip_norm=cfg.privacy.clip_norm,
        observed_norm=max(u.update_norm for u in updates),
        round_index=round_index,
    )
    return RoundOutcome(
        round_index,
        theta,
        [u.client_id for u in updates],
        {u.client_id: u.best_loss for u in updates},
        report,
    )


def global_train_loss(arch: Architecture, theta, clients) -> float:
    """Data-size weighted objective: sum over clients of (n_i / n) * L_i(theta)."""
    n = sum(c.n_examples for c in clients)
    return float(sum(c.n_examples / n * local_loss(arch, theta, c.shard) for c in clients))


def run_training(arch: Architecture, theta0, clients, cfg: RoundConfig, test_set,
                 on_round=None, parallel: bool = False, kernels=None):
    """Run ``cfg.rounds`` rounds; returns ``(theta, history)``.

    ``on_round`` is called with each :class:`RoundRecord` as soon as it exists.
    """
    theta = np.array(theta0, dtype=np.float64)
    report = PrivacyReport()
    history = []
    executor = ThreadPoolExecutor(max_workers=len(clients)) if parallel else None
    try:
        for r in range(1, cfg.rounds + 1):
            outcome = run_round(arch, theta, clients, cfg, r, report, executor, kernels)
            theta, report = outcome.theta, outcome.privacy
            ev = _metrics.evaluate(arch, theta, test_set)
            m = _metrics.RoundMetrics(r, ev.accuracy, ev.macro_f1, ev.mean_loss, report.epsilon_total,
                                      train_loss=global_train_loss(arch, theta, clients))
            rec = RoundRecord(outcome, m)
            history.append(rec)
            if on_round is not None:
                on_round(rec)
    finally:
        if executor is not None:
            executor.shutdown()
    return theta, history


def estimate_objective(arch: Architecture, theta, clients, cfg: RoundConfig,
                       obj_cfg: ObjectiveEstimateConfig, rng: np.random.Generator) -> float:
    """Monte-Carlo estimate of the privacy-regularized evolutionary objective.

    Per sample and client (in that order): draw K mutations, then one noise
    vector; score ``min_k L_i(theta + eps_k) + lam/2 * ||noise||^2``. Client
    scores are weighted by shard size and samples are averaged.
    """
    theta = np.asarray(theta, dtype=np.float64)
    sigma = cfg.mutation.sigma
    sigma_p = cfg.privacy.effective_sigma
    n = sum(c.n_examples for c in clients)
    total = 0.0
    for _ in range(obj_cfg.mc_samples):
        sample = 0.0
        for c in clients:
            best = min(local_loss(arch, mutate(theta, sigma, rng), c.shard) for _ in range(cfg.mutation.k))
            noise = add_noise(np.zeros_like(theta), sigma_p, rng)
            sample += c.n_examples / n * (best + 0.5 * obj_cfg.lam * float(noise @ noise))
        total += sample
    return total / obj_cfg.mc_samples
