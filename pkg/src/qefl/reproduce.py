"""End-to-end runs behind the CLI: federated training and the mutated-variant table."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import RunConfig, build_run
from .federation import fine_tune_variant, run_training
from .metrics import evaluate
from .nn import init_params, local_loss
from .rng import Purpose, stream


@dataclass
class TrainingRun:
    arch: object
    clients: list
    train: object
    test: object
    theta: np.ndarray
    history: list


def train(cfg: RunConfig, on_round=None, parallel: bool = False) -> TrainingRun:
    cfg.validate()
    arch, clients, train_set, test_set = build_run(cfg)
    theta0 = init_params(arch, stream(cfg.master_seed, Purpose.INIT))
    theta, history = run_training(arch, theta0, clients, cfg.round_config(), test_set,
                                  on_round=on_round, parallel=parallel)
    return TrainingRun(arch, clients, train_set, test_set, theta, history)


@dataclass
class VariantRow:
    mutation_id: str
    accuracy: float
    local_loss: float


def mutation_table(run: TrainingRun, cfg: RunConfig) -> list[VariantRow]:
    """Mutate the trained global model K times on one client, fine-tune, score on the test set.

    Accuracies are measured on the selected-variant candidates before any
    privacy noise is applied.
    """
    rc = cfg.round_config()
    client = run.clients[cfg.table1_client]
    r = rc.rounds + 1  # fresh streams, disjoint from every training round
    rows = []
    for k in range(1, rc.mutation.k + 1):
        theta_k = fine_tune_variant(run.arch, run.theta, client, rc, r, k)
        ev = evaluate(run.arch, theta_k, run.test)
        rows.append(VariantRow(f"M{k}", ev.accuracy, local_loss(run.arch, theta_k, client.shard)))
    return rows


def table_csv(rows: list[VariantRow]) -> str:
    return "mutation_id,accuracy\n" + "".join(f"{r.mutation_id},{r.accuracy!r}\n" for r in rows)
