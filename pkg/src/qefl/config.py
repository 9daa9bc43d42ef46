"""Run configuration: flat ``key = value`` text files, validation, and building a run.

Blank lines and ``#`` comments are ignored; unknown keys are errors. The
snapshot written next to every run's artifacts uses the same format and
reproduces the run when fed back in.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .evolution import MutationConfig
from .federation import AGGREGATION_MODES, ClientState, RoundConfig
from .nn import Architecture
from .privacy import PrivacyConfig

SHARD_STRATEGIES = ("iid", "dirichlet", "per-client-seed")


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass
class RunConfig:
    dataset: str = "synthetic"
    synthetic_n: int = 1000
    test_fraction: float = 0.3
    idx_train_images: str = ""
    idx_train_labels: str = ""
    idx_test_images: str = ""
    idx_test_labels: str = ""
    idx_limit: int = 0
    shard_strategy: str = "iid"
    dirichlet_alpha: float = 0.5
    hidden_dims: tuple = (32, 32)
    n_clients: int = 5
    local_epochs: int = 5
    learning_rate: float = 0.05
    sigma: float = 0.1
    k: int = 10
    sigma_p: float = 0.01
    clip_norm: float | None = None
    privacy_enabled: bool = True
    privacy_delta: float = 1e-5
    rounds: int = 20
    dropout_prob: float = 0.0
    aggregation: str = "uniform"
    batch_size: int = 32
    master_seed: int = 42
    table1_client: int = 0

    def validate(self) -> "RunConfig":
        if self.dataset not in ("synthetic", "idx"):
            raise ConfigError("dataset", "must be 'synthetic' or 'idx'")
        if self.dataset == "idx" and not (self.idx_train_images and self.idx_train_labels):
            raise ConfigError("idx_train_images", "idx dataset needs image and label paths")
        if self.synthetic_n < 2:
            raise ConfigError("synthetic_n", "must be >= 2")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction", "must lie strictly between 0 and 1")
        if self.idx_limit < 0:
            raise ConfigError("idx_limit", "must be >= 0")
        if self.shard_strategy not in SHARD_STRATEGIES:
            raise ConfigError("shard_strategy", f"must be one of {SHARD_STRATEGIES}")
        if self.shard_strategy == "per-client-seed" and self.dataset != "synthetic":
            raise ConfigError("shard_strategy", "per-client-seed needs the synthetic dataset")
        if not self.dirichlet_alpha > 0:
            raise ConfigError("dirichlet_alpha", "must be > 0")
        if not self.hidden_dims or min(self.hidden_dims) < 1:
            raise ConfigError("hidden_dims", "need at least one layer, every width >= 1")
        if self.n_clients < 1:
            raise ConfigError("n_clients", "must be >= 1")
        if self.dataset == "synthetic":
            n_train = self.synthetic_n - int(round(self.test_fraction * self.synthetic_n))
            if self.n_clients > n_train:
                raise ConfigError("n_clients", f"{self.n_clients} clients but only {n_train} training examples")
        if not 0 <= self.table1_client < self.n_clients:
            raise ConfigError("table1_client", "must name an existing client")
        simple = [
            ("local_epochs", self.local_epochs >= 1, "must be >= 1"),
            ("learning_rate", self.learning_rate > 0, "must be > 0"),
            ("sigma", self.sigma >= 0 and self.sigma != float("inf"), "must be finite and >= 0"),
            ("k", self.k >= 1, "must be >= 1"),
            ("sigma_p", self.sigma_p >= 0 and self.sigma_p != float("inf"), "must be finite and >= 0"),
            ("clip_norm", self.clip_norm is None or self.clip_norm > 0, "must be > 0 or none"),
            ("privacy_delta", 0 < self.privacy_delta < 1, "must lie in (0, 1)"),
            ("rounds", self.rounds >= 1, "must be >= 1"),
            ("dropout_prob", 0 <= self.dropout_prob <= 1, "must lie in [0, 1]"),
            ("aggregation", self.aggregation in AGGREGATION_MODES, f"must be one of {AGGREGATION_MODES}"),
            ("batch_size", self.batch_size >= 1, "must be >= 1"),
        ]
        for name, ok, msg in simple:
            if not ok:
                raise ConfigError(name, msg)
        return self

    def privacy_config(self) -> PrivacyConfig:
        return PrivacyConfig(self.sigma_p, self.clip_norm, self.privacy_enabled, self.privacy_delta)

    def round_config(self) -> RoundConfig:
        return RoundConfig(
            n_clients=self.n_clients,
            local_epochs=self.local_epochs,
            learning_rate=self.learning_rate,
            mutation=MutationConfig(self.sigma, self.k),
            privacy=self.privacy_config(),
            rounds=self.rounds,
            dropout_prob=self.dropout_prob,
            aggregation=self.aggregation,
            batch_size=self.batch_size,
            master_seed=self.master_seed,
        )

    def dumps(self) -> str:
        lines = []
        for f in fields(self):
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"


def _format(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(name: str, default, raw: str):
    raw = raw.strip()
    try:
        if name == "clip_norm":
            return None if raw.lower() in ("", "none") else float(raw)
        if isinstance(default, bool):
            if raw.lower() in ("true", "yes", "1", "on"):
                return True
            if raw.lower() in ("false", "no", "0", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(int(p) for p in raw.split(",") if p.strip())
        return raw
    except ValueError as exc:
        raise ConfigError(name, str(exc)) from None


def loads(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = dataclasses.replace(base) if base is not None else RunConfig()
    known = {f.name: getattr(RunConfig(), f.name) for f in fields(RunConfig)}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(key, "unknown configuration key")
        setattr(cfg, key, _parse_value(key, known[key], value))
    return cfg


def load(path) -> RunConfig:
    return loads(Path(path).read_text())


def build_run(cfg: RunConfig):
    """Materialise data, shards and architecture: ``(arch, clients, train, test)``."""
    from . import data
    from .rng import Purpose, stream

    seed = cfg.master_seed
    if cfg.dataset == "synthetic":
        if cfg.shard_strategy == "per-client-seed":
            n_test = int(round(cfg.test_fraction * cfg.synthetic_n))
            per_client = (cfg.synthetic_n - n_test) // cfg.n_clients
            if per_client < 1:
                raise ConfigError("n_clients", "too many clients for the synthetic size")
            train, plan = data.gen_client_datasets(cfg.n_clients, per_client, stream(seed, Purpose.DATA, 1))
            test = data.gen_synthetic(n_test, stream(seed, Purpose.DATA, 2))
        else:
            full = data.gen_synthetic(cfg.synthetic_n, stream(seed, Purpose.DATA))
            train, test = data.train_test_split(full, cfg.test_fraction, stream(seed, Purpose.SPLIT))
            plan = None
    else:
        train = data.load_idx(cfg.idx_train_images, cfg.idx_train_labels)
        if cfg.idx_limit:
            train = train.subset(range(min(cfg.idx_limit, len(train))))
        if cfg.idx_test_images:
            test = data.load_idx(cfg.idx_test_images, cfg.idx_test_labels)
        else:
            train, test = data.train_test_split(train, cfg.test_fraction, stream(seed, Purpose.SPLIT))
        plan = None
    if cfg.n_clients > len(train):
        raise ConfigError("n_clients", f"{cfg.n_clients} clients but only {len(train)} training examples")
    if plan is None:
        if cfg.shard_strategy == "dirichlet":
            plan = data.shard_dirichlet(train, cfg.n_clients, cfg.dirichlet_alpha, stream(seed, Purpose.SHARD))
        else:
            plan = data.shard_iid(train, cfg.n_clients, stream(seed, Purpose.SHARD))
    clients = [ClientState(i, shard) for i, shard in enumerate(plan.shards(train))]
    arch = Architecture(train.input_dim, tuple(cfg.hidden_dims), train.n_classes)
    return arch, clients, train, test
