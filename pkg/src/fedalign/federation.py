"""Simulated federated round protocol.

A central server holds the global parameters; one client per source domain
draws minibatches locally, returns a gradient-shaped update, and the server
aggregates with the configured strategy and applies a single SGD step.  The
held-out target domain is evaluated every round, which is cheap at this
scale and lets tests reason about whole trajectories instead of endpoints.

All randomness is derived from the run seed through fixed key paths —
``(seed, 0)`` for initialization, ``(seed, 1, client_index, round)`` for
each client's batch stream and ``(seed, 2, round)`` for the aggregation
visiting order — so a run replays bit-for-bit regardless of client
execution order, and every strategy sees the same batch stream under the
same seed.

With ``encrypt=True`` each round's aggregation arithmetic is re-executed in
the homomorphic operator algebra (encrypt, align/average on handles,
decrypt) and the decrypted result, audited for operator-trace purity, is
what the server applies.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .aggregation import (
    ORDER_MODES,
    TARGETS,
    WEIGHTINGS,
    AggregationReport,
    AlignConfig,
    ClientUpdate,
    aggregate_aligned,
    aggregate_fedavg,
)
from .domains import DomainDataset, DomainSuite, leave_one_out, minibatch
from .errors import ConfigError, EmptyDataset
from .hekit import (
    DEFAULT_SCALE,
    aligned_aggregate_encrypted,
    dec_vec,
    enc_vec,
    transparent_cipher,
    weighted_sum_encrypted,
)
from .models import LossKind, Metrics, ModelSpec, ParamVector, evaluate, init_params, loss_and_grad, sgd_step
from .numcore import Rng, dot

__all__ = [
    "STRATEGIES",
    "LrDecay",
    "FedConfig",
    "default_config",
    "effective_lr",
    "ClientState",
    "ServerState",
    "RoundRecord",
    "ExperimentResult",
    "ROUND_CSV_COLUMNS",
    "client_local_step",
    "run_round",
    "run_experiment",
    "run_deepall",
]

STRATEGIES = ("fedavg", "fedprox", "aligned", "deepall")


@dataclass(frozen=True)
class LrDecay:
    """Step decay: lr is divided by ``factor`` every ``every_n_rounds``."""

    every_n_rounds: int
    factor: float

    def __post_init__(self):
        if int(self.every_n_rounds) != self.every_n_rounds or self.every_n_rounds < 1:
            raise ConfigError("lr_decay.every_n_rounds", "must be a positive integer")
        if not (math.isfinite(self.factor) and self.factor > 0):
            raise ConfigError("lr_decay.factor", "must be a positive real")


@dataclass(frozen=True)
class FedConfig:
    """One experiment's training schedule and aggregation strategy.

    ``lam`` applies only to the aligned strategy and ``mu`` only to fedprox;
    setting either for a strategy that does not use it is a configuration
    error.  Left unset, they take the shipped defaults (0.1 and 0.01) when
    their strategy is selected.
    """

    strategy: str = "aligned"
    rounds: int = 600
    local_steps: int = 1
    batch_size: int = 2
    lr: float = 0.2
    lr_decay: LrDecay | None = LrDecay(every_n_rounds=400, factor=10.0)
    lam: float | None = None
    mu: float | None = None
    weighting: str | None = None
    seed: int = 0
    encrypt: bool = False
    scale: int = DEFAULT_SCALE
    accumulate: bool = True
    align_target: str = "original"
    order_mode: str = "random"

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError("strategy", f"must be one of {STRATEGIES}, got {self.strategy!r}")
        if int(self.rounds) != self.rounds or self.rounds < 0:
            raise ConfigError("rounds", "must be a nonnegative integer")
        if int(self.local_steps) != self.local_steps or self.local_steps < 1:
            raise ConfigError("local_steps", "must be a positive integer")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ConfigError("batch_size", "must be a positive integer")
        if not (math.isfinite(self.lr) and self.lr > 0):
            raise ConfigError("lr", "must be a positive real")
        if self.strategy == "aligned":
            if self.lam is None:
                object.__setattr__(self, "lam", 0.1)
            if not (0.0 < self.lam <= 0.5):
                raise ConfigError("lambda", f"must be in (0, 0.5], got {self.lam}")
        elif self.lam is not None:
            raise ConfigError("lambda", f"only valid for the aligned strategy, not {self.strategy!r}")
        if self.strategy == "fedprox":
            if self.mu is None:
                object.__setattr__(self, "mu", 0.01)
            if not (math.isfinite(self.mu) and self.mu >= 0):
                raise ConfigError("mu", "must be a nonnegative real")
        elif self.mu is not None:
            raise ConfigError("mu", f"only valid for the fedprox strategy, not {self.strategy!r}")
        if self.weighting is not None and self.weighting not in WEIGHTINGS:
            raise ConfigError("weighting", f"must be one of {WEIGHTINGS}, got {self.weighting!r}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigError("seed", "must be a nonnegative integer")
        if self.scale < 1 or (self.scale & (self.scale - 1)) != 0:
            raise ConfigError("scale", "must be a positive power of two")
        if self.align_target not in TARGETS:
            raise ConfigError("align_target", f"must be one of {TARGETS}")
        if self.order_mode not in ORDER_MODES:
            raise ConfigError("order_mode", f"must be one of {ORDER_MODES}")

    @property
    def resolved_weighting(self) -> str:
        """Uniform 1/K for the aligned strategy, sample-proportional for
        the rest, unless overridden."""
        if self.weighting is not None:
            return self.weighting
        return "uniform" if self.strategy == "aligned" else "sample_weighted"

    def to_dict(self) -> dict:
        d = {
            "strategy": self.strategy,
            "rounds": self.rounds,
            "local_steps": self.local_steps,
            "batch_size": self.batch_size,
            "lr": self.lr,
            "lr_decay": None
            if self.lr_decay is None
            else {"every_n_rounds": self.lr_decay.every_n_rounds, "factor": self.lr_decay.factor},
            "lambda": self.lam,
            "mu": self.mu,
            "weighting": self.weighting,
            "seed": self.seed,
            "encrypt": self.encrypt,
            "scale": self.scale,
            "accumulate": self.accumulate,
            "align_target": self.align_target,
            "order_mode": self.order_mode,
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FedConfig":
        if not isinstance(d, dict):
            raise ConfigError("federation", "must be a JSON object")
        known = {
            "strategy",
            "rounds",
            "local_steps",
            "batch_size",
            "lr",
            "lr_decay",
            "lambda",
            "mu",
            "weighting",
            "seed",
            "encrypt",
            "scale",
            "accumulate",
            "align_target",
            "order_mode",
        }
        for key in d:
            if key not in known:
                raise ConfigError(key, "unknown federation field")
        kwargs = {k: v for k, v in d.items() if k not in ("lambda", "lr_decay")}
        if "lambda" in d:
            kwargs["lam"] = d["lambda"]
        decay = d.get("lr_decay")
        if decay is not None:
            if not isinstance(decay, dict) or set(decay) != {"every_n_rounds", "factor"}:
                raise ConfigError("lr_decay", "must be {\"every_n_rounds\": int, \"factor\": real} or null")
            kwargs["lr_decay"] = LrDecay(every_n_rounds=decay["every_n_rounds"], factor=decay["factor"])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError("federation", str(exc)) from exc


def default_config(strategy: str = "aligned", seed: int = 0) -> FedConfig:
    """The shipped defaults: the rotated-domain benchmark schedule.

    Small noisy batches (size 2) keep client gradients disagreeing so the
    alignment step has conflicts to resolve; the late lr drop (/10 at round
    400) settles the endpoint so final accuracies are comparable across
    strategies rather than snapshots of SGD noise.
    """
    return FedConfig(strategy=strategy, seed=seed)


def effective_lr(cfg: FedConfig, round_index: int) -> float:
    """Learning rate at a given round under the step-decay schedule."""
    if cfg.lr_decay is None:
        return cfg.lr
    return cfg.lr / cfg.lr_decay.factor ** (round_index // cfg.lr_decay.every_n_rounds)


@dataclass
class ClientState:
    """One data-holding participant: a domain's dataset plus its RNG."""

    client_id: str
    dataset: DomainDataset
    rng: Rng


@dataclass
class ServerState:
    """Coordinator state carried across rounds."""

    params: ParamVector
    round_index: int = 0


@dataclass(frozen=True)
class RoundRecord:
    round: int
    lr: float
    per_client: tuple[dict, ...]
    aggregation: AggregationReport
    target_metrics: Metrics
    source_metrics: dict
    trace_audit: dict | None = None

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "lr": self.lr,
            "per_client": [dict(c) for c in self.per_client],
            "aggregation": self.aggregation.to_dict(),
            "target_metrics": {"accuracy": self.target_metrics.accuracy, "loss": self.target_metrics.loss},
            "source_metrics": {
                k: {"accuracy": m.accuracy, "loss": m.loss} for k, m in self.source_metrics.items()
            },
            "trace_audit": self.trace_audit,
        }


ROUND_CSV_COLUMNS = (
    "round",
    "lr",
    "target_accuracy",
    "target_loss",
    "mean_source_accuracy",
    "mean_source_loss",
    "mean_local_loss",
    "mean_grad_norm",
    "num_conflicts",
    "variance_before",
    "variance_after",
)


@dataclass(frozen=True)
class ExperimentResult:
    """Full trajectory of one leave-one-domain-out run."""

    config: FedConfig
    model: ModelSpec
    target: str
    source_ids: tuple[str, ...]
    records: tuple[RoundRecord, ...]
    initial_params: ParamVector = field(repr=False)
    final_params: ParamVector = field(repr=False)
    final_target: Metrics

    @property
    def final_target_accuracy(self) -> float:
        return self.final_target.accuracy

    def conflict_round_fraction(self) -> float:
        if not self.records:
            return 0.0
        hits = sum(1 for r in self.records if r.aggregation.num_conflicts > 0)
        return hits / len(self.records)

    def variance_means_on_conflict_rounds(self) -> tuple[float, float]:
        """Mean domain variance (before, after) over rounds with >= 1 conflict;
        NaNs if no round conflicted."""
        before = [r.aggregation.variance_before for r in self.records if r.aggregation.num_conflicts > 0]
        after = [r.aggregation.variance_after for r in self.records if r.aggregation.num_conflicts > 0]
        if not before:
            return (float("nan"), float("nan"))
        return (float(np.mean(before)), float(np.mean(after)))

    def params_digest(self) -> str:
        text = ",".join(f"{v:.17g}" for v in self.final_params.values)
        return hashlib.sha256(text.encode("ascii")).hexdigest()

    def summary(self) -> dict:
        vb, va = self.variance_means_on_conflict_rounds()
        if vb != vb:  # no conflicting rounds: JSON-friendly null, not NaN
            vb = va = None
        best = max((r.target_metrics.accuracy for r in self.records), default=self.final_target.accuracy)
        return {
            "strategy": self.config.strategy,
            "target": self.target,
            "sources": list(self.source_ids),
            "seed": self.config.seed,
            "rounds": len(self.records),
            "encrypt": self.config.encrypt,
            "final_target_accuracy": self.final_target.accuracy,
            "final_target_loss": self.final_target.loss,
            "best_target_accuracy": best,
            "conflict_round_fraction": self.conflict_round_fraction(),
            "mean_variance_before_on_conflict_rounds": vb,
            "mean_variance_after_on_conflict_rounds": va,
            "final_params_sha256": self.params_digest(),
        }

    def to_dict(self, include_rounds: bool = True) -> dict:
        d = {
            "config": self.config.to_dict(),
            "model": {
                "input_dim": self.model.input_dim,
                "hidden_dim": self.model.hidden_dim,
                "num_classes": self.model.num_classes,
                "activation": self.model.activation,
            },
            "summary": self.summary(),
        }
        if include_rounds:
            d["rounds"] = [r.to_dict() for r in self.records]
        return d

    def csv_rows(self) -> list[dict]:
        """Per-round scalar metrics, one dict per round, keys ROUND_CSV_COLUMNS."""
        rows = []
        for r in self.records:
            src_acc = [m.accuracy for m in r.source_metrics.values()]
            src_loss = [m.loss for m in r.source_metrics.values()]
            rows.append(
                {
                    "round": r.round,
                    "lr": r.lr,
                    "target_accuracy": r.target_metrics.accuracy,
                    "target_loss": r.target_metrics.loss,
                    "mean_source_accuracy": float(np.mean(src_acc)),
                    "mean_source_loss": float(np.mean(src_loss)),
                    "mean_local_loss": float(np.mean([c["local_loss"] for c in r.per_client])),
                    "mean_grad_norm": float(np.mean([c["grad_norm"] for c in r.per_client])),
                    "num_conflicts": r.aggregation.num_conflicts,
                    "variance_before": r.aggregation.variance_before,
                    "variance_after": r.aggregation.variance_after,
                }
            )
        return rows


def client_local_step(
    state: ClientState,
    global_params: ParamVector,
    cfg: FedConfig,
    lr: float | None = None,
    loss: LossKind = LossKind(),
) -> ClientUpdate:
    """One client's contribution for the round.

    With ``local_steps == 1`` this is exactly the minibatch gradient at the
    global parameters.  With more local steps the client walks ``local_steps``
    SGD steps (fedprox adds its proximal pull mu*(w - w_global) to each
    step's gradient) and reports the total displacement divided by lr, so
    that one server-side application of lr lands on the local endpoint.
    """
    if state.dataset.num_rows == 0:
        raise EmptyDataset(f"client {state.client_id} has no data")
    if lr is None:
        lr = cfg.lr
    if cfg.local_steps == 1:
        x, y = minibatch(state.dataset, cfg.batch_size, state.rng)
        value, grad = loss_and_grad(global_params, x, y, loss)
        return ClientUpdate(
            client_id=state.client_id,
            gradient=grad,
            num_samples=state.dataset.num_rows,
            local_loss=value,
        )
    w = global_params
    losses = []
    for _ in range(cfg.local_steps):
        x, y = minibatch(state.dataset, cfg.batch_size, state.rng)
        value, grad = loss_and_grad(w, x, y, loss)
        if cfg.strategy == "fedprox":
            grad = grad + cfg.mu * (w.values - global_params.values)
        losses.append(value)
        w = sgd_step(w, grad, lr)
    effective = (global_params.values - w.values) / lr
    return ClientUpdate(
        client_id=state.client_id,
        gradient=effective,
        num_samples=state.dataset.num_rows,
        local_loss=float(np.mean(losses)),
    )


def _aggregate(updates: list[ClientUpdate], cfg: FedConfig, round_index: int) -> AggregationReport:
    if cfg.strategy == "aligned":
        acfg = AlignConfig(
            lam=cfg.lam,
            order_seed=cfg.seed,
            weighting=cfg.resolved_weighting,
            accumulate=cfg.accumulate,
            target=cfg.align_target,
            order_mode=cfg.order_mode,
        )
        return aggregate_aligned(updates, acfg, rng=Rng(cfg.seed, 2, round_index))
    return aggregate_fedavg(updates, weighting=cfg.resolved_weighting)


def _encrypted_replay(
    updates: list[ClientUpdate], report: AggregationReport, cfg: FedConfig
) -> tuple[np.ndarray, dict]:
    """Re-run the round's aggregation arithmetic on cipher handles and
    return (decrypted aggregate, audit dict)."""
    cipher = transparent_cipher(cfg.scale)
    enc = [enc_vec(cipher, u.gradient) for u in updates]
    if report.strategy == "aligned":
        index_of = {u.client_id: i for i, u in enumerate(updates)}
        conflicts = {(index_of[a], index_of[b]) for a, b, _ in report.conflict_pairs}
        handles, audit = aligned_aggregate_encrypted(
            enc,
            cfg.lam,
            report.order_used,
            cipher,
            conflicts,
            weights=list(report.weights),
            accumulate=cfg.accumulate,
            target=cfg.align_target,
        )
    else:
        handles, audit = weighted_sum_encrypted(enc, list(report.weights), cipher)
    return dec_vec(cipher, handles), audit.to_dict()


def run_round(
    server: ServerState,
    clients: list[ClientState],
    cfg: FedConfig,
    target_dataset: DomainDataset,
    loss: LossKind = LossKind(),
) -> RoundRecord:
    """Advance the federation by one round, mutating ``server`` in place."""
    t = server.round_index
    lr = effective_lr(cfg, t)
    updates = []
    for k, state in enumerate(clients):
        state.rng = Rng(cfg.seed, 1, k, t)
        updates.append(client_local_step(state, server.params, cfg, lr=lr, loss=loss))

    report = _aggregate(updates, cfg, t)
    audit_dict = None
    if cfg.encrypt:
        decrypted, audit_dict = _encrypted_replay(updates, report, cfg)
        report = replace(report, aggregated=decrypted)

    server.params = sgd_step(server.params, report.aggregated, lr)
    server.round_index = t + 1

    per_client = tuple(
        {
            "client_id": u.client_id,
            "local_loss": u.local_loss,
            "grad_norm": float(math.sqrt(dot(u.gradient, u.gradient))),
        }
        for u in updates
    )
    target_metrics = evaluate(server.params, target_dataset, loss)
    source_metrics = {s.dataset.domain_id: evaluate(server.params, s.dataset, loss) for s in clients}
    return RoundRecord(
        round=t,
        lr=lr,
        per_client=per_client,
        aggregation=report,
        target_metrics=target_metrics,
        source_metrics=source_metrics,
        trace_audit=audit_dict,
    )


def _run_protocol(
    sources: Sequence[DomainDataset],
    target_dataset: DomainDataset,
    target_id: str,
    model: ModelSpec,
    cfg: FedConfig,
    loss: LossKind,
    reported_config: FedConfig,
) -> ExperimentResult:
    initial = init_params(model, Rng(cfg.seed, 0))
    server = ServerState(params=initial)
    clients = [
        ClientState(client_id=ds.domain_id, dataset=ds, rng=Rng(cfg.seed, 1, k, 0))
        for k, ds in enumerate(sources)
    ]
    records = []
    for _ in range(cfg.rounds):
        records.append(run_round(server, clients, cfg, target_dataset, loss))
    final_metrics = evaluate(server.params, target_dataset, loss)
    return ExperimentResult(
        config=reported_config,
        model=model,
        target=target_id,
        source_ids=tuple(ds.domain_id for ds in sources),
        records=tuple(records),
        initial_params=initial,
        final_params=server.params,
        final_target=final_metrics,
    )


def run_experiment(
    suite: DomainSuite,
    target: str,
    model: ModelSpec,
    cfg: FedConfig,
    loss: LossKind = LossKind(),
) -> ExperimentResult:
    """Leave-one-domain-out: train on every domain except ``target``, then
    judge the final model on the held-out one."""
    if cfg.strategy == "deepall":
        return run_deepall(suite, target, model, cfg, loss)
    sources, target_dataset = leave_one_out(suite, target)
    return _run_protocol(sources, target_dataset, target, model, cfg, loss, reported_config=cfg)


def run_deepall(
    suite: DomainSuite,
    target: str,
    model: ModelSpec,
    cfg: FedConfig,
    loss: LossKind = LossKind(),
) -> ExperimentResult:
    """Centralized baseline: all source domains pooled into one dataset,
    trained as a single-client federation with the same schedule."""
    sources, target_dataset = leave_one_out(suite, target)
    pooled = DomainDataset(
        domain_id="pooled",
        features=np.vstack([s.features for s in sources]),
        labels=np.concatenate([s.labels for s in sources]),
    )
    inner = replace(cfg, strategy="fedavg", lam=None, mu=None)
    return _run_protocol([pooled], target_dataset, target, model, inner, loss, reported_config=cfg)
