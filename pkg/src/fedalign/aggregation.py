"""Server-side gradient combination: alignment, averaging, and diagnostics.

The alignment aggregator treats each client's mini-batch gradient as that
client's summary statistic and fixes *gradient conflict* — a negative inner
product between two clients' gradients — by stepping the conflicting
gradient toward the other one:

    aligned = g_i - 2*lam*(g_i - g_j)  ==  (1 - 2*lam)*g_i + 2*lam*g_j

which is one gradient-descent step (step size ``lam``) on the pairwise
squared distance ``||g_i - g_j||^2``.  Repeating this over all client pairs
in a random order and then averaging yields the aggregated gradient.

Pair-loop semantics are configurable because the bare update rule leaves
two choices open:

* ``accumulate`` — whether successive corrections to client *i* compound on
  a working copy (default), or each conflicting *j* rewrites from the
  original ``g_i`` so only the last conflict survives;
* ``target`` — whether the conflict test and the correction use the other
  client's *original* gradient (default, mirroring how gradient-surgery
  methods project against originals) or its *current* working copy.

The report records which semantics ran, every tested pair, the visiting
order, and the sum of pairwise squared gradient distances (the
domain-variance diagnostic) before and after alignment.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyUpdateSet,
    InvalidLambda,
    InvalidSpec,
)
from .numcore import RealVec, Rng, axpby, dot, shuffle, squared_distance, weighted_sum

__all__ = [
    "GradientVector",
    "ClientUpdate",
    "AlignConfig",
    "AggregationReport",
    "detect_conflict",
    "align_pair",
    "aggregate_aligned",
    "aggregate_fedavg",
    "domain_variance",
]

# A gradient travels as a flat float64 vector in canonical model order;
# client attribution lives on the enclosing ClientUpdate / report fields.
GradientVector = np.ndarray

WEIGHTINGS = ("uniform", "sample_weighted")
TARGETS = ("original", "current")
ORDER_MODES = ("random", "fixed")


@dataclass(frozen=True)
class ClientUpdate:
    """One round's message from a client: gradient plus bookkeeping."""

    client_id: str
    gradient: GradientVector
    num_samples: int
    local_loss: float

    def __post_init__(self):
        g = np.asarray(self.gradient, dtype=np.float64)
        if g.ndim != 1:
            raise DimensionMismatch("gradient must be a flat vector")
        if not np.all(np.isfinite(g)):
            raise InvalidSpec(f"client {self.client_id!r} sent a non-finite gradient")
        if self.num_samples < 1:
            raise InvalidSpec("num_samples must be >= 1")
        object.__setattr__(self, "gradient", g)


@dataclass(frozen=True)
class AlignConfig:
    """Knobs of the alignment aggregator.

    ``lam`` must lie in (0, 0.5]: at 0.5 the correction lands exactly on the
    other gradient, and beyond it the (1 - 2*lam) factor flips the sign of
    the client's own direction.
    """

    lam: float = 0.1
    order_seed: int = 0
    weighting: str = "uniform"
    accumulate: bool = True
    target: str = "original"
    order_mode: str = "random"

    def __post_init__(self):
        _check_lambda(self.lam)
        if self.weighting not in WEIGHTINGS:
            raise InvalidSpec(f"weighting must be one of {WEIGHTINGS}")
        if self.target not in TARGETS:
            raise InvalidSpec(f"target must be one of {TARGETS}")
        if self.order_mode not in ORDER_MODES:
            raise InvalidSpec(f"order_mode must be one of {ORDER_MODES}")


@dataclass(frozen=True)
class AggregationReport:
    """Everything one aggregation did, serializable for run logs."""

    strategy: str
    aggregated: GradientVector
    aligned: tuple[GradientVector, ...]
    client_ids: tuple[str, ...]
    weights: tuple[float, ...]
    tested_pairs: tuple[tuple[str, str, float], ...]
    conflict_pairs: tuple[tuple[str, str, float], ...]
    variance_before: float
    variance_after: float
    order_used: dict
    semantics: dict = field(default_factory=dict)

    @property
    def num_conflicts(self) -> int:
        return len(self.conflict_pairs)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "aggregated": self.aggregated.tolist(),
            "aligned": {cid: g.tolist() for cid, g in zip(self.client_ids, self.aligned)},
            "client_ids": list(self.client_ids),
            "weights": list(self.weights),
            "tested_pairs": [list(p) for p in self.tested_pairs],
            "conflict_pairs": [list(p) for p in self.conflict_pairs],
            "variance_before": self.variance_before,
            "variance_after": self.variance_after,
            "order_used": self.order_used,
            "semantics": dict(self.semantics),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _check_lambda(lam: float) -> None:
    if not (0.0 < lam <= 0.5):
        raise InvalidLambda(f"lambda must be in (0, 0.5], got {lam}")


def detect_conflict(g_i: RealVec, g_j: RealVec) -> tuple[bool, float]:
    """(conflict?, inner product).  Strictly negative counts; zero does not."""
    value = dot(g_i, g_j)
    return value < 0.0, value


def align_pair(g_i: RealVec, g_j: RealVec, lam: float) -> RealVec:
    """One alignment step of ``g_i`` toward ``g_j``: (1-2*lam)*g_i + 2*lam*g_j.

    ``g_j`` is never modified.
    """
    _check_lambda(lam)
    return axpby(1.0 - 2.0 * lam, g_i, 2.0 * lam, g_j)


def domain_variance(grads: Sequence[RealVec]) -> float:
    """Sum of squared distances over unordered gradient pairs (each once)."""
    if len(grads) == 0:
        raise EmptyUpdateSet("domain_variance needs at least one gradient")
    total = 0.0
    for i in range(len(grads)):
        for j in range(i + 1, len(grads)):
            total += squared_distance(grads[i], grads[j])
    return total


def _check_updates(updates: Sequence[ClientUpdate]) -> None:
    if len(updates) == 0:
        raise EmptyUpdateSet("no client updates to aggregate")
    length = updates[0].gradient.shape[0]
    for u in updates:
        if u.gradient.shape[0] != length:
            raise DimensionMismatch(
                f"client {u.client_id!r} gradient length {u.gradient.shape[0]} != {length}"
            )


def _weights(updates: Sequence[ClientUpdate], weighting: str) -> tuple[float, ...]:
    k = len(updates)
    if weighting == "uniform":
        return tuple(1.0 / k for _ in updates)
    if weighting == "sample_weighted":
        total = sum(u.num_samples for u in updates)
        return tuple(u.num_samples / total for u in updates)
    raise InvalidSpec(f"weighting must be one of {WEIGHTINGS}")


def aggregate_aligned(
    updates: Sequence[ClientUpdate],
    cfg: AlignConfig = AlignConfig(),
    rng: Rng | None = None,
) -> AggregationReport:
    """Align conflicting client gradients pairwise, then average.

    Clients are visited in a random order drawn from ``rng`` (or from
    ``cfg.order_seed`` when no rng is passed); for each client *i* the other
    clients are visited in a random order, and every tested pair's inner
    product is recorded.  ``cfg.order_mode == "fixed"`` keeps plain list
    order instead, for literal replay of the pair loop.
    """
    _check_updates(updates)
    if rng is None:
        rng = Rng(cfg.order_seed)
    k = len(updates)
    originals = [u.gradient for u in updates]
    working = [g.copy() for g in originals]
    ids = tuple(u.client_id for u in updates)

    if cfg.order_mode == "random":
        outer = [int(v) for v in shuffle(rng, k)]
    else:
        outer = list(range(k))
    inner_orders: dict[int, list[int]] = {}
    tested = []
    conflicts = []
    for i in outer:
        others = [j for j in range(k) if j != i]
        if cfg.order_mode == "random":
            others = [others[int(p)] for p in shuffle(rng, len(others))]
        inner_orders[i] = others
        for j in others:
            target_vec = originals[j] if cfg.target == "original" else working[j]
            probe = working[i] if cfg.accumulate else originals[i]
            is_conflict, value = detect_conflict(probe, target_vec)
            tested.append((ids[i], ids[j], value))
            if is_conflict:
                conflicts.append((ids[i], ids[j], value))
                base = working[i] if cfg.accumulate else originals[i]
                working[i] = align_pair(base, target_vec, cfg.lam)

    weights = _weights(updates, cfg.weighting)
    aggregated = weighted_sum(working, weights)
    return AggregationReport(
        strategy="aligned",
        aggregated=aggregated,
        aligned=tuple(working),
        client_ids=ids,
        weights=weights,
        tested_pairs=tuple(tested),
        conflict_pairs=tuple(conflicts),
        variance_before=domain_variance(originals),
        variance_after=domain_variance(working),
        order_used={"outer": outer, "inner": {str(i): js for i, js in inner_orders.items()}},
        semantics={
            "lambda": cfg.lam,
            "accumulate": cfg.accumulate,
            "target": cfg.target,
            "order_mode": cfg.order_mode,
            "weighting": cfg.weighting,
        },
    )


def aggregate_fedavg(
    updates: Sequence[ClientUpdate],
    weighting: str = "sample_weighted",
) -> AggregationReport:
    """Weighted averaging of client gradients (weights n_k / n by default).

    Pairwise inner products are still recorded as a conflict diagnostic but
    do not influence the result.
    """
    _check_updates(updates)
    ids = tuple(u.client_id for u in updates)
    originals = [u.gradient for u in updates]
    tested = []
    conflicts = []
    for i in range(len(updates)):
        for j in range(i + 1, len(updates)):
            is_conflict, value = detect_conflict(originals[i], originals[j])
            tested.append((ids[i], ids[j], value))
            if is_conflict:
                conflicts.append((ids[i], ids[j], value))

    weights = _weights(updates, weighting)
    aggregated = weighted_sum(originals, weights)
    variance = domain_variance(originals)
    return AggregationReport(
        strategy="fedavg",
        aggregated=aggregated,
        aligned=tuple(originals),
        client_ids=ids,
        weights=weights,
        tested_pairs=tuple(tested),
        conflict_pairs=tuple(conflicts),
        variance_before=variance,
        variance_after=variance,
        order_used={"outer": list(range(len(updates))), "inner": {}},
        semantics={"weighting": weighting},
    )
