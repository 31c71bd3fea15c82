"""Dense vector/matrix arithmetic and seeded pseudorandom generation.

Vectors and matrices are plain ``numpy`` arrays of ``float64``; 1-D arrays
play the role of parameter/gradient vectors and 2-D arrays hold row-major
feature matrices.  The helpers here pin down two things the rest of the
package relies on:

* **Accumulation order.**  Reductions (``dot``, ``squared_distance``) go
  through ``numpy``'s pairwise-tree summation, so results are reproducible
  run to run and symmetric in their arguments (the elementwise product is
  commutative bit-for-bit, and the reduction over identical values is
  identical).
* **The random generator.**  :class:`Rng` wraps the Philox 4x32-10 counter
  based bit generator seeded through ``numpy.random.SeedSequence``.  The
  algorithm is fully specified, so a seed produces the same stream on every
  platform, and child generators derive from an entropy tuple rather than
  from consumed state.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, NonFiniteResult

__all__ = [
    "RealVec",
    "RealMat",
    "Rng",
    "as_vec",
    "as_mat",
    "ensure_finite",
    "dot",
    "squared_distance",
    "axpby",
    "shuffle",
    "weighted_sum",
]

# Type aliases: a RealVec is a 1-D float64 array, a RealMat a 2-D one.
RealVec = np.ndarray
RealMat = np.ndarray


def as_vec(values: Iterable[float]) -> RealVec:
    """Coerce ``values`` to a 1-D float64 array, rejecting non-finite entries."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionMismatch(f"expected a 1-D vector, got ndim={v.ndim}")
    ensure_finite(v, "vector")
    return v


def as_mat(values: Iterable[Iterable[float]]) -> RealMat:
    """Coerce ``values`` to a 2-D row-major float64 matrix."""
    m = np.asarray(values, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got ndim={m.ndim}")
    ensure_finite(m, "matrix")
    return m


def ensure_finite(a: np.ndarray, what: str = "result") -> np.ndarray:
    """Raise :class:`NonFiniteResult` if ``a`` contains NaN or infinity."""
    if not np.all(np.isfinite(a)):
        raise NonFiniteResult(f"{what} contains NaN or Inf")
    return a


def _check_same_length(a: RealVec, b: RealVec) -> None:
    if a.shape != b.shape:
        raise DimensionMismatch(f"vector lengths differ: {a.shape} vs {b.shape}")


def dot(a: RealVec, b: RealVec) -> float:
    """Inner product of two equal-length vectors.

    Accumulated as ``np.sum(a * b)`` (numpy's pairwise tree), which makes the
    result exactly symmetric in ``a`` and ``b``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_same_length(a, b)
    return float(np.sum(a * b))


def squared_distance(a: RealVec, b: RealVec) -> float:
    """Squared Euclidean distance ``||a - b||^2``; exactly 0 when a == b."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_same_length(a, b)
    d = a - b
    return float(np.sum(d * d))


def axpby(alpha: float, a: RealVec, beta: float, b: RealVec) -> RealVec:
    """Elementwise ``alpha * a + beta * b``.

    Raises :class:`NonFiniteResult` if any output entry is NaN/Inf, so
    numerical blow-ups surface at the operation that caused them.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_same_length(a, b)
    out = alpha * a + beta * b
    return ensure_finite(out, "axpby result")


class Rng:
    """Reproducible random source based on the Philox 4x32-10 generator.

    The generator is identified by an entropy ``key`` (a tuple of integers).
    ``Rng(seed)`` uses ``(seed,)``; :meth:`child` extends the tuple, so
    derived streams depend only on the key, never on how much of the parent
    stream was consumed.  An ``Rng`` is single-owner state: do not share one
    instance across threads, derive children instead.
    """

    def __init__(self, seed: int, *subkeys: int):
        self.key = (int(seed),) + tuple(int(k) for k in subkeys)
        self._gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(self.key)))

    @property
    def seed(self) -> int:
        return self.key[0]

    def child(self, *subkeys: int) -> "Rng":
        """Derive an independent generator keyed by ``key + subkeys``."""
        return Rng(*self.key, *subkeys)

    def integers(self, low: int, high: int | None = None) -> int:
        """One integer from ``[low, high)`` (or ``[0, low)`` when high is None)."""
        return int(self._gen.integers(low, high))

    def normal(self, loc: float = 0.0, scale: float = 1.0, size=None) -> np.ndarray | float:
        return self._gen.normal(loc, scale, size)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None) -> np.ndarray | float:
        return self._gen.uniform(low, high, size)

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Rng(key={self.key})"


def shuffle(rng: Rng, n: int) -> np.ndarray:
    """Uniform random permutation of ``0..n-1`` via Fisher-Yates.

    The swap loop is written out here (rather than delegated to numpy's
    ``permutation``) so the exact algorithm consuming the stream is pinned
    in this repository.  Deterministic per rng state.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    perm = np.arange(n, dtype=np.int64)
    for i in range(n - 1, 0, -1):
        j = rng.integers(0, i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def weighted_sum(vectors: Sequence[RealVec], weights: Sequence[float]) -> RealVec:
    """``sum_k weights[k] * vectors[k]`` accumulated left-to-right in index order.

    Shared by every aggregation strategy so that strategies which should
    coincide (e.g. alignment with no conflicts vs plain averaging) coincide
    bit-for-bit.
    """
    if len(vectors) == 0:
        raise DimensionMismatch("weighted_sum needs at least one vector")
    if len(vectors) != len(weights):
        raise DimensionMismatch("vectors and weights differ in length")
    first = np.asarray(vectors[0], dtype=np.float64)
    acc = weights[0] * first
    for v, w in zip(vectors[1:], weights[1:]):
        v = np.asarray(v, dtype=np.float64)
        _check_same_length(first, v)
        acc = acc + w * v
    return ensure_finite(acc, "weighted sum")
