"""Homomorphic-operator facade for the aggregation arithmetic.

The point of this module is structural, not cryptographic: it demonstrates
that the whole alignment aggregation is expressible with nothing but
encrypted-space add / subtract / multiply on opaque handles, so a server
running it never needs plaintext arithmetic between encryption and the
final decryption.  The reference :class:`TransparentCipher` provides no
secrecy; it carries fixed-point integers in the handles and implements the
operator semantics exactly, which is what the equivalence tests need.

Every handle drags along an append-only trace of the operator tags that
produced it.  The auditor accepts only {ENC, ADD, SUB, MUL}; any other tag
(say, from a shortcut that decrypts, computes in plaintext and re-encrypts)
raises :class:`TraceViolation`.  Traces are taken at face value — with a
transparent cipher there is nothing to hide — so the audit checks protocol
shape, not adversarial behavior.

One genuine gap is made explicit rather than papered over: deciding whether
two gradients conflict needs the *sign* of their inner product, and a pure
add/sub/mul operator algebra cannot produce a plaintext bit.  The conflict
decisions therefore enter :func:`aligned_aggregate_encrypted` as an
external input (in the simulator they come from the plaintext aggregation
acting as a trusted comparator).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Collection, Mapping, Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidSpec, NonFiniteResult, OverflowAtScale, TraceViolation
from .numcore import RealVec

__all__ = [
    "ENC",
    "ADD",
    "SUB",
    "MUL",
    "ALLOWED_TAGS",
    "CipherHandle",
    "FixedPointCodec",
    "Cipher",
    "TransparentCipher",
    "TraceAudit",
    "transparent_cipher",
    "enc_vec",
    "dec_vec",
    "audit_trace",
    "aligned_aggregate_encrypted",
    "weighted_sum_encrypted",
]

ENC = "ENC"
ADD = "ADD"
SUB = "SUB"
MUL = "MUL"
ALLOWED_TAGS = frozenset({ENC, ADD, SUB, MUL})

# 2^24 keeps the full aggregation pipeline (encode, one rescale per MUL,
# weighted sum) well under 1e-6 absolute error per coordinate for desk-scale
# gradient magnitudes; 2^20 measures at ~2.4e-6 worst case, which is too
# coarse.  Headroom: |value| < 2^31 / 2^24 = 128.
DEFAULT_SCALE = 2**24

# Encoded magnitudes must stay below 2^31 so that any single product of two
# in-range values fits a signed 64-bit plaintext slot ((2^31)^2 = 2^62).
_INT_LIMIT = 2**31


@dataclass(frozen=True)
class CipherHandle:
    """Opaque encrypted value: integer payload plus its operator trace."""

    payload: int
    trace: tuple[str, ...]


def _round_half_away(x: float) -> int:
    return math.floor(x + 0.5) if x >= 0 else -math.floor(-x + 0.5)


def _div_round(n: int, d: int) -> int:
    """Integer division rounded to nearest, ties away from zero (d > 0)."""
    q, r = divmod(abs(n), d)
    if 2 * r >= d:
        q += 1
    return q if n >= 0 else -q


@dataclass(frozen=True)
class FixedPointCodec:
    """Maps reals to scaled integers: encode(x) = round(x * scale).

    ``scale`` must be a positive power of two.  Round-trip error is at most
    half a unit (1 unit = 1/scale); each MUL rescales its raw product by
    1/scale exactly once, rounding to nearest.
    """

    scale: int = DEFAULT_SCALE

    def __post_init__(self):
        if self.scale < 1 or (self.scale & (self.scale - 1)) != 0:
            raise InvalidSpec(f"scale must be a positive power of two, got {self.scale}")

    def encode(self, x: float) -> int:
        if not math.isfinite(x):
            raise NonFiniteResult("cannot encode a non-finite value")
        raw = _round_half_away(x * self.scale)
        return self.check_range(raw)

    def decode(self, i: int) -> float:
        return i / self.scale

    def rescale(self, raw_product: int) -> int:
        return self.check_range(_div_round(raw_product, self.scale))

    def check_range(self, i: int) -> int:
        if abs(i) >= _INT_LIMIT:
            raise OverflowAtScale(
                f"encoded magnitude {abs(i)} exceeds the codec range "
                f"(|value| must stay below {_INT_LIMIT / self.scale:g} at scale {self.scale})"
            )
        return i


class Cipher:
    """Interface of an encrypted-arithmetic backend.

    Implementations must keep add/sub/mul closed over handles — plaintext
    never appears between :meth:`enc` and :meth:`dec`.
    """

    def enc(self, x: float) -> CipherHandle:
        raise NotImplementedError

    def dec(self, h: CipherHandle) -> float:
        raise NotImplementedError

    def add(self, a: CipherHandle, b: CipherHandle) -> CipherHandle:
        raise NotImplementedError

    def sub(self, a: CipherHandle, b: CipherHandle) -> CipherHandle:
        raise NotImplementedError

    def mul(self, a: CipherHandle, b: CipherHandle) -> CipherHandle:
        raise NotImplementedError


class TransparentCipher(Cipher):
    """Reference scheme: fixed-point payloads, exact operator semantics,
    zero secrecy."""

    def __init__(self, codec: FixedPointCodec | None = None):
        self.codec = codec or FixedPointCodec()

    def enc(self, x: float) -> CipherHandle:
        return CipherHandle(payload=self.codec.encode(x), trace=(ENC,))

    def dec(self, h: CipherHandle) -> float:
        return self.codec.decode(h.payload)

    def add(self, a: CipherHandle, b: CipherHandle) -> CipherHandle:
        payload = self.codec.check_range(a.payload + b.payload)
        return CipherHandle(payload=payload, trace=a.trace + b.trace + (ADD,))

    def sub(self, a: CipherHandle, b: CipherHandle) -> CipherHandle:
        payload = self.codec.check_range(a.payload - b.payload)
        return CipherHandle(payload=payload, trace=a.trace + b.trace + (SUB,))

    def mul(self, a: CipherHandle, b: CipherHandle) -> CipherHandle:
        payload = self.codec.rescale(a.payload * b.payload)
        return CipherHandle(payload=payload, trace=a.trace + b.trace + (MUL,))


def transparent_cipher(scale: int = DEFAULT_SCALE) -> TransparentCipher:
    """The reference cipher at the given fixed-point scale."""
    return TransparentCipher(FixedPointCodec(scale=scale))


def enc_vec(cipher: Cipher, v: RealVec) -> list[CipherHandle]:
    """Encrypt a vector elementwise; every trace starts with exactly [ENC]."""
    v = np.asarray(v, dtype=np.float64)
    return [cipher.enc(float(x)) for x in v]


def dec_vec(cipher: Cipher, handles: Sequence[CipherHandle]) -> RealVec:
    return np.array([cipher.dec(h) for h in handles], dtype=np.float64)


@dataclass(frozen=True)
class TraceAudit:
    """Summary of an operator-trace inspection (raised past, not returned,
    on violation)."""

    coordinates: int
    total_tags: int
    tag_counts: dict

    def to_dict(self) -> dict:
        return {
            "coordinates": self.coordinates,
            "total_tags": self.total_tags,
            "tag_counts": dict(self.tag_counts),
            "allowed": sorted(ALLOWED_TAGS),
        }


def audit_trace(handles: Sequence[CipherHandle]) -> TraceAudit:
    """Verify every handle was produced purely by {ENC, ADD, SUB, MUL}.

    Raises :class:`TraceViolation` on an empty trace, a trace not rooted in
    an encryption, or any foreign operator tag.
    """
    counts: dict[str, int] = {}
    total = 0
    for idx, h in enumerate(handles):
        if len(h.trace) == 0:
            raise TraceViolation(f"coordinate {idx}: handle has an empty trace")
        if h.trace[0] != ENC:
            raise TraceViolation(f"coordinate {idx}: trace does not start with ENC")
        for tag in h.trace:
            if tag not in ALLOWED_TAGS:
                raise TraceViolation(f"coordinate {idx}: forbidden operator tag {tag!r}")
            counts[tag] = counts.get(tag, 0) + 1
            total += 1
    return TraceAudit(coordinates=len(handles), total_tags=total, tag_counts=counts)


def _check_enc_updates(enc_updates: Sequence[Sequence[CipherHandle]]) -> int:
    if len(enc_updates) == 0:
        raise InvalidSpec("no encrypted updates")
    dim = len(enc_updates[0])
    for k, vec in enumerate(enc_updates):
        if len(vec) != dim:
            raise DimensionMismatch(f"encrypted update {k} has length {len(vec)} != {dim}")
    return dim


def weighted_sum_encrypted(
    enc_updates: Sequence[Sequence[CipherHandle]],
    weights: Sequence[float],
    cipher: Cipher,
) -> tuple[list[CipherHandle], TraceAudit]:
    """Encrypted ``sum_k E(w_k) (x) E(g_k)`` — the averaging step of any
    strategy, in operator algebra."""
    dim = _check_enc_updates(enc_updates)
    if len(weights) != len(enc_updates):
        raise DimensionMismatch("one weight per encrypted update required")
    enc_w = [cipher.enc(float(w)) for w in weights]
    out: list[CipherHandle] = []
    for c in range(dim):
        acc = cipher.mul(enc_w[0], enc_updates[0][c])
        for k in range(1, len(enc_updates)):
            acc = cipher.add(acc, cipher.mul(enc_w[k], enc_updates[k][c]))
        out.append(acc)
    return out, audit_trace(out)


def aligned_aggregate_encrypted(
    enc_updates: Sequence[Sequence[CipherHandle]],
    lam: float,
    order: Mapping,
    cipher: Cipher,
    conflicts: Collection[tuple[int, int]],
    weights: Sequence[float] | None = None,
    accumulate: bool = True,
    target: str = "original",
) -> tuple[list[CipherHandle], TraceAudit]:
    """Replay the alignment aggregation entirely in encrypted space.

    ``order`` is the visiting-order record of a plaintext aggregation
    (``{"outer": [...], "inner": {"i": [...]}}`` with integer client
    indices) and ``conflicts`` the externally supplied per-pair decisions
    as ordered ``(i, j)`` index pairs — the sign test itself is not
    expressible in the operator algebra (see module docstring).

    The correction applied for each conflicting pair is

        E(h_i) (-) E(2) (*) E(lam) (*) (E(h_i) (-) E(g_j))

    with ``E(2) (*) E(lam)`` computed once.  Returns the encrypted
    aggregated gradient and its trace audit.
    """
    if not (0.0 < lam <= 0.5):
        raise InvalidSpec(f"lambda must be in (0, 0.5], got {lam}")
    dim = _check_enc_updates(enc_updates)
    k = len(enc_updates)
    conflict_set = {(int(i), int(j)) for i, j in conflicts}

    two_lam = cipher.mul(cipher.enc(2.0), cipher.enc(lam))
    working = [list(vec) for vec in enc_updates]
    outer = [int(i) for i in order["outer"]]
    inner = {int(i): [int(j) for j in js] for i, js in order["inner"].items()}

    for i in outer:
        for j in inner.get(i, []):
            if (i, j) not in conflict_set:
                continue
            base = working[i] if accumulate else list(enc_updates[i])
            tgt = enc_updates[j] if target == "original" else working[j]
            new_i = []
            for c in range(dim):
                diff = cipher.sub(base[c], tgt[c])
                step = cipher.mul(two_lam, diff)
                new_i.append(cipher.sub(base[c], step))
            working[i] = new_i

    if weights is None:
        weights = [1.0 / k] * k
    return weighted_sum_encrypted(working, weights, cipher)
