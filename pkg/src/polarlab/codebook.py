"""Polar code construction, encoding and Hamming-metric utilities.

Indices exposed by this module (``CodeSpec.info_set``, config blocks) are
1-based.  Bit vectors are ``uint8`` numpy arrays; a message integer ``m`` maps
to bits MSB-first, so integer order and lexicographic bit order agree.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from typing import Sequence, Union

import numpy as np

from .errors import ConfigurationError, ValidationError

MAX_BLOCKLENGTH = 1024
MAX_ENUM_K = 20

_KERNEL = np.array([[1, 0], [1, 1]], dtype=np.uint8)


def kron_generator(n: int, max_blocklength: int = MAX_BLOCKLENGTH) -> np.ndarray:
    """Return the ``2^n x 2^n`` Kronecker power of ``[[1,0],[1,1]]``."""
    if n < 0:
        raise ValidationError(f"n must be non-negative, got {n}")
    if 2**n > max_blocklength:
        raise ConfigurationError(
            f"blocklength 2^{n} exceeds the configured limit {max_blocklength}")
    g = np.ones((1, 1), dtype=np.uint8)
    for _ in range(n):
        g = np.kron(_KERNEL, g)
    return g


# ---------------------------------------------------------------------------
# information set selection

@dataclass(frozen=True)
class Explicit:
    indices: tuple[int, ...]

    def __init__(self, indices: Sequence[int]):
        object.__setattr__(self, "indices", tuple(int(i) for i in indices))


@dataclass(frozen=True)
class BhattacharyyaBEC:
    p0: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.p0 < 1.0:
            raise ValidationError(f"design erasure probability must be in (0,1), got {self.p0}")


InfoSetMethod = Union[Explicit, BhattacharyyaBEC]


def _check_power_of_two(N: int) -> int:
    if N < 1 or N & (N - 1):
        raise ValidationError(f"N must be a power of two, got {N}")
    return N.bit_length() - 1


def select_info_set(N: int, K: int, method: InfoSetMethod = BhattacharyyaBEC()) -> list[int]:
    """Choose the K information indices (1-based, sorted) of an (N, K) polar code."""
    _check_power_of_two(N)
    if not 1 <= K <= N:
        raise ValidationError(f"need 1 <= K <= N, got K={K}, N={N}")
    if isinstance(method, Explicit):
        A = list(method.indices)
        _validate_info_set(A, N, K)
        return A
    if isinstance(method, BhattacharyyaBEC):
        order = order_by_reliability(bhattacharyya_parameters(N, method.p0))
        return sorted(i + 1 for i in order[:K])
    raise ValidationError(f"unknown info-set method {method!r}")


def order_by_reliability(z) -> list[int]:
    """0-based channel indices, most reliable (smallest z) first; ties prefer the larger index."""
    return sorted(range(len(z)), key=lambda i: (z[i], -i))


def bhattacharyya_parameters(N: int, p0: float) -> np.ndarray:
    """Per-synthetic-channel Bhattacharyya parameters of a BEC(p0), natural order.

    The first half of the indices sees the degraded channel ``2z - z^2``,
    the second half the upgraded one ``z^2``.
    """
    n = _check_power_of_two(N)

    def rec(z: float, depth: int) -> list[float]:
        if depth == 0:
            return [z]
        return rec(2 * z - z * z, depth - 1) + rec(z * z, depth - 1)

    return np.array(rec(p0, n))


def _validate_info_set(A: Sequence[int], N: int, K: int) -> None:
    if len(A) != K:
        raise ValidationError(f"info set has {len(A)} entries, expected K={K}")
    if any(b <= a for a, b in zip(A, A[1:])):
        raise ValidationError("info set must be strictly increasing")
    if A and (A[0] < 1 or A[-1] > N):
        raise ValidationError(f"info set indices must lie in [1, {N}]")


def nr_reliability_order(N: int) -> list[int]:
    """5G NR reliability order for blocklength N <= 128, least reliable first (1-based)."""
    _check_power_of_two(N)
    data = json.loads(resources.files("polarlab.data").joinpath(
        "nr_reliability_128.json").read_text())
    if N > data["N_max"]:
        raise ConfigurationError(f"bundled NR sequence covers N <= {data['N_max']}")
    return [i for i in data["order"] if i <= N]


def nr_info_set(N: int, K: int) -> Explicit:
    """Explicit info-set method holding the K most reliable NR positions."""
    return Explicit(sorted(nr_reliability_order(N)[N - K:]))


# ---------------------------------------------------------------------------
# the code itself

@dataclass(frozen=True)
class CodeSpec:
    """An (N, K) polar code: blocklength ``2**n`` and 1-based information set."""

    n: int
    K: int
    info_set: tuple[int, ...]
    max_enum_k: int = field(default=MAX_ENUM_K, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "info_set", tuple(int(i) for i in self.info_set))
        if self.n < 0:
            raise ValidationError(f"n must be non-negative, got {self.n}")
        if 2**self.n > MAX_BLOCKLENGTH:
            raise ConfigurationError(f"N = 2^{self.n} exceeds limit {MAX_BLOCKLENGTH}")
        _validate_info_set(self.info_set, self.N, self.K)

    @classmethod
    def build(cls, n: int, K: int, method: InfoSetMethod = BhattacharyyaBEC()) -> "CodeSpec":
        return cls(n, K, tuple(select_info_set(2**n, K, method)))

    @property
    def N(self) -> int:
        return 2**self.n

    @property
    def rate(self) -> float:
        return self.K / self.N

    @cached_property
    def G(self) -> np.ndarray:
        return kron_generator(self.n)

    @cached_property
    def G_A(self) -> np.ndarray:
        """K x N generator sub-matrix, rows of ``G`` indexed by the info set."""
        return self.G[np.asarray(self.info_set, dtype=int) - 1]

    @cached_property
    def info_mask(self) -> np.ndarray:
        mask = np.zeros(self.N, dtype=bool)
        mask[np.asarray(self.info_set, dtype=int) - 1] = True
        return mask

    @cached_property
    def messages(self) -> np.ndarray:
        """All 2^K messages in lexicographic order, shape (2^K, K)."""
        self._check_enumerable()
        return int_to_bits(np.arange(2**self.K), self.K)

    @cached_property
    def codewords(self) -> np.ndarray:
        """Codewords matching ``messages`` row for row, shape (2^K, N)."""
        return encode(self.messages, self)

    def _check_enumerable(self) -> None:
        if self.K > self.max_enum_k:
            raise ConfigurationError(
                f"enumerating 2^{self.K} messages exceeds the limit K <= {self.max_enum_k}")

    def to_dict(self) -> dict:
        return {"n": self.n, "K": self.K, "info_set": list(self.info_set)}

    @classmethod
    def from_dict(cls, d: dict) -> "CodeSpec":
        return cls(int(d["n"]), int(d["K"]), tuple(d["info_set"]))

    def describe(self) -> str:
        return f"({self.N},{self.K}) A={{{','.join(map(str, self.info_set))}}}"


def code_from_config(block: dict) -> CodeSpec:
    """Build a code from a run-config block such as
    ``{"n": 4, "K": 8, "info_set": {"method": "bhattacharyya", "p0": 0.5}}``."""
    n, K = int(block["n"]), int(block["K"])
    spec = block.get("info_set", {"method": "bhattacharyya"})
    kind = spec.get("method", "bhattacharyya")
    if kind == "bhattacharyya":
        method: InfoSetMethod = BhattacharyyaBEC(float(spec.get("p0", 0.5)))
    elif kind == "explicit":
        method = Explicit(spec["indices"])
    elif kind == "nr":
        method = nr_info_set(2**n, K)
    else:
        raise ValidationError(f"unknown info_set method {kind!r}")
    return CodeSpec.build(n, K, method)


# ---------------------------------------------------------------------------
# bit helpers, encoding, Hamming metric

def int_to_bits(values, width: int) -> np.ndarray:
    values = np.asarray(values, dtype=np.int64)
    shifts = np.arange(width - 1, -1, -1, dtype=np.int64)
    return ((values[..., None] >> shifts) & 1).astype(np.uint8)


def bits_to_int(bits) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64)
    width = bits.shape[-1]
    return bits @ (1 << np.arange(width - 1, -1, -1, dtype=np.int64))


def _as_bits(a, name: str) -> np.ndarray:
    arr = np.asarray(a)
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValidationError(f"{name} must be binary")
    return arr.astype(np.uint8)


def encode(u_A, code: CodeSpec) -> np.ndarray:
    """x = u_A G_A over GF(2).  Accepts one message or a batch along axis 0."""
    u = _as_bits(u_A, "message")
    if u.shape[-1] != code.K:
        raise ValidationError(f"message length {u.shape[-1]} != K={code.K}")
    return ((u.astype(np.int64) @ code.G_A.astype(np.int64)) & 1).astype(np.uint8)


def hamming_distance(a, b) -> int:
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValidationError(f"length mismatch: {a.shape} vs {b.shape}")
    return int(np.count_nonzero(a != b))


def min_distance(code: CodeSpec) -> int:
    """Minimum Hamming distance, computed as the minimum nonzero codeword weight."""
    if code.K == 0:
        raise ValidationError("a code with no messages has no minimum distance")
    weights = code.codewords[1:].sum(axis=1, dtype=np.int64)
    return int(weights.min())


def decoding_radius(code: CodeSpec) -> int:
    return (min_distance(code) - 1) // 2


def bounded_distance_decode(y_hard, code: CodeSpec, radius: int | None = None):
    """Return the message whose codeword lies within ``radius`` of ``y_hard``.

    ``radius`` defaults to ``floor((d_min - 1) / 2)``.  Returns ``None`` when no
    codeword is close enough.
    """
    y = _as_bits(y_hard, "word")
    if y.shape != (code.N,):
        raise ValidationError(f"word length {y.shape} != N={code.N}")
    msgs, ok = bounded_distance_decode_batch(y[None, :], code, radius)
    return msgs[0] if ok[0] else None


def bounded_distance_decode_batch(y_hard, code: CodeSpec, radius: int | None = None):
    """Batched bounded-distance decoding.

    Returns ``(messages, ok)``; rows with ``ok == False`` fell outside every
    ball and carry the all-zero message as a placeholder.
    """
    if radius is None:
        radius = decoding_radius(code)
    y = np.asarray(y_hard, dtype=np.int16)
    cw = code.codewords.astype(np.int16)
    # Hamming distance via correlation of +-1 forms: d = (N - <s_y, s_c>) / 2
    sy = 1 - 2 * y
    sc = 1 - 2 * cw
    dist = (code.N - sy @ sc.T) // 2
    best = np.argmin(dist, axis=1)
    ok = dist[np.arange(len(best)), best] <= radius
    msgs = code.messages[best].copy()
    msgs[~ok] = 0
    return msgs, ok
