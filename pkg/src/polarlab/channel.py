"""BPSK over AWGN: modulation, Eb/N0 conversion, hard decisions and LLRs.

Sign convention: bit 0 <-> +1, bit 1 <-> -1; a value of exactly zero decides
bit 0.  Positive LLRs favour bit 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

LLR_MAX = 40.0

SIGMA_CONVENTION = "sigma^2 = 1/(2*R*10^(EbN0_dB/10)), unit-energy BPSK"


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based Philox generator keyed by ``(seed, *stream)``.

    Distinct stream tuples give statistically independent, reproducible
    sequences, so workers never need to share a generator.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, stream)])))


@dataclass(frozen=True)
class FixedDb:
    value: float


@dataclass(frozen=True)
class UniformDb:
    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValidationError(f"UniformDb needs lo <= hi, got {self.lo} > {self.hi}")


@dataclass(frozen=True)
class NoiseSpec:
    """Training-time noise policy: fixed or per-codeword uniform Eb/N0 in dB."""

    mode: FixedDb | UniformDb
    rate: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.rate <= 1.0:
            raise ValidationError(f"rate must be in (0, 1], got {self.rate}")

    def draw_ebn0(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if isinstance(self.mode, FixedDb):
            return np.full(size, float(self.mode.value))
        return rng.uniform(self.mode.lo, self.mode.hi, size=size)

    def to_dict(self) -> dict:
        if isinstance(self.mode, FixedDb):
            return {"mode": "fixed_db", "value": self.mode.value, "seed": self.seed}
        return {"mode": "uniform_db", "lo": self.mode.lo, "hi": self.mode.hi, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict, rate: float) -> "NoiseSpec":
        if d["mode"] == "fixed_db":
            mode = FixedDb(float(d["value"]))
        elif d["mode"] == "uniform_db":
            mode = UniformDb(float(d["lo"]), float(d["hi"]))
        else:
            raise ValidationError(f"unknown noise mode {d['mode']!r}")
        return cls(mode, rate, int(d.get("seed", 0)))


def bpsk_modulate(x) -> np.ndarray:
    x = np.asarray(x)
    if x.size and not np.isin(x, (0, 1)).all():
        raise ValidationError("BPSK input must be binary")
    return 1.0 - 2.0 * x.astype(np.float64)


def ebn0_to_sigma(ebn0_db, rate: float):
    if rate <= 0:
        raise ValidationError(f"rate must be positive, got {rate}")
    return np.sqrt(1.0 / (2.0 * rate * 10.0 ** (np.asarray(ebn0_db, dtype=float) / 10.0)))


def awgn(s, sigma, rng: np.random.Generator) -> np.ndarray:
    """Add N(0, sigma^2) noise.  ``sigma`` may be a scalar or broadcast per row
    (shape ``(B, 1)``) for per-codeword noise levels."""
    s = np.asarray(s, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma < 0):
        raise ValidationError("sigma must be non-negative")
    if not np.any(sigma):
        return s.copy()
    return s + sigma * rng.standard_normal(s.shape)


def hard_decision(y) -> np.ndarray:
    return (np.asarray(y) < 0).astype(np.uint8)


def llr_from_awgn(y, sigma: float) -> np.ndarray:
    """Channel LLRs ``2y/sigma^2``, clipped to ``+-LLR_MAX``.

    With ``sigma == 0`` every nonzero sample saturates at ``+-LLR_MAX``.
    """
    y = np.asarray(y, dtype=np.float64)
    if sigma == 0:
        return LLR_MAX * np.sign(y)
    if sigma < 0:
        raise ValidationError("sigma must be non-negative")
    return np.clip(2.0 * y / sigma**2, -LLR_MAX, LLR_MAX)
