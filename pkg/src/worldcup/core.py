"""Shared domain types and numeric helpers."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

ACTIVATIONS = ("tanh", "sigmoid", "relu")
GVALUE_MODES = ("distortionary", "non_distortionary")
DIST_ATOL = 1e-9


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class WatermarkConfig:
    """Embedding and decoding hyperparameters.

    ``fixed_lambda`` overrides the entropy-aware subtraction weight
    (``0.0`` disables the subtraction entirely).  ``complementary=False``
    swaps the complementary family for an independently keyed one.
    """

    key: int = 0x5EED_CAFE_F00D_BEEF
    window_c: int = 2
    layers_m: int = 30
    leaves_N: int = 2
    groups_k: int = 1
    alpha: float = 1.2
    activation: str = "tanh"
    message_bits_b: int = 16
    gvalue_mode: str = "distortionary"
    score_floor_eps: float = 1e-12
    complementary: bool = True
    fixed_lambda: float | None = None

    def __post_init__(self):
        if not 0 <= self.key < 2**64:
            raise ConfigError(f"key must be a 64-bit unsigned integer, got {self.key}")
        if self.window_c < 1:
            raise ConfigError("window_c must be >= 1")
        if self.layers_m < 1:
            raise ConfigError("layers_m must be >= 1")
        if self.leaves_N < 2:
            raise ConfigError("leaves_N must be >= 2")
        if self.groups_k < 1:
            raise ConfigError("groups_k must be >= 1")
        if self.alpha < 0:
            raise ConfigError("alpha must be non-negative")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.gvalue_mode not in GVALUE_MODES:
            raise ConfigError(f"unknown gvalue_mode {self.gvalue_mode!r}")
        if self.message_bits_b < 1 or self.message_bits_b % self.groups_k:
            raise ConfigError(
                f"message_bits_b={self.message_bits_b} must be a positive multiple "
                f"of groups_k={self.groups_k}"
            )
        if self.score_floor_eps <= 0:
            raise ConfigError("score_floor_eps must be positive")
        if self.fixed_lambda is not None and self.fixed_lambda < 0:
            raise ConfigError("fixed_lambda must be non-negative")

    @property
    def symbol_count(self) -> int:
        return self.message_bits_b // self.groups_k

    def replace(self, **changes) -> "WatermarkConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "WatermarkConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown watermark config fields: {sorted(extra)}")
        return cls(**data)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class TokenSequence:
    tokens: tuple[int, ...]
    prompt_len: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))
        if not 0 <= self.prompt_len <= len(self.tokens):
            raise ValueError(
                f"prompt_len={self.prompt_len} outside [0, {len(self.tokens)}]"
            )
        if any(t < 0 for t in self.tokens):
            raise ValueError("token ids must be non-negative")

    def __len__(self):
        return len(self.tokens)

    @property
    def generated(self) -> tuple[int, ...]:
        return self.tokens[self.prompt_len:]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.tokens, dtype=np.int64)


@dataclass(frozen=True)
class SymbolMessage:
    symbols: tuple[int, ...]
    k: int = field(default=1)

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(int(s) for s in self.symbols))
        top = 1 << self.k
        if any(not 0 <= s < top for s in self.symbols):
            raise ValueError(f"symbols must lie in [0, {top})")

    def to_bits(self) -> tuple[int, ...]:
        return symbols_to_bits(self)


def as_bits(bits: Sequence[int] | str) -> tuple[int, ...]:
    """Coerce ``"0110"`` or an int sequence into a validated bit tuple."""
    if isinstance(bits, str):
        bits = [int(ch) for ch in bits.strip()]
    out = tuple(int(b) for b in bits)
    if not out:
        raise ValueError("bit message must be non-empty")
    if any(b not in (0, 1) for b in out):
        raise ValueError("bit message entries must be 0 or 1")
    return out


def bits_to_symbols(bits: Sequence[int] | str, k: int) -> SymbolMessage:
    bits = as_bits(bits)
    if k < 1:
        raise ValueError("k must be positive")
    if len(bits) % k:
        raise ValueError(f"message length {len(bits)} is not a multiple of k={k}")
    symbols = []
    for p in range(len(bits) // k):
        value = 0
        for b in bits[p * k:(p + 1) * k]:
            value = (value << 1) | b
        symbols.append(value)
    return SymbolMessage(tuple(symbols), k)


def symbols_to_bits(msg: SymbolMessage) -> tuple[int, ...]:
    out = []
    for s in msg.symbols:
        out.extend((s >> (msg.k - 1 - j)) & 1 for j in range(msg.k))
    return tuple(out)


def check_distribution(probs, vocab_size: int | None = None) -> np.ndarray:
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("distribution must be a non-empty vector")
    if vocab_size is not None and p.size != vocab_size:
        raise ValueError(f"distribution has length {p.size}, expected {vocab_size}")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ValueError("distribution entries must be finite and non-negative")
    if abs(p.sum() - 1.0) > DIST_ATOL:
        raise ValueError(f"distribution sums to {p.sum()!r}")
    return p


def normalize(raw_scores, floor: float = 1e-12) -> np.ndarray:
    """Clamp scores at ``floor`` and rescale to unit mass.

    Softmax of log-scores is plain proportional normalisation, so this is
    the whole log/softmax path with the clamp making the log defined.
    """
    raw = np.asarray(raw_scores, dtype=np.float64)
    if raw.ndim != 1 or raw.size == 0:
        raise ValueError("scores must be a non-empty vector")
    if not np.all(np.isfinite(raw)):
        raise ValueError("scores contain non-finite values")
    if floor <= 0:
        raise ValueError("floor must be positive")
    clamped = np.maximum(raw, floor)
    return clamped / clamped.sum()


def entropy(probs) -> float:
    """Shannon entropy in nats; zero-probability entries contribute nothing."""
    p = np.asarray(probs, dtype=np.float64)
    nz = p[p > 0]
    return float(max(0.0, -np.dot(nz, np.log(nz))))


def kl_divergence(q, p) -> float:
    """KL(q || p) in nats; requires supp(q) to lie inside supp(p)."""
    q = np.asarray(q, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    mask = q > 0
    if np.any(p[mask] <= 0):
        return float("inf")
    return float(max(0.0, np.dot(q[mask], np.log(q[mask]) - np.log(p[mask]))))


def activation(name: str, x: float) -> float:
    if name == "tanh":
        return float(np.tanh(x))
    if name == "sigmoid":
        return float(1.0 / (1.0 + np.exp(-x)))
    if name == "relu":
        return float(max(0.0, x))
    raise ValueError(f"unknown activation {name!r}")
