"""Context-window seeding and message-position assignment.

Wire-format constants (changing any of them invalidates previously
watermarked text):

* mixer: the splitmix64 finaliser ``mix64`` below (golden-ratio increment
  ``0x9E3779B97F4A7C15``, multipliers ``0xBF58476D1CE4E5B9`` and
  ``0x94D049BB133111EB``, shifts 30/27/31);
* ``SENTINEL``: token id used to left-pad windows shorter than ``c``;
* ``SEED_SALT`` and ``POSITION_SALT``: domain separators.

seed = fold over the window, oldest token first, of
``h <- mix64(h ^ mix64(token))`` starting from ``h = mix64(key ^ SEED_SALT)``.
position = ``mix64(seed ^ mix64(key ^ POSITION_SALT)) mod B``.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MUL1 = 0xBF58476D1CE4E5B9
MUL2 = 0x94D049BB133111EB

SENTINEL = MASK64
SEED_SALT = 0x243F6A8885A308D3
POSITION_SALT = 0x13198A2E03707344

_U = np.uint64


def mix64(z: int) -> int:
    z = (z + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * MUL1) & MASK64
    z = ((z ^ (z >> 27)) * MUL2) & MASK64
    return z ^ (z >> 31)


def mix64_array(z) -> np.ndarray:
    """Vectorised ``mix64``; uint64 array arithmetic wraps modulo 2**64."""
    z = np.asarray(z, dtype=np.uint64) + _U(GOLDEN)
    z = (z ^ (z >> _U(30))) * _U(MUL1)
    z = (z ^ (z >> _U(27))) * _U(MUL2)
    return z ^ (z >> _U(31))


def context_window(tokens: Sequence[int], t: int, c: int) -> tuple[int, ...]:
    """The ``c`` tokens left of index ``t``, sentinel-padded at the start."""
    start = t - c
    pad = max(0, -start)
    return (SENTINEL,) * pad + tuple(int(x) for x in tokens[max(0, start):t])


def derive_seed(window: Iterable[int], key: int) -> int:
    h = mix64((key ^ SEED_SALT) & MASK64)
    for tok in window:
        h = mix64(h ^ mix64(int(tok) & MASK64))
    return h


def derive_seeds(tokens: Sequence[int], key: int, c: int, start: int = 0) -> np.ndarray:
    """Seeds for every index ``t >= start`` of ``tokens`` (vectorised)."""
    toks = np.asarray(tokens, dtype=np.int64)
    T = toks.size
    n = T - start
    if n <= 0:
        return np.zeros(0, dtype=np.uint64)
    padded = np.concatenate([np.full(c, SENTINEL, dtype=np.uint64), toks.astype(np.uint64)])
    mixed = mix64_array(padded)
    h = np.full(n, mix64((key ^ SEED_SALT) & MASK64), dtype=np.uint64)
    # token t has window padded[t : t + c] (padded is offset by c)
    for i in range(c):
        h = mix64_array(h ^ mixed[start + i:start + i + n])
    return h


def assign_position(seed: int, key: int, symbol_count: int) -> int:
    if symbol_count < 1:
        raise ValueError("symbol_count must be >= 1")
    return mix64(int(seed) ^ mix64((key ^ POSITION_SALT) & MASK64)) % symbol_count


def assign_positions(seeds, key: int, symbol_count: int) -> np.ndarray:
    if symbol_count < 1:
        raise ValueError("symbol_count must be >= 1")
    salt = _U(mix64((key ^ POSITION_SALT) & MASK64))
    h = mix64_array(np.asarray(seeds, dtype=np.uint64) ^ salt)
    return (h % _U(symbol_count)).astype(np.int64)


def seed_history_mask(seen: set, current: int) -> bool:
    """True when ``current`` was already used, i.e. the step must not be watermarked."""
    return current in seen


STREAM_SALT = 0xA4093822299F31D1


def fold_seed(*parts: int) -> int:
    """Combine integers into one 64-bit seed (order-sensitive)."""
    h = mix64(STREAM_SALT)
    for part in parts:
        h = mix64(h ^ mix64(int(part) & MASK64))
    return h


def stream_uniform(rng_seed: int, t: int) -> float:
    """Uniform in [0, 1) for step ``t`` of the stream keyed by ``rng_seed``."""
    return (fold_seed(rng_seed, t) >> 11) * (1.0 / (1 << 53))
