"""Message embedding: seed, position and symbol select the watermarked distribution."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .core import (
    WatermarkConfig,
    TokenSequence,
    activation,
    as_bits,
    bits_to_symbols,
    check_distribution,
    entropy,
    kl_divergence,
    normalize,
)
from .gvalue import GValueFamilySet
from .keying import (
    assign_position,
    context_window,
    derive_seed,
    fold_seed,
    seed_history_mask,
    stream_uniform,
)
from .tournament import compose_families


class LanguageModel(Protocol):
    vocab_size: int

    def next_distribution(self, history: Sequence[int]) -> np.ndarray: ...


@dataclass(frozen=True)
class StepTrace:
    t: int
    seed: int
    position: int  # -1 on masked steps
    bits: tuple[int, ...]
    entropy: float
    lam: float
    token: int
    masked: bool
    kl: float  # KL(final || base) of the sampling distribution


def lambda_factor(dist, cfg: WatermarkConfig) -> float:
    """Subtraction weight: ``alpha * activation(entropy)`` unless fixed by the config."""
    if cfg.fixed_lambda is not None:
        return float(cfg.fixed_lambda)
    return cfg.alpha * activation(cfg.activation, entropy(dist))


def family_set(cfg: WatermarkConfig) -> GValueFamilySet:
    return GValueFamilySet(cfg.key, cfg.groups_k, cfg.layers_m, cfg.complementary)


def embed_step_k1(dist, seed: int, bit: int, cfg: WatermarkConfig,
                  families: GValueFamilySet | None = None) -> np.ndarray:
    """Single-group step: bit 0 runs the base family, bit 1 its counterpart."""
    if bit not in (0, 1):
        raise ValueError("bit must be 0 or 1")
    p = np.asarray(dist, dtype=np.float64)
    families = families or family_set(cfg)
    base, alt = families.family_words(np.arange(p.size), seed, 1)
    words = (alt if bit else base)[None]
    return compose_families(p, words, cfg.layers_m, cfg.leaves_N)[0]


def combine_k_scores(components, symbol_bits: Sequence[int], lam: float) -> np.ndarray:
    """Raw combined scores from the ``2k`` component distributions.

    ``components`` rows are ``q_1, q_bar_1, ..., q_k, q_bar_k``.  Each group
    adds the distribution its bit selects and subtracts ``lam`` times the
    other one.
    """
    comps = np.asarray(components, dtype=np.float64)
    k = len(symbol_bits)
    if comps.ndim != 2 or comps.shape[0] != 2 * k:
        raise ValueError(f"expected {2 * k} component rows, got shape {comps.shape}")
    raw = np.zeros(comps.shape[1])
    for j, b in enumerate(symbol_bits):
        chosen, other = (comps[2 * j + 1], comps[2 * j]) if b else (comps[2 * j], comps[2 * j + 1])
        raw += chosen - lam * other
    return raw


def normalize_on_support(raw, base, floor: float) -> np.ndarray:
    """``normalize`` restricted to tokens the base model can emit."""
    support = base > 0
    out = np.zeros_like(base)
    out[support] = normalize(raw[support], floor)
    return out


def watermark_distribution(base: np.ndarray, seed: int, symbol_bits: Sequence[int],
                           cfg: WatermarkConfig, families: GValueFamilySet,
                           lam: float | None = None) -> np.ndarray:
    """Final sampling distribution for one step given the embedded symbol bits."""
    if cfg.groups_k == 1:
        return embed_step_k1(base, seed, symbol_bits[0], cfg, families)
    words = families.all_family_words(base.size, seed)
    comps = compose_families(base, words, cfg.layers_m, cfg.leaves_N)
    if lam is None:
        lam = lambda_factor(base, cfg)
    raw = combine_k_scores(comps, symbol_bits, lam)
    return normalize_on_support(raw, base, cfg.score_floor_eps)


class NgramBlocker:
    """Incremental no-repeat-ngram bookkeeping for one sequence."""

    def __init__(self, n: int, history: Sequence[int] = ()):
        if n < 0:
            raise ValueError("n must be >= 0")
        self.n = n
        self.seen: dict[tuple, set] = {}
        self.history: list[int] = []
        for tok in history:
            self.push(tok)

    def push(self, token: int) -> None:
        self.history.append(int(token))
        n = self.n
        if n and len(self.history) >= n:
            gram = self.history[-n:]
            self.seen.setdefault(tuple(gram[:-1]), set()).add(gram[-1])

    def banned(self) -> set:
        if not self.n or len(self.history) < self.n - 1:
            return set()
        prefix = tuple(self.history[len(self.history) - self.n + 1:])
        return self.seen.get(prefix, set())

    def apply(self, dist: np.ndarray) -> np.ndarray:
        return _drop_tokens(dist, self.banned())


def _drop_tokens(dist, banned) -> np.ndarray:
    if not banned:
        return dist
    q = np.array(dist, dtype=np.float64)
    q[list(banned)] = 0.0
    total = q.sum()
    if total <= 0:
        return dist
    return q / total


def no_repeat_ngram_filter(history: Sequence[int], dist, n: int) -> np.ndarray:
    """Zero out tokens that would repeat an n-gram already in ``history``."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return np.asarray(dist, dtype=np.float64)
    hist = [int(t) for t in history]
    if len(hist) < n - 1:
        return np.asarray(dist, dtype=np.float64)
    prefix = hist[len(hist) - n + 1:] if n > 1 else []
    banned = {
        hist[i + n - 1]
        for i in range(len(hist) - n + 1)
        if hist[i:i + n - 1] == prefix
    }
    return _drop_tokens(np.asarray(dist, dtype=np.float64), banned)


def sample_index(dist: np.ndarray, u: float) -> int:
    cdf = np.cumsum(dist)
    idx = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return min(idx, dist.size - 1)


def sample_prompt(lm: LanguageModel, length: int, seed: int) -> TokenSequence:
    toks: list[int] = []
    for t in range(length):
        toks.append(sample_index(lm.next_distribution(toks), stream_uniform(seed, t)))
    return TokenSequence(tuple(toks), prompt_len=length)


def _base_step(lm, toks, blocker, t, end_token, min_new_tokens):
    base = blocker.apply(lm.next_distribution(toks))
    if end_token is not None and t < min_new_tokens:
        base = _drop_tokens(base, {end_token})
    return base


def generate_plain(lm: LanguageModel, prompt: TokenSequence, length: int, rng_seed: int,
                   no_repeat_ngram: int = 0, end_token: int | None = None,
                   min_new_tokens: int = 0) -> TokenSequence:
    """Unwatermarked continuation drawn with the same per-step uniforms."""
    toks = list(prompt.tokens)
    blocker = NgramBlocker(no_repeat_ngram, toks)
    for t in range(length):
        base = _base_step(lm, toks, blocker, t, end_token, min_new_tokens)
        tok = sample_index(base, stream_uniform(rng_seed, t))
        toks.append(tok)
        blocker.push(tok)
        if end_token is not None and tok == end_token:
            break
    return TokenSequence(tuple(toks), prompt.prompt_len)


def embed_sequence(lm: LanguageModel, prompt: TokenSequence, msg, cfg: WatermarkConfig,
                   rng_seed: int, max_new_tokens: int, no_repeat_ngram: int = 0,
                   end_token: int | None = None, validate: bool = False,
                   min_new_tokens: int = 0) -> tuple[TokenSequence, list[StepTrace]]:
    """Generate up to ``max_new_tokens`` watermarked tokens carrying ``msg``.

    Generation stops early after ``end_token``, which is suppressed for the
    first ``min_new_tokens`` steps.
    """
    bits = as_bits(msg)
    if len(bits) != cfg.message_bits_b:
        raise ValueError(f"message has {len(bits)} bits, config expects {cfg.message_bits_b}")
    k = cfg.groups_k
    symbols = bits_to_symbols(bits, k).symbols
    B = len(symbols)
    families = family_set(cfg)
    masking = cfg.gvalue_mode == "non_distortionary"

    toks = list(prompt.tokens)
    blocker = NgramBlocker(no_repeat_ngram, toks)
    seen: set[int] = set()
    traces = []
    for t in range(max_new_tokens):
        base = _base_step(lm, toks, blocker, t, end_token, min_new_tokens)
        if validate:
            check_distribution(base)
        seed = derive_seed(context_window(toks, len(toks), cfg.window_c), cfg.key)
        masked = masking and seed_history_mask(seen, seed)
        seen.add(seed)
        h = entropy(base)
        lam = lambda_factor(base, cfg)
        if masked:
            final, pos, sym_bits = base, -1, ()
        else:
            pos = assign_position(seed, cfg.key, B)
            s = symbols[pos]
            sym_bits = tuple((s >> (k - 1 - j)) & 1 for j in range(k))
            final = watermark_distribution(base, seed, sym_bits, cfg, families, lam)
        if validate:
            check_distribution(final)
        tok = sample_index(final, stream_uniform(rng_seed, t))
        traces.append(StepTrace(t, seed, pos, sym_bits, h, lam, tok, masked,
                                kl_divergence(final, base)))
        toks.append(tok)
        blocker.push(tok)
        if end_token is not None and tok == end_token:
            break
    return TokenSequence(tuple(toks), prompt.prompt_len), traces


def sequence_seed(base_seed: int, index: int, stream: int) -> int:
    return fold_seed(base_seed, index, stream)
