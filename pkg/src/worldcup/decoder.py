"""Message recovery and detection statistics."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import SymbolMessage, TokenSequence, WatermarkConfig, symbols_to_bits
from .embedder import family_set
from .gvalue import GValueFamilySet, popcount_layers, unpack_layers
from .keying import assign_positions, derive_seeds

REPORT_SCHEMA = "worldcup.detection/v1"
HALF_NORMAL_MEAN = math.sqrt(2.0 / math.pi)
HALF_NORMAL_SD = math.sqrt(1.0 - 2.0 / math.pi)


@dataclass(frozen=True)
class ScoredTokens:
    """Per-token evidence for the tokens that enter decoding."""

    positions: np.ndarray  # (T,)
    base_words: np.ndarray  # (k, n_words, T)
    alt_words: np.ndarray  # (k, n_words, T)
    layers_m: int


@dataclass(frozen=True)
class PositionGroupScores:
    """Integer g-value tallies per (position, group).

    ``hits[p, j]`` counts layer evaluations with base g = 1 over the tokens
    at position ``p``; ``alt_hits`` does the same for the counterpart family.
    """

    hits: np.ndarray  # (B, k) int
    alt_hits: np.ndarray  # (B, k) int
    counts: np.ndarray  # (B,) tokens per position
    layers_m: int
    tokens: ScoredTokens | None = field(default=None, repr=False, compare=False)

    @property
    def symbol_count(self) -> int:
        return self.hits.shape[0]

    @property
    def groups_k(self) -> int:
        return self.hits.shape[1]

    @property
    def total_tokens(self) -> int:
        return int(self.counts.sum())

    def _mean(self, tally):
        denom = (self.layers_m * self.counts)[:, None].astype(np.float64)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(denom > 0, tally / np.maximum(denom, 1), np.nan)

    @property
    def s(self) -> np.ndarray:
        """Mean base g per cell; NaN marks positions without tokens."""
        return self._mean(self.hits)

    @property
    def s_bar(self) -> np.ndarray:
        return self._mean(self.alt_hits)

    @property
    def occupied(self) -> np.ndarray:
        return self.counts > 0


def _kept_indices(seeds: np.ndarray, toks: np.ndarray, cfg: WatermarkConfig) -> np.ndarray:
    # repeated contexts carry identical g-values (or were left unwatermarked)
    seen = set()
    keep = []
    by_seed = cfg.gvalue_mode == "non_distortionary"
    for i, (s, x) in enumerate(zip(seeds.tolist(), toks.tolist())):
        key = s if by_seed else (s, x)
        if key in seen:
            continue
        seen.add(key)
        keep.append(i)
    return np.asarray(keep, dtype=np.int64)


def score_tokens(text: TokenSequence, cfg: WatermarkConfig,
                 families: GValueFamilySet | None = None) -> ScoredTokens:
    families = families or family_set(cfg)
    toks = text.as_array()
    seeds = derive_seeds(toks, cfg.key, cfg.window_c, start=text.prompt_len)
    gen = toks[text.prompt_len:]
    keep = _kept_indices(seeds, gen, cfg)
    seeds, gen = seeds[keep], gen[keep]
    positions = assign_positions(seeds, cfg.key, cfg.symbol_count)
    k = cfg.groups_k
    base = np.empty((k, families.n_words, gen.size), dtype=np.uint64)
    alt = np.empty_like(base)
    for j in range(1, k + 1):
        base[j - 1], alt[j - 1] = families.family_words(gen, seeds, j)
    return ScoredTokens(positions, base, alt, cfg.layers_m)


def score_positions(text: TokenSequence, cfg: WatermarkConfig,
                    families: GValueFamilySet | None = None) -> PositionGroupScores:
    """Tally g-values of every decoded token by message position and group."""
    st = score_tokens(text, cfg, families)
    B, k, m = cfg.symbol_count, cfg.groups_k, cfg.layers_m
    hits = np.zeros((B, k), dtype=np.int64)
    alt_hits = np.zeros((B, k), dtype=np.int64)
    for j in range(k):
        np.add.at(hits[:, j], st.positions, popcount_layers(st.base_words[j], m))
        np.add.at(alt_hits[:, j], st.positions, popcount_layers(st.alt_words[j], m))
    counts = np.bincount(st.positions, minlength=B).astype(np.int64)
    return PositionGroupScores(hits, alt_hits, counts, m, st)


def decode_confidence(scores: PositionGroupScores) -> SymbolMessage:
    """Bit j of symbol p is 1 iff the counterpart family scores higher.

    Ties and empty positions decode as 0.
    """
    k = scores.groups_k
    ind = (scores.hits < scores.alt_hits).astype(np.int64)  # same denominator per cell
    weights = 1 << np.arange(k - 1, -1, -1)
    return SymbolMessage(tuple(int(v) for v in ind @ weights), k)


def counting_matrix(scores: PositionGroupScores) -> np.ndarray:
    """Hard per-token votes: ``M[p, sym]``.

    A token votes for the symbol maximising its selected-family g-sum; the
    sum separates over groups, so each bit is chosen independently and
    group ties go to bit 0 (the smaller symbol).
    """
    st = scores.tokens
    if st is None:
        raise ValueError("counting needs token-level scores")
    k, m = scores.groups_k, scores.layers_m
    sym = np.zeros(st.positions.size, dtype=np.int64)
    for j in range(k):
        bit = popcount_layers(st.alt_words[j], m) > popcount_layers(st.base_words[j], m)
        sym = (sym << 1) | bit.astype(np.int64)
    M = np.zeros((scores.symbol_count, 1 << k), dtype=np.int64)
    np.add.at(M, (st.positions, sym), 1)
    return M


def decode_counting(text: TokenSequence, cfg: WatermarkConfig,
                    scores: PositionGroupScores | None = None) -> SymbolMessage:
    scores = scores or score_positions(text, cfg)
    M = counting_matrix(scores)
    # argmax returns the first maximum, i.e. the smaller symbol on ties
    return SymbolMessage(tuple(int(v) for v in M.argmax(axis=1)), cfg.groups_k)


def z_signed(scores: PositionGroupScores) -> float:
    """Standardised mean of ``2g - 1`` over group-1 token-layer pairs."""
    n = scores.layers_m * scores.total_tokens
    if n == 0:
        return 0.0
    hits = int(scores.hits[:, 0].sum())
    return (2 * hits - n) / math.sqrt(n)


def z_signed_cumulative(scores: PositionGroupScores) -> np.ndarray:
    """``z_p`` after including positions ``0..p`` (group 1)."""
    n = scores.layers_m * np.cumsum(scores.counts)
    hits = np.cumsum(scores.hits[:, 0])
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(n > 0, (2 * hits - n) / np.sqrt(np.maximum(n, 1)), 0.0)


def folded_cells(scores: PositionGroupScores) -> np.ndarray:
    """Standardised margin ``|s - 1/2|`` of every occupied (position, group) cell."""
    occ = scores.occupied
    if not occ.any():
        return np.zeros(0)
    s = scores.s[occ]
    sigma = 1.0 / (2.0 * np.sqrt(scores.layers_m * scores.counts[occ]))[:, None]
    u = np.abs(s - 0.5)
    return ((u - sigma * HALF_NORMAL_MEAN) / (sigma * HALF_NORMAL_SD)).ravel()


def z_folded(scores: PositionGroupScores) -> float:
    """Message-blind statistic: sum of folded cell scores over sqrt(#cells)."""
    cells = folded_cells(scores)
    if cells.size == 0:
        return 0.0
    return float(cells.sum() / math.sqrt(cells.size))


def layer_weights(layers_m: int, tau: float = 10.0, mu: float = 1.0) -> np.ndarray:
    """Linear non-increasing weights from ``tau`` to ``mu`` rescaled to sum to ``m``."""
    if layers_m == 1:
        if tau != mu:
            raise ValueError("a single layer admits only constant weights (tau == mu)")
        return np.ones(1)
    if tau < mu or mu < 0:
        raise ValueError("need tau >= mu >= 0")
    w = tau - np.arange(layers_m) * (tau - mu) / (layers_m - 1)
    return w * layers_m / w.sum()


def weighted_mean_score(text: TokenSequence, cfg: WatermarkConfig, tau: float = 10.0,
                        mu: float = 1.0, scores: PositionGroupScores | None = None) -> float:
    """Layer-weighted mean g of the family each cell decodes to.

    Each (position, group) cell reads the base family when it decodes to 0
    and the counterpart when it decodes to 1, so the score grows with the
    watermark whatever message was embedded.  ``tau == mu`` is the plain
    mean detector.
    """
    scores = scores or score_positions(text, cfg)
    st = scores.tokens
    T = st.positions.size
    if T == 0:
        return 0.5
    w = layer_weights(cfg.layers_m, tau, mu)
    pick_alt = scores.hits < scores.alt_hits  # (B, k)
    total = 0.0
    for j in range(cfg.groups_k):
        use_alt = pick_alt[st.positions, j]
        words = np.where(use_alt[None, :], st.alt_words[j], st.base_words[j])
        bits = unpack_layers(words, cfg.layers_m)  # (m, T)
        total += float(w @ bits.sum(axis=1))
    return total / (cfg.layers_m * T * cfg.groups_k)


def mean_score(text: TokenSequence, cfg: WatermarkConfig,
               scores: PositionGroupScores | None = None) -> float:
    return weighted_mean_score(text, cfg, 1.0, 1.0, scores)


@dataclass(frozen=True)
class DetectionReport:
    bits: tuple[int, ...]
    symbols: tuple[int, ...]
    k: int
    position_z: tuple[float, ...]
    z_signed: float
    z_folded: float
    weighted_mean: float
    coverage: float
    margins: tuple[float | None, ...]
    counts: tuple[int, ...]
    tokens_used: int

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "bits": "".join(map(str, self.bits)),
            "symbols": list(self.symbols),
            "k": self.k,
            "position_z": [round(v, 12) for v in self.position_z],
            "z_signed": round(self.z_signed, 12),
            "z_folded": round(self.z_folded, 12),
            "weighted_mean": round(self.weighted_mean, 12),
            "coverage": self.coverage,
            "margins": [None if v is None else round(v, 12) for v in self.margins],
            "counts": list(self.counts),
            "tokens_used": self.tokens_used,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def detect(text: TokenSequence, cfg: WatermarkConfig) -> DetectionReport:
    scores = score_positions(text, cfg)
    msg = decode_confidence(scores)
    s = scores.s
    margins = []
    for p in range(scores.symbol_count):
        if scores.counts[p]:
            margins.append(float(np.min(np.abs(s[p] - 0.5))))
        else:
            margins.append(None)
    return DetectionReport(
        bits=symbols_to_bits(msg),
        symbols=msg.symbols,
        k=msg.k,
        position_z=tuple(float(v) for v in z_signed_cumulative(scores)),
        z_signed=z_signed(scores),
        z_folded=z_folded(scores),
        weighted_mean=weighted_mean_score(text, cfg, scores=scores),
        coverage=float(scores.occupied.mean()),
        margins=tuple(margins),
        counts=tuple(int(c) for c in scores.counts),
        tokens_used=scores.total_tokens,
    )


# Hamming(7,4), codeword layout p1 p2 d1 p3 d2 d3 d4 (positions 1..7)
def _encode_nibble(d):
    d1, d2, d3, d4 = d
    return [d1 ^ d2 ^ d4, d1 ^ d3 ^ d4, d1, d2 ^ d3 ^ d4, d2, d3, d4]


def hamming_encode(bits) -> tuple[int, ...]:
    bits = [int(b) for b in bits]
    if len(bits) % 4:
        raise ValueError(f"payload length {len(bits)} is not a multiple of 4")
    out = []
    for i in range(0, len(bits), 4):
        out.extend(_encode_nibble(bits[i:i + 4]))
    return tuple(out)


def hamming_decode(code) -> tuple[int, ...]:
    """Correct up to one flipped bit per 7-bit block and return the data bits."""
    code = [int(b) for b in code]
    if len(code) % 7:
        raise ValueError(f"codeword length {len(code)} is not a multiple of 7")
    out = []
    for i in range(0, len(code), 7):
        block = code[i:i + 7]
        syndrome = 0
        for pos in range(1, 8):
            if block[pos - 1]:
                syndrome ^= pos
        if syndrome:
            block[syndrome - 1] ^= 1
        out.extend((block[2], block[4], block[5], block[6]))
    return tuple(out)
