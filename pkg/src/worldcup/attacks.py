"""Token-level edits applied to the generated part of a sequence."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import TokenSequence

ATTACK_KINDS = ("none", "delete", "substitute", "copy_paste")


@dataclass(frozen=True)
class AttackSpec:
    """One attack setting; ``segments`` only matters for copy-paste."""

    kind: str = "none"
    ratio: float = 0.0
    segments: int = 1
    attack_seed: int = 0

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if not 0.0 <= self.ratio <= 1.0:
            raise ValueError(f"ratio must lie in [0, 1], got {self.ratio}")
        if self.segments < 1:
            raise ValueError("segments must be >= 1")
        if self.kind == "none" and self.ratio != 0.0:
            raise ValueError("kind 'none' takes ratio 0")
        if self.kind == "copy_paste" and self.ratio >= 1.0:
            raise ValueError("copy_paste needs ratio < 1")

    @property
    def label(self) -> str:
        if self.kind == "none":
            return "none"
        pct = f"{round(self.ratio * 100):d}%"
        if self.kind == "copy_paste":
            return f"cp-{self.segments}-{pct}"
        return f"{self.kind}-{pct}"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "AttackSpec":
        return cls(**data)


def _count(ratio: float, T: int) -> int:
    # guard against 0.29 * 100 == 28.999999999999996
    return min(T, math.floor(ratio * T + 1e-9))


def _check_ratio(ratio: float) -> None:
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"ratio must lie in [0, 1], got {ratio}")


def _rebuild(text: TokenSequence, generated) -> TokenSequence:
    prompt = text.tokens[:text.prompt_len]
    return TokenSequence(prompt + tuple(int(t) for t in generated), text.prompt_len)


def attack_delete(text: TokenSequence, ratio: float, attack_seed: int) -> TokenSequence:
    """Drop ``floor(ratio * T)`` uniformly chosen generated tokens."""
    _check_ratio(ratio)
    gen = np.asarray(text.generated, dtype=np.int64)
    n = _count(ratio, gen.size)
    if n == 0:
        return text
    rng = np.random.default_rng(attack_seed)
    drop = rng.choice(gen.size, size=n, replace=False)
    keep = np.ones(gen.size, dtype=bool)
    keep[drop] = False
    return _rebuild(text, gen[keep])


def attack_substitute(text: TokenSequence, ratio: float, vocab: int,
                      attack_seed: int) -> TokenSequence:
    """Replace ``floor(ratio * T)`` generated tokens by different uniform tokens."""
    _check_ratio(ratio)
    if vocab < 2:
        raise ValueError("substitution needs vocab >= 2")
    gen = np.array(text.generated, dtype=np.int64)
    n = _count(ratio, gen.size)
    if n == 0:
        return text
    rng = np.random.default_rng(attack_seed)
    where = rng.choice(gen.size, size=n, replace=False)
    draw = rng.integers(0, vocab - 1, size=n)
    # skip over the original id so the replacement always differs
    gen[where] = draw + (draw >= gen[where])
    return _rebuild(text, gen)


def copy_paste_layout(T: int, segments: int, ratio: float, rng) -> tuple[list, list]:
    """Segment and filler block lengths for a copy-paste splice.

    Layout: ``F_0 S_1 F_1 S_2 ... S_n F_n``.  The ``T`` watermarked tokens
    are cut at ``n - 1`` distinct random points; the
    ``round(ratio * T / (1 - ratio))`` filler tokens are split into ``n + 1``
    blocks whose sizes differ by at most one.
    """
    if segments > max(T, 1):
        raise ValueError(f"cannot cut {T} tokens into {segments} segments")
    fill = round(ratio * T / (1.0 - ratio))
    cuts = np.sort(rng.choice(np.arange(1, T), size=segments - 1, replace=False)) if segments > 1 else []
    bounds = [0, *[int(c) for c in cuts], T]
    seg_lens = [bounds[i + 1] - bounds[i] for i in range(segments)]
    fill_lens = [len(b) for b in np.array_split(np.arange(fill), segments + 1)]
    return seg_lens, fill_lens


def attack_copy_paste(text: TokenSequence, segments: int, ratio: float, filler: TokenSequence,
                      attack_seed: int) -> TokenSequence:
    """Interleave ``segments`` watermarked pieces with unwatermarked filler.

    Filler tokens make up ``ratio`` of the generated output (rounded to a
    whole token) and are taken from the start of ``filler.generated``.
    """
    _check_ratio(ratio)
    if ratio == 0.0:
        return text
    if ratio >= 1.0:
        raise ValueError("copy_paste needs ratio < 1")
    gen = list(text.generated)
    rng = np.random.default_rng(attack_seed)
    seg_lens, fill_lens = copy_paste_layout(len(gen), segments, ratio, rng)
    need = sum(fill_lens)
    pool = list(filler.generated)
    if len(pool) < need:
        raise ValueError(f"filler has {len(pool)} tokens, copy-paste needs {need}")
    out: list[int] = []
    src = 0
    used = 0
    for i, seg in enumerate(seg_lens):
        out.extend(pool[used:used + fill_lens[i]])
        used += fill_lens[i]
        out.extend(gen[src:src + seg])
        src += seg
    out.extend(pool[used:used + fill_lens[-1]])
    assert len(out) == len(gen) + need
    return _rebuild(text, out)


def apply_attack(text: TokenSequence, spec: AttackSpec, vocab: int,
                 filler: TokenSequence | None = None) -> TokenSequence:
    if spec.kind == "none":
        return text
    if spec.kind == "delete":
        return attack_delete(text, spec.ratio, spec.attack_seed)
    if spec.kind == "substitute":
        return attack_substitute(text, spec.ratio, vocab, spec.attack_seed)
    if filler is None:
        raise ValueError("copy_paste needs filler text")
    return attack_copy_paste(text, spec.segments, spec.ratio, filler, spec.attack_seed)
