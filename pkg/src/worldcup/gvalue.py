"""Binary pseudo-random g-values and their complementary / independent families.

Layer ``l`` (1-based) of group ``j`` reads bit ``(l - 1) % 64`` of the word

    mix64(seed ^ mix64(token ^ salt(j, (l - 1) // 64, tag)))

with ``salt(j, w, tag) = mix64(mix64(key ^ GVALUE_SALT) ^ (tag << 48 | j << 16 | w))``.
``tag = 0`` is the base family; ``tag = 1`` is the independently keyed family
used when the complementary construction is ablated.  The complementary
family is the bitwise negation of the base family, so ``g + g_bar == 1``
holds pointwise by construction.
"""

from __future__ import annotations

import numpy as np

from .keying import MASK64, mix64, mix64_array

GVALUE_SALT = 0xA4093822299F31D0
BASE_TAG = 0
RANDOM_TAG = 1

_U = np.uint64


def _salt(key: int, group: int, word: int, tag: int) -> int:
    return mix64(mix64((key ^ GVALUE_SALT) & MASK64) ^ ((tag << 48) | (group << 16) | word))


def g_word(token: int, seed: int, group: int, word: int, key: int, tag: int = BASE_TAG) -> int:
    return mix64(int(seed) ^ mix64((int(token) ^ _salt(key, group, word, tag)) & MASK64))


def g(token: int, seed: int, layer: int, group: int, key: int) -> int:
    """Base g-value of ``token`` at ``layer`` (1-based) of ``group`` (1-based)."""
    _check(layer, group)
    word = g_word(token, seed, group, (layer - 1) // 64, key)
    return (word >> ((layer - 1) % 64)) & 1


def g_complement(token: int, seed: int, layer: int, group: int, key: int) -> int:
    return 1 - g(token, seed, layer, group, key)


def random_independent_g(token: int, seed: int, layer: int, group: int, key: int,
                         variant_tag: int = RANDOM_TAG) -> int:
    if variant_tag == BASE_TAG:
        raise ValueError("variant_tag must differ from the base family tag")
    _check(layer, group)
    word = g_word(token, seed, group, (layer - 1) // 64, key, variant_tag)
    return (word >> ((layer - 1) % 64)) & 1


def _check(layer: int, group: int) -> None:
    if layer < 1:
        raise ValueError("layer index is 1-based")
    if group < 1:
        raise ValueError("group index is 1-based")


def n_words(layers_m: int) -> int:
    return (layers_m + 63) // 64


class GValueFamilySet:
    """``k`` groups of ``m``-layer families, each paired with its counterpart.

    The counterpart is the complement (``complementary=True``) or an
    independently keyed random family.
    """

    def __init__(self, key: int, groups_k: int, layers_m: int, complementary: bool = True):
        self.key = key
        self.groups_k = groups_k
        self.layers_m = layers_m
        self.complementary = complementary
        self.n_words = n_words(layers_m)
        self._salts = np.array(
            [[[_salt(key, j, w, tag) for w in range(self.n_words)]
              for j in range(1, groups_k + 1)]
             for tag in (BASE_TAG, RANDOM_TAG)],
            dtype=np.uint64,
        )  # (tag, group, word)

    def words(self, tokens, seeds, group: int, tag: int = BASE_TAG) -> np.ndarray:
        """uint64 words of shape ``(n_words, len(tokens))``.

        ``seeds`` is a scalar (one step, many candidate tokens) or an array
        aligned with ``tokens`` (one seed per observed token).
        """
        toks = np.asarray(tokens, dtype=np.int64).astype(np.uint64)
        seeds = np.asarray(seeds, dtype=np.uint64)
        salts = self._salts[tag, group - 1]
        return mix64_array(seeds[None, ...] ^ mix64_array(toks[None, :] ^ salts[:, None]))

    def family_words(self, tokens, seeds, group: int) -> tuple[np.ndarray, np.ndarray]:
        """(base, counterpart) words for one group."""
        base = self.words(tokens, seeds, group)
        if self.complementary:
            return base, ~base
        return base, self.words(tokens, seeds, group, RANDOM_TAG)

    def all_family_words(self, vocab_size: int, seed: int) -> np.ndarray:
        """Stack ``(q_1, q_bar_1, ..., q_k, q_bar_k)`` words: ``(2k, n_words, V)``."""
        tokens = np.arange(vocab_size)
        out = np.empty((2 * self.groups_k, self.n_words, vocab_size), dtype=np.uint64)
        for j in range(1, self.groups_k + 1):
            out[2 * j - 2], out[2 * j - 1] = self.family_words(tokens, seed, j)
        return out

    def layer_bits(self, words: np.ndarray) -> np.ndarray:
        """Unpack ``(n_words, n)`` words into ``(m, n)`` bits (row ``l-1`` is layer ``l``)."""
        return unpack_layers(words, self.layers_m)

    def hit_counts(self, words: np.ndarray) -> np.ndarray:
        """Per token, how many of the ``m`` layers have g = 1."""
        return popcount_layers(words, self.layers_m)


def unpack_layers(words: np.ndarray, layers_m: int) -> np.ndarray:
    words = np.asarray(words, dtype=np.uint64)
    rows = []
    for layer in range(layers_m):
        w, sh = divmod(layer, 64)
        rows.append(((words[w] >> _U(sh)) & _U(1)).astype(np.uint8))
    return np.stack(rows)


def popcount_layers(words: np.ndarray, layers_m: int) -> np.ndarray:
    words = np.asarray(words, dtype=np.uint64)
    total = np.zeros(words.shape[1:], dtype=np.int64)
    for w in range(n_words(layers_m)):
        used = min(64, layers_m - 64 * w)
        mask = _U(MASK64) if used == 64 else _U((1 << used) - 1)
        total += np.bitwise_count(words[w] & mask).astype(np.int64)
    return total
