"""Tournament sampling: the explicit elimination oracle and its closed form.

The explicit tournament draws ``N**m`` leaves and is only used to check the
closed form.  Production code goes through :func:`compose_families`, a
compiled kernel that applies the binary single-layer update ``m`` times for
several families at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .core import check_distribution

ORACLE_LEAF_LIMIT = 2**20


@dataclass(frozen=True)
class TournamentSpec:
    layers_m: int
    leaves_N: int
    g_bits: np.ndarray  # (m, V) in {0, 1}; row l-1 scores layer l

    def __post_init__(self):
        if self.layers_m < 1 or self.leaves_N < 2:
            raise ValueError("need m >= 1 and N >= 2")
        bits = np.asarray(self.g_bits)
        if bits.ndim != 2 or bits.shape[0] != self.layers_m:
            raise ValueError(f"g_bits must have shape (m={self.layers_m}, V)")
        object.__setattr__(self, "g_bits", bits.astype(np.int8))


def tournament_sample(dist, spec: TournamentSpec, rng_seed: int, size: int | None = None,
                      chunk_leaves: int = 1 << 22):
    """Run the literal m-layer N-way elimination.

    Returns one token, or an array of ``size`` independent winners.  Each
    group advances a uniformly chosen member among those with maximal g
    (members counted with multiplicity).
    """
    p = check_distribution(dist)
    if p.size != spec.g_bits.shape[1]:
        raise ValueError("g_bits width does not match the vocabulary")
    leaves = spec.leaves_N ** spec.layers_m
    if leaves > ORACLE_LEAF_LIMIT:
        raise ValueError(f"N**m = {leaves} exceeds the oracle limit {ORACLE_LEAF_LIMIT}")
    rng = np.random.default_rng(rng_seed)
    n = 1 if size is None else int(size)
    per_chunk = max(1, chunk_leaves // leaves)
    out = np.empty(n, dtype=np.int64)
    done = 0
    while done < n:
        todo = min(per_chunk, n - done)
        out[done:done + todo] = _eliminate(p, spec, rng, todo)
        done += todo
    return int(out[0]) if size is None else out


def _eliminate(p, spec, rng, n):
    N = spec.leaves_N
    cand = rng.choice(p.size, size=(n, N ** spec.layers_m), p=p)
    for layer in range(spec.layers_m):
        groups = cand.reshape(n, -1, N)
        # g dominates; the uniform key only separates ties
        score = spec.g_bits[layer][groups] + rng.random(groups.shape)
        pick = np.argmax(score, axis=2)
        cand = np.take_along_axis(groups, pick[..., None], axis=2)[..., 0]
    return cand[:, 0]


def vectorized_single_layer(dist, g_bits, leaves_N: int) -> np.ndarray:
    """Winner distribution of one N-way layer scored by binary ``g_bits``."""
    p = check_distribution(dist)
    g = np.asarray(g_bits)
    if g.shape != p.shape:
        raise ValueError("g_bits must align with the distribution")
    ones = g.astype(bool)
    p1 = float(p[ones].sum())
    p0 = float(p[~ones].sum())
    q = np.empty_like(p)
    q[~ones] = p[~ones] * p0 ** (leaves_N - 1)
    if p1 > 0:
        q[ones] = p[ones] * (1.0 - p0 ** leaves_N) / p1
    else:
        # no mass carries g = 1, so every such token has p = 0
        q[ones] = 0.0
    return q


def vectorized_multi_layer(dist, g_per_layer, leaves_N: int) -> np.ndarray:
    q = check_distribution(dist)
    layers = np.asarray(g_per_layer)
    if layers.ndim != 2 or layers.shape[0] < 1:
        raise ValueError("g_per_layer must be an (m, V) array with m >= 1")
    for g_bits in layers:
        q = vectorized_single_layer(q, g_bits, leaves_N)
        q = q / q.sum()
    return q


@numba.njit(cache=True)
def _compose_kernel(p, words, layers_m, leaves_N, out):
    F = words.shape[0]
    V = p.shape[0]
    for f in range(F):
        for x in range(V):
            out[f, x] = p[x]
        for layer in range(layers_m):
            w = layer >> 6
            sh = np.uint64(layer & 63)
            one = np.uint64(1)
            p0 = 0.0
            p1 = 0.0
            for x in range(V):
                if (words[f, w, x] >> sh) & one:
                    p1 += out[f, x]
                else:
                    p0 += out[f, x]
            total = p0 + p1
            p0 /= total
            # (1 - p0**N) / p1 == sum_{i<N} p0**i once p0 + p1 == 1
            lose = p0 ** (leaves_N - 1)
            win = 0.0
            acc = 1.0
            for _ in range(leaves_N):
                win += acc
                acc *= p0
            lose /= total
            win /= total
            for x in range(V):
                if (words[f, w, x] >> sh) & one:
                    out[f, x] *= win
                else:
                    out[f, x] *= lose


def compose_families(dist: np.ndarray, words: np.ndarray, layers_m: int,
                     leaves_N: int) -> np.ndarray:
    """m-layer watermarked distributions for each family in ``words``.

    ``words`` has shape ``(F, n_words, V)`` with layer ``l`` in bit
    ``(l - 1) % 64`` of word ``(l - 1) // 64``; the result is ``(F, V)``.
    """
    p = np.ascontiguousarray(dist, dtype=np.float64)
    words = np.ascontiguousarray(words, dtype=np.uint64)
    out = np.empty((words.shape[0], p.size), dtype=np.float64)
    _compose_kernel(p, words, layers_m, leaves_N, out)
    return out
