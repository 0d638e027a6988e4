import itertools
import json

import numpy as np
import pytest

from worldcup.core import TokenSequence, WatermarkConfig, symbols_to_bits
from worldcup.decoder import (
    REPORT_SCHEMA,
    PositionGroupScores,
    ScoredTokens,
    counting_matrix,
    decode_confidence,
    decode_counting,
    detect,
    folded_cells,
    hamming_decode,
    hamming_encode,
    layer_weights,
    mean_score,
    score_positions,
    weighted_mean_score,
    z_folded,
    z_signed,
)
from worldcup.embedder import embed_sequence, sample_prompt
from worldcup.gvalue import g
from worldcup.keying import context_window, derive_seed, fold_seed

ZETA_AT_NULL_MEAN = -1.3236080967885126  # -sqrt(2/pi) / sqrt(1 - 2/pi), mpmath
SATURATED_FOLDED = 198.10868421646803  # m=30, n_p=16, 32 cells, mpmath


def scores_from(hits, alt_hits, counts, m):
    return PositionGroupScores(np.array(hits), np.array(alt_hits), np.array(counts), m)


def grow_sequence(cfg, want, length, start=(5, 6)):
    """Greedy text whose every token has layer bits ``want`` at its seed."""
    toks = list(start)
    for _ in range(length):
        seed = derive_seed(context_window(toks, len(toks), cfg.window_c), cfg.key)
        for x in range(10**5):
            if all(g(x, seed, layer, 1, cfg.key) == b for layer, b in enumerate(want, 1)):
                toks.append(x)
                break
    return TokenSequence(tuple(toks), len(start))


class TestScorePositions:
    def test_saturation(self):
        cfg = WatermarkConfig(layers_m=3, message_bits_b=4)
        sc = score_positions(grow_sequence(cfg, (1, 1, 1), 25), cfg)
        occ = sc.occupied
        assert occ.any()
        np.testing.assert_array_equal(sc.s[occ], 1.0)
        np.testing.assert_array_equal(sc.s_bar[occ], 0.0)

    def test_single_token_half(self):
        cfg = WatermarkConfig(layers_m=2, message_bits_b=4)
        text = grow_sequence(cfg, (1, 0), 1)
        sc = score_positions(text, cfg)
        p = int(np.flatnonzero(sc.counts)[0])
        assert sc.total_tokens == 1
        assert sc.s[p, 0] == 0.5
        assert np.isnan(sc.s[(p + 1) % 4, 0])

    def test_complement_consistency(self, uniform_lm):
        cfg = WatermarkConfig(groups_k=2, message_bits_b=16)
        text, _ = embed_sequence(uniform_lm, sample_prompt(uniform_lm, 4, 0), "01" * 8, cfg, 1, 200)
        sc = score_positions(text, cfg)
        np.testing.assert_array_equal(sc.alt_hits, cfg.layers_m * sc.counts[:, None] - sc.hits)
        occ = sc.occupied
        np.testing.assert_allclose(sc.s_bar[occ], 1 - sc.s[occ], atol=1e-15)
        assert sc.counts.sum() == sc.total_tokens

    def test_null_grand_mean(self):
        rng = np.random.default_rng(2024)
        cfg = WatermarkConfig()
        hits = evals = 0
        for i in range(1000):
            toks = rng.integers(0, 1000, 130)
            sc = score_positions(TokenSequence(tuple(toks), 2), cfg)
            hits += int(sc.hits.sum())
            evals += cfg.layers_m * sc.total_tokens
        assert abs(hits / evals - 0.5) <= 3 * 0.5 / np.sqrt(evals)

    def test_repeated_context_counted_once(self):
        cfg = WatermarkConfig(message_bits_b=4)
        text = TokenSequence((1, 2, 3, 1, 2, 3, 1, 2, 3), 0)
        sc = score_positions(text, cfg)
        # windows (S,S)->1, (S,1)->2, (1,2)->3, (2,3)->1, (3,1)->2 then repeats
        assert sc.total_tokens == 5

    def test_non_distortionary_dedupes_by_seed(self):
        cfg = WatermarkConfig(message_bits_b=4, gvalue_mode="non_distortionary")
        text = TokenSequence((1, 2, 3, 1, 2, 4), 0)
        # window (1,2) recurs with a different next token: kept only in distortionary mode
        assert score_positions(text, cfg).total_tokens == 5
        assert score_positions(text, cfg.replace(gvalue_mode="distortionary")).total_tokens == 6


class TestConfidenceDecoder:
    def test_example(self):
        sc = scores_from([[8, 3]], [[2, 7]], [1], 10)
        msg = decode_confidence(sc)
        assert msg.symbols == (1,) and symbols_to_bits(msg) == (0, 1)

    def test_ties_and_empty_to_zero(self):
        sc = scores_from([[15, 15], [0, 0]], [[15, 15], [0, 0]], [1, 0], 30)
        assert decode_confidence(sc).symbols == (0, 0)


class TestCountingDecoder:
    def tokens(self, base_bits, alt_bits, positions, m):
        base = np.array(base_bits, dtype=np.uint64)[:, None, :]
        alt = np.array(alt_bits, dtype=np.uint64)[:, None, :]
        return ScoredTokens(np.array(positions), base, alt, m)

    def make(self, st, B, k):
        from worldcup.gvalue import popcount_layers
        hits = np.zeros((B, k), dtype=np.int64)
        alt = np.zeros((B, k), dtype=np.int64)
        for j in range(k):
            np.add.at(hits[:, j], st.positions, popcount_layers(st.base_words[j], st.layers_m))
            np.add.at(alt[:, j], st.positions, popcount_layers(st.alt_words[j], st.layers_m))
        counts = np.bincount(st.positions, minlength=B)
        return PositionGroupScores(hits, alt, counts, st.layers_m, st)

    def test_single_voter(self):
        st = self.tokens([[0], [0]], [[3], [3]], [0], 2)
        M = counting_matrix(self.make(st, 1, 2))
        np.testing.assert_array_equal(M, [[0, 0, 0, 1]])

    def test_symmetric_tie(self):
        st = self.tokens([[1], [2]], [[2], [1]], [0], 2)
        M = counting_matrix(self.make(st, 1, 2))
        assert M.argmax(axis=1)[0] == 0 and M[0, 0] == 1

    def test_row_sums(self, uniform_lm):
        cfg = WatermarkConfig(groups_k=2, message_bits_b=16)
        text, _ = embed_sequence(uniform_lm, sample_prompt(uniform_lm, 4, 3), "0011" * 4, cfg, 4, 150)
        sc = score_positions(text, cfg)
        np.testing.assert_array_equal(counting_matrix(sc).sum(axis=1), sc.counts)
        assert decode_counting(text, cfg, sc).k == 2


class TestZ:
    def test_signed_saturated(self):
        sc = scores_from([[300]], [[0]], [10], 30)
        assert z_signed(sc) == pytest.approx(np.sqrt(300), abs=1e-12)
        assert z_signed(sc) == pytest.approx(17.3205, abs=1e-4)

    def test_signed_balanced(self):
        assert z_signed(scores_from([[15]], [[15]], [1], 30)) == 0.0

    def test_empty(self):
        sc = scores_from(np.zeros((4, 1), int), np.zeros((4, 1), int), [0] * 4, 30)
        assert z_signed(sc) == 0.0 and z_folded(sc) == 0.0

    def test_folded_at_null_mean(self):
        sc = scores_from([[15], [30]], [[15], [30]], [1, 2], 30)
        np.testing.assert_allclose(folded_cells(sc), ZETA_AT_NULL_MEAN, atol=1e-12)
        assert ZETA_AT_NULL_MEAN == pytest.approx(-1.3237, abs=1e-3)
        assert z_folded(sc) < 0

    def test_folded_saturated(self):
        B, k, m, n = 16, 2, 30, 16
        hits = np.where(np.arange(B * k).reshape(B, k) % 2, m * n, 0)
        sc = scores_from(hits, m * n - hits, [n] * B, m)
        assert z_folded(sc) == pytest.approx(SATURATED_FOLDED, rel=1e-12)

    def test_folded_sign_blind(self):
        a = scores_from([[25], [5]], [[5], [25]], [1, 1], 30)
        b = scores_from([[5], [25]], [[25], [5]], [1, 1], 30)
        assert z_folded(a) == z_folded(b) > 0


class TestWeights:
    def test_three_layers(self):
        np.testing.assert_allclose(layer_weights(3), [20 / 11, 1.0, 2 / 11], atol=1e-15)
        np.testing.assert_allclose(layer_weights(3), [1.8182, 1.0, 0.1818], atol=1e-4)

    @pytest.mark.parametrize("m", range(2, 65))
    def test_shape(self, m):
        w = layer_weights(m)
        assert abs(w.sum() - m) < 1e-9
        assert np.all(np.diff(w) <= 0)

    def test_single_layer(self):
        np.testing.assert_array_equal(layer_weights(1, 3.0, 3.0), [1.0])
        with pytest.raises(ValueError):
            layer_weights(1)

    def test_constant_weights_equal_mean(self, uniform_lm, cfg):
        text, _ = embed_sequence(uniform_lm, sample_prompt(uniform_lm, 4, 1), "1" * 16, cfg, 2, 100)
        assert weighted_mean_score(text, cfg, 5.0, 5.0) == pytest.approx(mean_score(text, cfg),
                                                                         abs=1e-12)

    def test_watermark_raises_mean(self, uniform_lm, cfg, rng):
        text, _ = embed_sequence(uniform_lm, sample_prompt(uniform_lm, 4, 1), "10" * 8, cfg, 2, 200)
        noise = TokenSequence(tuple(rng.integers(0, 1000, 204)), 4)
        assert weighted_mean_score(text, cfg) > mean_score(noise, cfg) + 0.05


class TestHamming:
    def test_zero(self):
        assert hamming_encode((0, 0, 0, 0)) == (0,) * 7
        assert hamming_decode((0,) * 7) == (0, 0, 0, 0)

    def test_all_single_flips(self):
        cases = 0
        for nibble in itertools.product((0, 1), repeat=4):
            code = list(hamming_encode(nibble))
            assert hamming_decode(code) == nibble
            for pos in range(7):
                bad = code.copy()
                bad[pos] ^= 1
                assert hamming_decode(bad) == nibble
                cases += 1
        assert cases == 112

    def test_double_flip_witness(self):
        code = list(hamming_encode((1, 0, 1, 1)))
        code[0] ^= 1
        code[1] ^= 1
        assert hamming_decode(code) != (1, 0, 1, 1)

    def test_lengths(self):
        with pytest.raises(ValueError):
            hamming_encode((1, 0, 1))
        with pytest.raises(ValueError):
            hamming_decode((1,) * 8)


class TestReport:
    def test_schema_and_determinism(self, uniform_lm):
        cfg = WatermarkConfig(groups_k=2, message_bits_b=24)
        text, _ = embed_sequence(uniform_lm, sample_prompt(uniform_lm, 4, 5), "011" * 8, cfg, 6, 256)
        a, b = detect(text, cfg).to_json(), detect(text, cfg).to_json()
        assert a == b
        d = json.loads(a)
        assert d["schema"] == REPORT_SCHEMA
        assert len(d["bits"]) == 24 and d["bits"] == "011" * 8
        assert 0 <= d["coverage"] <= 1
        assert len(d["symbols"]) == 12 and len(d["position_z"]) == 12
        assert d["position_z"][-1] == pytest.approx(d["z_signed"])

    def test_empty_text(self, cfg):
        rep = detect(TokenSequence((1, 2, 3), 3), cfg)
        assert rep.coverage == 0 and rep.z_signed == 0 and rep.z_folded == 0
        assert rep.bits == (0,) * 16
