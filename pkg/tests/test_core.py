import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from worldcup.core import (
    ConfigError,
    SymbolMessage,
    TokenSequence,
    WatermarkConfig,
    activation,
    as_bits,
    bits_to_symbols,
    check_distribution,
    entropy,
    kl_divergence,
    normalize,
    symbols_to_bits,
)


class TestNormalize:
    def test_already_normalized(self):
        np.testing.assert_allclose(normalize([0.95, 0.05], 1e-12), [0.95, 0.05], atol=1e-15)

    def test_clamps_negative(self):
        # 40-digit oracle: 1e-12 / (1.3 + 1e-12)
        out = normalize([1.3, -0.3], 1e-12)
        np.testing.assert_allclose(out[1], 7.692307692301775e-13, rtol=1e-12)
        np.testing.assert_allclose(out[0], 0.9999999999992308, rtol=1e-15)

    def test_symmetric(self):
        np.testing.assert_array_equal(normalize([2, 2, 2, 2]), [0.25] * 4)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            normalize([1.0, np.nan])
        with pytest.raises(ValueError):
            normalize([np.inf, 1.0])

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            normalize([])

    def test_all_nonpositive_gives_uniform(self):
        np.testing.assert_allclose(normalize([-1.0, -5.0, 0.0]), [1 / 3] * 3)

    @given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=50))
    def test_idempotent(self, raw):
        once = normalize(raw)
        assert abs(once.sum() - 1) < 1e-9
        np.testing.assert_allclose(normalize(once), once, atol=1e-12)


class TestEntropy:
    def test_one_hot(self):
        assert entropy([1, 0, 0]) == 0.0

    def test_uniform(self):
        assert entropy([0.25] * 4) == pytest.approx(np.log(4), abs=1e-12)

    def test_two_point(self):
        # mpmath, 40 digits
        assert entropy([0.6, 0.4]) == pytest.approx(0.6730116670092564, abs=1e-14)

    @given(st.lists(st.floats(0, 1), min_size=2, max_size=20), st.randoms())
    def test_permutation_invariant(self, w, rnd):
        if sum(w) == 0:
            return
        p = np.array(w) / sum(w)
        q = p.copy()
        rnd.shuffle(q)
        assert entropy(q) == pytest.approx(entropy(p), abs=1e-12)
        assert 0 <= entropy(p) <= np.log(len(p)) + 1e-12


class TestSymbols:
    def test_examples(self):
        assert bits_to_symbols("1101", 2).symbols == (3, 1)
        assert bits_to_symbols("0000", 2).symbols == (0, 0)
        assert bits_to_symbols("101100", 3).symbols == (5, 4)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            bits_to_symbols("101", 2)

    @pytest.mark.parametrize("k", [1, 2, 4])
    def test_round_trip_exhaustive(self, k):
        for b in range(k, 13, k):
            for bits in itertools.product((0, 1), repeat=b):
                assert symbols_to_bits(bits_to_symbols(bits, k)) == bits

    def test_round_trip_all_six_bit_k3(self):
        for bits in itertools.product((0, 1), repeat=6):
            msg = bits_to_symbols(bits, 3)
            assert msg.symbols[0] == 4 * bits[0] + 2 * bits[1] + bits[2]
            assert msg.to_bits() == bits

    @given(st.lists(st.integers(0, 1), min_size=1, max_size=16), st.sampled_from([1, 2, 4]))
    def test_round_trip_random(self, bits, k):
        bits = bits[: len(bits) - len(bits) % k] or [0] * k
        assert symbols_to_bits(bits_to_symbols(bits, k)) == tuple(bits)

    def test_symbol_range(self):
        with pytest.raises(ValueError):
            SymbolMessage((4,), 2)

    def test_as_bits(self):
        assert as_bits("0110") == (0, 1, 1, 0)
        with pytest.raises(ValueError):
            as_bits("012")
        with pytest.raises(ValueError):
            as_bits([])


class TestWatermarkConfig:
    def test_defaults(self):
        cfg = WatermarkConfig()
        assert (cfg.layers_m, cfg.alpha, cfg.window_c, cfg.leaves_N) == (30, 1.2, 2, 2)
        assert cfg.activation == "tanh" and cfg.score_floor_eps == 1e-12

    @pytest.mark.parametrize("bad", [
        dict(message_bits_b=15, groups_k=2),
        dict(leaves_N=1),
        dict(layers_m=0),
        dict(alpha=-0.1),
        dict(activation="gelu"),
        dict(gvalue_mode="other"),
        dict(key=-1),
        dict(key=2**64),
        dict(score_floor_eps=0.0),
        dict(window_c=0),
    ])
    def test_rejects(self, bad):
        with pytest.raises(ConfigError):
            WatermarkConfig(**bad)

    def test_dict_round_trip(self):
        cfg = WatermarkConfig(groups_k=2, message_bits_b=48, fixed_lambda=0.0)
        again = WatermarkConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert again == cfg
        assert again.digest() == cfg.digest()
        assert cfg.digest() != WatermarkConfig().digest()

    def test_unknown_field(self):
        with pytest.raises(ConfigError):
            WatermarkConfig.from_dict({"layers": 3})


class TestDistributionHelpers:
    def test_check(self):
        check_distribution([0.5, 0.5])
        with pytest.raises(ValueError):
            check_distribution([0.5, 0.6])
        with pytest.raises(ValueError):
            check_distribution([1.5, -0.5])

    def test_kl(self):
        assert kl_divergence([0.5, 0.5], [0.5, 0.5]) == 0.0
        assert kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(np.log(2))
        assert kl_divergence([0.5, 0.5], [1.0, 0.0]) == np.inf

    def test_kl_subnormal_base(self):
        assert np.isfinite(kl_divergence([0.5, 0.5], [1 - 1e-310, 1e-310]))

    def test_activation(self):
        assert activation("tanh", 0.0) == 0.0
        assert activation("sigmoid", 0.0) == 0.5
        assert activation("relu", -1.0) == 0.0


class TestTokenSequence:
    def test_prompt_bounds(self):
        with pytest.raises(ValueError):
            TokenSequence((1, 2), prompt_len=3)
        seq = TokenSequence((1, 2, 3), 1)
        assert seq.generated == (2, 3)
        assert len(seq) == 3
