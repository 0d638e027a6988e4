"""Multi-bit text watermarking via tournament sampling over token distributions."""

from .core import (
    ConfigError,
    SymbolMessage,
    TokenSequence,
    WatermarkConfig,
    bits_to_symbols,
    entropy,
    normalize,
    symbols_to_bits,
)
from .decoder import (
    DetectionReport,
    decode_confidence,
    decode_counting,
    detect,
    hamming_decode,
    hamming_encode,
    score_positions,
    weighted_mean_score,
    z_folded,
    z_signed,
)
from .embedder import embed_sequence, generate_plain, sample_prompt
from .toylm import MarkovModel, build_markov, uniform_model

__version__ = "0.1.0"
