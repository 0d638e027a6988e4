"""Synthetic order-1 Markov language models with a controllable entropy dial."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import entropy

MODEL_SCHEMA = "worldcup.markov/v1"
START_TOKEN = 0


@dataclass(frozen=True, eq=False)
class MarkovModel:
    vocab_size: int
    concentration: float
    model_seed: int
    rows: np.ndarray  # (V, V), row i = P(next | last token i)
    temperature: float = 1.0

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.temperature != 1.0:
            # softmax of log p / T; plain powers underflow for small T
            with np.errstate(divide="ignore"):
                logits = np.log(self.rows) / self.temperature
            logits -= logits.max(axis=1, keepdims=True)
            tempered = np.exp(logits)
            tempered /= tempered.sum(axis=1, keepdims=True)
            object.__setattr__(self, "_table", tempered)
        else:
            object.__setattr__(self, "_table", self.rows)
        self._table.setflags(write=False)

    def next_distribution(self, history) -> np.ndarray:
        last = history[-1] if len(history) else START_TOKEN
        return self._table[int(last)]

    def with_temperature(self, temperature: float) -> "MarkovModel":
        return MarkovModel(self.vocab_size, self.concentration, self.model_seed,
                           self.rows, temperature)

    def row_entropies(self) -> np.ndarray:
        return np.array([entropy(r) for r in self._table])

    def save(self, path) -> None:
        """Write a ``.npz`` holding the rows plus a JSON header."""
        header = {
            "schema": MODEL_SCHEMA,
            "vocab_size": self.vocab_size,
            "concentration": self.concentration,
            "model_seed": self.model_seed,
            "temperature": self.temperature,
        }
        with open(path, "wb") as fh:
            np.savez_compressed(fh, rows=self.rows, header=np.array(json.dumps(header)))

    @classmethod
    def load(cls, path) -> "MarkovModel":
        with np.load(Path(path)) as data:
            header = json.loads(str(data["header"]))
            if header.get("schema") != MODEL_SCHEMA:
                raise ValueError(f"{path}: unsupported model schema {header.get('schema')!r}")
            rows = data["rows"].copy()
        return cls(header["vocab_size"], header["concentration"], header["model_seed"],
                   rows, header["temperature"])


def build_markov(vocab: int, concentration: float, model_seed: int,
                 temperature: float = 1.0) -> MarkovModel:
    """Rows drawn i.i.d. from a symmetric Dirichlet(concentration)."""
    if vocab < 2:
        raise ValueError("vocab must be >= 2")
    if concentration <= 0:
        raise ValueError("concentration must be positive")
    rng = np.random.default_rng([model_seed, vocab])
    # gamma draws underflow to 0 for tiny shapes; sample in log space instead
    if concentration < 1.0:
        logg = np.log(rng.random((vocab, vocab))) / concentration + np.log(
            rng.gamma(concentration + 1.0, size=(vocab, vocab)))
        logg -= logg.max(axis=1, keepdims=True)
        rows = np.exp(logg)
    else:
        rows = rng.gamma(concentration, size=(vocab, vocab))
    rows /= rows.sum(axis=1, keepdims=True)
    return MarkovModel(vocab, float(concentration), int(model_seed), rows, temperature)


def uniform_model(vocab: int) -> MarkovModel:
    rows = np.full((vocab, vocab), 1.0 / vocab)
    return MarkovModel(vocab, float("inf"), 0, rows)


def mean_step_entropy(model: MarkovModel, n_sequences: int, length: int, seed: int = 0,
                      prompt_len: int = 1) -> float:
    """Average next-token entropy along plain samples from ``model``."""
    from .embedder import generate_plain, sample_prompt
    from .keying import fold_seed

    total = 0.0
    steps = 0
    for i in range(n_sequences):
        prompt = sample_prompt(model, prompt_len, seed=fold_seed(seed, i, 1))
        seq = generate_plain(model, prompt, length, rng_seed=fold_seed(seed, i, 2))
        toks = seq.tokens
        for t in range(seq.prompt_len, len(toks)):
            total += entropy(model.next_distribution(toks[:t]))
            steps += 1
    return total / max(steps, 1)
