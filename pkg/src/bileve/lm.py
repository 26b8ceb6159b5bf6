"""Vocabulary and an add-lambda smoothed n-gram model used as the generator."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BOS = "<bos>"
UNK = "<unk>"
FORMAT_HEADER = "toylm-format 1"


def tokenize(text: str, tokenizer: str = "whitespace") -> list[str]:
    if tokenizer == "whitespace":
        return text.split()
    if tokenizer == "char":
        return list(text)
    raise ValueError(f"unknown tokenizer {tokenizer!r}")


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.tokens) < 2:
            raise ValueError("vocabulary needs at least 2 tokens")
        index = {t: i for i, t in enumerate(self.tokens)}
        if len(index) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")
        object.__setattr__(self, "index", index)

    @property
    def K(self) -> int:
        return len(self.tokens)

    def __len__(self):
        return len(self.tokens)

    @property
    def bos_id(self) -> int:
        return self.index[BOS]

    @property
    def unk_id(self) -> int:
        return self.index[UNK]

    def encode(self, words) -> list[int]:
        unk = self.index[UNK]
        return [self.index.get(w, unk) for w in words]

    def decode(self, ids, sep: str = " ") -> str:
        return sep.join(self.tokens[i] for i in ids)


def build_vocab(corpus: str, tokenizer: str = "whitespace") -> Vocabulary:
    """Tokens in first-occurrence order, preceded by ``<bos>`` and ``<unk>``."""
    words = tokenize(corpus, tokenizer)
    if not words:
        raise ValueError("empty corpus")
    seen = {BOS: None, UNK: None}
    for w in words:
        seen.setdefault(w, None)
    return Vocabulary(tuple(seen))


class ToyLM:
    """Markov model over token ids with add-lambda smoothing.

    ``table`` maps a context tuple (the previous ``order`` ids, left padded
    with ``<bos>``) to a pair of arrays ``(next_ids, counts)``. Contexts never
    seen in training fall back to the smoothed unigram distribution.
    """

    def __init__(self, vocab: Vocabulary, order: int, smoothing: float, table, unigram):
        self.vocab = vocab
        self.order = order
        self.smoothing = float(smoothing)
        self.table = table
        self.unigram = np.asarray(unigram, dtype=np.float64)
        self._fallback = self._smoothed(np.arange(vocab.K), self.unigram)
        self._fallback.setflags(write=False)

    @property
    def K(self) -> int:
        return self.vocab.K

    def _smoothed(self, ids, counts):
        K = self.vocab.K
        total = float(np.sum(counts))
        denom = total + self.smoothing * K
        if denom <= 0:
            return np.full(K, 1.0 / K)
        probs = np.full(K, self.smoothing / denom)
        probs[ids] += np.asarray(counts, dtype=np.float64) / denom
        return probs

    def context_key(self, context) -> tuple:
        ctx = list(context[-self.order:]) if self.order else []
        pad = self.order - len(ctx)
        return (self.vocab.bos_id,) * pad + tuple(int(i) for i in ctx)

    def next_distribution(self, context) -> np.ndarray:
        entry = self.table.get(self.context_key(context))
        if entry is None:
            return self._fallback.copy()
        return self._smoothed(*entry)

    def log_likelihood(self, seq, context=()) -> float:
        hist = list(context)
        total = 0.0
        for tok in seq:
            p = self.next_distribution(hist)[tok]
            if p <= 0.0:
                raise ValueError("zero likelihood")
            total += math.log(p)
            hist.append(tok)
        return total

    def save(self, path) -> None:
        path = Path(path)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(FORMAT_HEADER + "\n")
            meta = {"order": self.order, "smoothing": self.smoothing, "tokens": list(self.vocab.tokens)}
            fh.write(json.dumps(meta) + "\n")
            fh.write(json.dumps({"unigram": [int(c) for c in self.unigram]}) + "\n")
            for ctx in sorted(self.table):
                ids, counts = self.table[ctx]
                fh.write(json.dumps([list(ctx), ids.tolist(), counts.tolist()]) + "\n")

    @classmethod
    def load(cls, path) -> "ToyLM":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip()
            if header != FORMAT_HEADER:
                raise ValueError(f"unsupported model file header {header!r}")
            meta = json.loads(fh.readline())
            unigram = json.loads(fh.readline())["unigram"]
            table = {}
            for line in fh:
                ctx, ids, counts = json.loads(line)
                table[tuple(ctx)] = (np.asarray(ids, dtype=np.int64), np.asarray(counts, dtype=np.float64))
        vocab = Vocabulary(tuple(meta["tokens"]))
        return cls(vocab, meta["order"], meta["smoothing"], table, unigram)


def train_markov(corpus, vocab: Vocabulary, order: int = 1, smoothing: float = 0.01) -> ToyLM:
    """Count ``order``-gram transitions over the id sequence ``corpus``.

    ``smoothing`` may be 0 for exact relative frequencies; generation code
    relies on it being positive so that every token stays reachable.
    """
    if not 1 <= order <= 3:
        raise ValueError(f"order must be in [1, 3], got {order}")
    if smoothing < 0:
        raise ValueError("smoothing must be non-negative")
    ids = [int(i) for i in corpus]
    if any(i < 0 or i >= vocab.K for i in ids):
        raise ValueError("token id outside vocabulary")
    padded = [vocab.bos_id] * order + ids
    counts: dict[tuple, dict[int, int]] = {}
    for t in range(order, len(padded)):
        ctx = tuple(padded[t - order:t])
        nxt = counts.setdefault(ctx, {})
        nxt[padded[t]] = nxt.get(padded[t], 0) + 1
    table = {}
    for ctx, nxt in counts.items():
        keys = sorted(nxt)
        table[ctx] = (np.asarray(keys, dtype=np.int64), np.asarray([nxt[k] for k in keys], dtype=np.float64))
    unigram = np.bincount(np.asarray(ids, dtype=np.int64), minlength=vocab.K).astype(np.float64)
    return ToyLM(vocab, order, smoothing, table, unigram)


def next_distribution(lm: ToyLM, context) -> np.ndarray:
    return lm.next_distribution(context)


def perplexity(lm: ToyLM, seq, context=()) -> float:
    """exp of the mean negative log-likelihood of ``seq`` given ``context``."""
    if len(seq) < 1:
        raise ValueError("perplexity needs at least one token")
    return math.exp(-lm.log_likelihood(seq, context) / len(seq))


def uniform_lm(vocab: Vocabulary) -> ToyLM:
    return ToyLM(vocab, 1, 1.0, {}, np.zeros(vocab.K))
