"""Random edits, signature-preserving replacement and budgeted semantic manipulation."""
from __future__ import annotations

import math
from dataclasses import dataclass
from importlib.resources import files

import numpy as np
from rapidfuzz.distance import Levenshtein

from .crypto import bit_table


class AttackFailed(RuntimeError):
    pass


def levenshtein(a, b) -> int:
    """Token-level edit distance."""
    return Levenshtein.distance(list(a), list(b))


def random_edit(tokens, fraction: float, prng_seed, vocab_size: int) -> list[int]:
    """Apply ``floor(fraction * T)`` uniformly chosen deletions, insertions and replacements.

    Deletions are skipped once a single token remains.
    """
    if not 0 <= fraction <= 1:
        raise ValueError("fraction must lie in [0, 1]")
    rng = np.random.default_rng(prng_seed)
    out = [int(t) for t in tokens]
    n_edits = int(math.floor(fraction * len(out)))
    for _ in range(n_edits):
        kind = int(rng.integers(3))
        if kind == 0 and len(out) > 1:
            del out[int(rng.integers(len(out)))]
        elif kind == 1:
            out.insert(int(rng.integers(len(out) + 1)), int(rng.integers(vocab_size)))
        elif out:
            pos = int(rng.integers(len(out)))
            out[pos] = int(rng.integers(vocab_size))
    return out


def signature_preserving_replace(tokens, positions, vocab_size: int, sig_window: range | None = None,
                                 prng_seed=0, candidates=None) -> list[int]:
    """Swap the token at each position for a different token with the same bit hash.

    ``candidates`` optionally maps a position to preferred replacement ids,
    tried in order before falling back to a uniform draw.
    """
    out = [int(t) for t in tokens]
    hashes = bit_table(vocab_size)
    rng = np.random.default_rng(prng_seed)
    for pos in positions:
        if sig_window is not None and pos not in sig_window:
            raise ValueError(f"position {pos} lies outside the signature window")
        old = out[pos]
        preferred = [c for c in (candidates or {}).get(pos, []) if c != old and hashes[c] == hashes[old]]
        if preferred:
            out[pos] = int(preferred[0])
            continue
        pool = np.flatnonzero(hashes == hashes[old])
        pool = pool[pool != old]
        if len(pool) == 0:
            raise ValueError(f"no same-bit alternative for position {pos}")
        out[pos] = int(pool[rng.integers(len(pool))])
    return out


# -- semantic manipulation ---------------------------------------------------

@dataclass(frozen=True)
class EditBudget:
    epsilon: float = 0.1
    alpha: float = 0.5

    def __post_init__(self):
        if not 0 <= self.epsilon <= 1:
            raise ValueError("epsilon must lie in [0, 1]")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")


def _read_pairs(text: str) -> list[tuple[str, str]]:
    pairs = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            a, b = line.split("\t")[:2]
            pairs.append((a, b))
    return pairs


class SentimentLexicon:
    """Token polarities in [-1, 1] plus antonym and identity-substitution tables."""

    def __init__(self, polarity: dict, antonyms: dict | None = None, substitutions: dict | None = None):
        self.polarity = {k: max(-1.0, min(1.0, float(v))) for k, v in polarity.items()}
        self.antonyms = dict(antonyms or {})
        self.substitutions = dict(substitutions or {})
        for a, b in self.antonyms.items():
            pa, pb = self.polarity.get(a), self.polarity.get(b)
            if pa is None or pb is None or pa * pb >= 0:
                raise ValueError(f"antonym pair {a!r}/{b!r} lacks opposite polarities")

    @classmethod
    def from_files(cls, lexicon_path, antonym_path=None, substitution_path=None) -> "SentimentLexicon":
        from pathlib import Path

        pol = {a: float(b) for a, b in _read_pairs(Path(lexicon_path).read_text(encoding="utf-8"))}
        ant = dict(_read_pairs(Path(antonym_path).read_text(encoding="utf-8"))) if antonym_path else {}
        sub = dict(_read_pairs(Path(substitution_path).read_text(encoding="utf-8"))) if substitution_path else {}
        return cls(pol, ant, sub)

    @classmethod
    def bundled(cls) -> "SentimentLexicon":
        data = files("bileve") / "data"
        return cls.from_files(data / "lexicon.tsv", data / "antonyms.tsv", data / "substitutions.tsv")

    def most_negative(self, allowed=None, k: int = 5) -> list[str]:
        words = [w for w in self.polarity if allowed is None or w in allowed]
        return sorted(words, key=lambda w: (self.polarity[w], w))[:k]


def sentiment_score(words, lexicon: SentimentLexicon) -> float:
    """Mean polarity over the words found in the lexicon, 0 when none are."""
    vals = [lexicon.polarity[w] for w in words if w in lexicon.polarity]
    return float(np.mean(vals)) if vals else 0.0


def propose_edits(words, lexicon: SentimentLexicon, allowed=None):
    """Candidate single-token edits, most sentiment-lowering first.

    Yields ``(kind, position, new_word)`` tuples, ``kind`` being ``"replace"``
    or ``"insert"``.
    """
    base = sentiment_score(words, lexicon)
    cands = []
    for i, w in enumerate(words):
        for table in (lexicon.antonyms, lexicon.substitutions):
            new = table.get(w)
            if new is None or (allowed is not None and new not in allowed):
                continue
            trial = list(words)
            trial[i] = new
            gain = base - sentiment_score(trial, lexicon)
            if gain > 0:
                cands.append((-gain, i, "replace", new))
    # offensive insertion after sentence ends
    worst = lexicon.most_negative(allowed, k=1)
    if worst:
        for i, w in enumerate(words):
            nxt = words[i + 1] if i + 1 < len(words) else None
            if w in {".", "!", "?"} and nxt != worst[0]:
                trial = list(words)
                trial.insert(i + 1, worst[0])
                gain = base - sentiment_score(trial, lexicon)
                if gain > 0:
                    cands.append((-gain, i + 1, "insert", worst[0]))
    cands.sort(key=lambda c: (c[0], c[1], c[2], c[3]))
    return [(kind, pos, new) for _, pos, kind, new in cands]


def apply_greedy(words, lexicon: SentimentLexicon, max_edits: int, allowed=None) -> list[str]:
    """Apply up to ``max_edits`` sentiment-lowering edits, re-ranking after each one."""
    out = list(words)
    touched: set[int] = set()
    for _ in range(max_edits):
        applied = False
        for kind, pos, new in propose_edits(out, lexicon, allowed):
            if kind == "replace" and pos in touched:
                continue
            if kind == "replace":
                out[pos] = new
                touched.add(pos)
            else:
                out.insert(pos, new)
                touched = {p + 1 if p >= pos else p for p in touched} | {pos}
            applied = True
            break
        if not applied:
            break
    return out


def semantic_manipulate(words, budget: EditBudget, lexicon: SentimentLexicon, detector_fn,
                        max_rounds: int = 8, allowed=None) -> list[str]:
    """Lower sentiment within ``floor(epsilon * T)`` edits while ``detector_fn`` still fires.

    The budget shrinks by ``alpha`` after each rejected attempt.
    """
    words = list(words)
    T = len(words)
    eps = budget.epsilon
    base = sentiment_score(words, lexicon)
    for _ in range(max_rounds):
        limit = int(math.floor(eps * T))
        if limit == 0:
            return words
        attacked = apply_greedy(words, lexicon, limit, allowed)
        if levenshtein(words, attacked) > limit:
            raise AssertionError("edit budget exceeded")
        if sentiment_score(attacked, lexicon) < base and detector_fn(attacked):
            return attacked
        eps *= budget.alpha
    raise AttackFailed("attack failed")
