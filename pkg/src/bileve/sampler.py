"""Rank-based sampling with signature-bit embedding and shift-generate."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .crypto import SIG_BITS, KeyMatrix, KeyPair, bit_table, sign_message
from .lm import ToyLM


@dataclass(frozen=True)
class WraParams:
    gamma_sample: float = 0.001
    m: int = 44
    b: int = SIG_BITS
    total_len: int = 300

    def __post_init__(self):
        if not 0 < self.gamma_sample < 1:
            raise ValueError("gamma_sample must lie in (0, 1)")
        if self.m < 1 or self.b < 0:
            raise ValueError("m must be >= 1 and b >= 0")
        if self.b not in (0, SIG_BITS):
            raise ValueError(f"b must be 0 or the signature length {SIG_BITS}")
        if self.m + self.b > self.total_len:
            raise ValueError("m + b must not exceed total_len")


@dataclass
class GenerationRecord:
    tokens: list[int]
    shift: int
    prompt_len: int
    params: WraParams
    bits: np.ndarray | None = field(default=None, repr=False)
    scheme: str = "bileve"

    @property
    def continuation(self) -> list[int]:
        return self.tokens[self.prompt_len:]

    @property
    def message(self) -> list[int]:
        return self.tokens[self.prompt_len:self.prompt_len + self.params.m]

    def signature_positions(self) -> range:
        start = self.prompt_len + self.params.m
        return range(start, start + self.params.b)

    def to_dict(self, vocab=None, pk_fingerprint: str | None = None) -> dict:
        out = {
            "scheme": self.scheme,
            "tokens": [int(t) for t in self.tokens],
            "prompt_len": self.prompt_len,
            "shift": self.shift,
            "params": asdict(self.params),
            "pk_fingerprint": pk_fingerprint,
        }
        if vocab is not None:
            out["text"] = vocab.decode(self.continuation)
        return out


def rank_scores(values) -> np.ndarray:
    """0 for the smallest value up to K-1 for the largest; ties go to the lower id."""
    values = np.asarray(values)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.int64)
    ranks[order] = np.arange(len(values))
    return ranks


def wra(p, xi_row, gamma_sample: float, xi_ranks=None) -> np.ndarray:
    p = np.asarray(p)
    if xi_ranks is None:
        xi_row = np.asarray(xi_row)
        if xi_row.shape != p.shape:
            raise ValueError(f"dimension mismatch: {p.shape} vs {xi_row.shape}")
        xi_ranks = rank_scores(xi_row)
    elif len(xi_ranks) != len(p):
        raise ValueError("dimension mismatch")
    return rank_scores(p) + gamma_sample * np.asarray(xi_ranks, dtype=np.float64)


def sample_token_coarse(p, xi_row, gamma_sample: float, xi_ranks=None) -> int:
    # np.argmax returns the first maximum, i.e. the lowest id among ties
    return int(np.argmax(wra(p, xi_row, gamma_sample, xi_ranks)))


def sample_token_with_bit(p, xi_row, gamma_sample: float, bit: int, xi_ranks=None, bits=None) -> int:
    """Highest-WRA token whose bit hash equals ``bit``."""
    scores = wra(p, xi_row, gamma_sample, xi_ranks)
    if bits is None:
        bits = bit_table(len(scores))
    match = bits == bit
    if not match.any():
        raise ValueError("bit unembeddable")
    scores = np.where(match, scores, -np.inf)
    return int(np.argmax(scores))


def generate_watermarked(lm: ToyLM, prompt, keys: KeyMatrix, kp: KeyPair | None,
                         params: WraParams = WraParams(), shift: int = 0) -> GenerationRecord:
    """Generate ``total_len`` tokens after ``prompt``.

    Message tokens and any tail use the plain WRA argmax; the ``b`` tokens in
    between each carry one signature bit. Key rows are indexed by position in
    the continuation, rotated by ``shift``.
    """
    if not 0 <= shift < keys.n:
        raise ValueError(f"shift must lie in [0, {keys.n})")
    if keys.K != lm.K:
        raise ValueError(f"key matrix has K={keys.K} but model has K={lm.K}")
    if params.b and kp is None:
        raise ValueError("a key pair is needed to embed signature bits")
    hashes = bit_table(lm.K)
    ranks = keys.ranks
    tokens = [int(t) for t in prompt]
    prompt_len = len(tokens)
    sig = None

    def step(t, bit=None):
        p = lm.next_distribution(tokens)
        xr = ranks[keys.row_index(t, shift)]
        if bit is None:
            return sample_token_coarse(p, None, params.gamma_sample, xr)
        return sample_token_with_bit(p, None, params.gamma_sample, bit, xr, hashes)

    for t in range(params.m):
        tokens.append(step(t))
    if params.b:
        sig = sign_message(kp.sk, tokens[prompt_len:], params.m)
        for i in range(params.b):
            tokens.append(step(params.m + i, int(sig[i])))
    for t in range(params.m + params.b, params.total_len):
        tokens.append(step(t))
    return GenerationRecord(tokens, shift, prompt_len, params, sig)


def draw_shift(rng: np.random.Generator, n: int) -> int:
    return int(rng.integers(0, n))


def greedy_decode(lm: ToyLM, prompt, length: int) -> list[int]:
    """Top-ranked token at every step (probability ties go to the higher id)."""
    tokens = [int(t) for t in prompt]
    for _ in range(length):
        tokens.append(int(np.argmax(rank_scores(lm.next_distribution(tokens)))))
    return tokens
