"""Comparison schemes: fixed green-list (Unigram) watermark and single-level signature."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .crypto import SIG_BITS, KeyPair, bit_table, sign_message, verify_signature
from .lm import ToyLM

SLS_MAX_REJECTIONS = 64


@dataclass(frozen=True)
class UnigramConfig:
    delta: float = 2.0
    green_ratio: float = 0.5
    seed: int = 0
    z_threshold: float = 6.0
    nucleus_p: float = 0.95

    def __post_init__(self):
        if not 0 < self.green_ratio < 1:
            raise ValueError("green_ratio must lie in (0, 1)")
        if not 0 < self.nucleus_p <= 1:
            raise ValueError("nucleus_p must lie in (0, 1]")


@dataclass(frozen=True)
class SlsConfig:
    m: int = 44
    b: int = SIG_BITS
    nucleus_p: float = 0.95

    def __post_init__(self):
        if not 0 < self.nucleus_p <= 1:
            raise ValueError("nucleus_p must lie in (0, 1]")
        if self.b != SIG_BITS:
            raise ValueError(f"b must equal the signature length {SIG_BITS}")

    @property
    def total_len(self) -> int:
        return self.m + self.b


def nucleus_filter(p, top_p: float) -> np.ndarray:
    """Zero out the tail beyond cumulative mass ``top_p`` and renormalize."""
    p = np.asarray(p, dtype=np.float64)
    order = np.argsort(-p, kind="stable")
    cum = np.cumsum(p[order])
    keep = int(np.searchsorted(cum, top_p * cum[-1])) + 1
    out = np.zeros_like(p)
    kept = order[:keep]
    out[kept] = p[kept]
    return out / out.sum()


def sample_from(p, rng: np.random.Generator) -> int:
    cdf = np.cumsum(p)
    return int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), len(p) - 1))


def nucleus_generate(lm: ToyLM, prompt, length: int, rng: np.random.Generator, top_p: float = 0.95) -> list[int]:
    """Unwatermarked base-model sampling."""
    tokens = [int(t) for t in prompt]
    for _ in range(length):
        tokens.append(sample_from(nucleus_filter(lm.next_distribution(tokens), top_p), rng))
    return tokens


def green_list(K: int, cfg: UnigramConfig) -> np.ndarray:
    """Boolean mask of the ``floor(green_ratio * K)`` green ids, fixed per seed."""
    seed = int.from_bytes(hashlib.sha256(f"unigram-green:{cfg.seed}".encode()).digest()[:8], "big")
    perm = np.random.Generator(np.random.PCG64(seed)).permutation(K)
    mask = np.zeros(K, dtype=bool)
    mask[perm[:int(math.floor(cfg.green_ratio * K))]] = True
    return mask


def unigram_distribution(p, green, delta: float, top_p: float) -> np.ndarray:
    with np.errstate(divide="ignore"):
        logits = np.log(np.asarray(p, dtype=np.float64))
    logits = logits + delta * green
    logits -= logits.max()
    q = np.exp(logits)
    return nucleus_filter(q / q.sum(), top_p)


def unigram_generate(lm: ToyLM, prompt, cfg: UnigramConfig, length: int, prng_seed) -> list[int]:
    rng = np.random.default_rng(prng_seed)
    green = green_list(lm.K, cfg)
    tokens = [int(t) for t in prompt]
    for _ in range(length):
        q = unigram_distribution(lm.next_distribution(tokens), green, cfg.delta, cfg.nucleus_p)
        tokens.append(sample_from(q, rng))
    return tokens


def unigram_zscore(tokens, cfg: UnigramConfig, K: int) -> float:
    T = len(tokens)
    if T < 1:
        raise ValueError("need at least one token")
    green = green_list(K, cfg)
    g = int(green[np.asarray(tokens, dtype=np.int64)].sum())
    r = cfg.green_ratio
    return (g - r * T) / math.sqrt(T * r * (1 - r))


def unigram_detect(tokens, cfg: UnigramConfig, K: int) -> bool:
    return unigram_zscore(tokens, cfg, K) > cfg.z_threshold


def _sample_bit(p, bit, hashes, rng, top_p, stats=None) -> int:
    q = nucleus_filter(p, top_p)
    support = q > 0
    if (hashes[support] == bit).any():
        for attempt in range(1, SLS_MAX_REJECTIONS + 1):
            tok = sample_from(q, rng)
            if hashes[tok] == bit:
                if stats is not None:
                    stats.append(attempt)
                return tok
    # deterministic fallback: most probable matching token in the full vocabulary
    order = np.argsort(-np.asarray(p), kind="stable")
    match = order[hashes[order] == bit]
    if len(match) == 0:
        raise ValueError("bit unembeddable")
    if stats is not None:
        stats.append(SLS_MAX_REJECTIONS)
    return int(match[0])


def sls_generate(lm: ToyLM, prompt, cfg: SlsConfig, kp: KeyPair, prng_seed, stats=None) -> list[int]:
    """Nucleus-sample the message, then rejection-sample one signature bit per token.

    If ``stats`` is a list, the number of draws used for each signature token
    is appended to it.
    """
    rng = np.random.default_rng(prng_seed)
    hashes = bit_table(lm.K)
    tokens = [int(t) for t in prompt]
    start = len(tokens)
    for _ in range(cfg.m):
        tokens.append(sample_from(nucleus_filter(lm.next_distribution(tokens), cfg.nucleus_p), rng))
    sig = sign_message(kp.sk, tokens[start:], cfg.m)
    for i in range(cfg.b):
        tokens.append(_sample_bit(lm.next_distribution(tokens), int(sig[i]), hashes, rng, cfg.nucleus_p, stats))
    return tokens


def sls_verify(tokens, pk: bytes, cfg: SlsConfig) -> bool:
    from .detector import extract_pair

    if len(tokens) < cfg.m + cfg.b:
        return False
    message, bits = extract_pair(tokens, cfg.m, cfg.b)
    return verify_signature(pk, message, bits)
