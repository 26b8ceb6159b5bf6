"""Signature extraction, key alignment statistics and the five-way provenance verdict."""
from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from numba import njit

from .crypto import SIG_BITS, KeyMatrix, pk_fingerprint, token_bits, verify_signature

CLAMP = 1.0 - 1e-12


class Case(enum.Enum):
    CLEAN_ATTRIBUTED = 1
    SIGNATURE_REPLACEMENT = 2
    SAFETY_GAP = 3
    TAMPERED_FROM_TARGET = 4
    NOT_FROM_TARGET = 5

    @property
    def label(self) -> str:
        return f"Case{self.value}_" + {
            1: "CleanAttributed",
            2: "SignatureReplacement",
            3: "SafetyGap",
            4: "TamperedFromTarget",
            5: "NotFromTarget",
        }[self.value]

    @property
    def attributed(self) -> bool:
        """True when the text is traced back to the target model."""
        return self.value != 5


@dataclass
class AlignmentStats:
    cost: float
    best_shift: int
    p_value: float
    N: int
    null_seed: int | None = None
    best_costs: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class DetectConfig:
    m: int = 44
    b: int = SIG_BITS
    N: int = 100
    p_threshold: float = 0.01
    gamma_gap: float = 3.0
    band: int | None = 16
    segments: int = 5
    local_p_floor: float = 0.05
    local_ratio: float = 5.0
    prng_seed: int = 0
    rank_normalize: bool = True

    def fingerprint(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class Verdict:
    case: Case
    signature_valid: bool
    stats: AlignmentStats | None = None
    segment_pvalues: list[float] | None = None
    segments: list[AlignmentStats] | None = None

    def to_dict(self, cfg: DetectConfig | None = None, pk: bytes | None = None, keys: KeyMatrix | None = None) -> dict:
        out = {
            "case": self.case.label,
            "signature_valid": self.signature_valid,
            "global": asdict(self.stats) if self.stats else None,
            "segment_pvalues": self.segment_pvalues,
            "segments": [asdict(s) for s in self.segments] if self.segments else None,
        }
        if cfg is not None:
            out["config"] = asdict(cfg)
            out["config_hash"] = cfg.fingerprint()
        if pk is not None:
            out["pk_fingerprint"] = pk_fingerprint(pk)
        if keys is not None:
            out["keys_fingerprint"] = keys.fingerprint
        return out


def extract_pair(tokens, m: int, b: int = SIG_BITS):
    tokens = [int(t) for t in tokens]
    if len(tokens) < m + b:
        raise ValueError("insufficient length")
    return tokens[:m], token_bits(tokens[m:m + b])


# -- alignment costs ---------------------------------------------------------

def cost_matrix(xi: np.ndarray, tokens) -> np.ndarray:
    """``C[r, t] = log(1 - xi[r, tokens[t]])`` with the key value clamped below 1."""
    vals = np.minimum(xi[:, np.asarray(tokens, dtype=np.int64)], CLAMP)
    return np.log1p(-vals)


def rank_costs(n: int) -> np.ndarray:
    """Cost of each within-column rank ``0..n-1`` once mapped to ``(r + 0.5) / n``."""
    return np.log1p(-(np.arange(n) + 0.5) / n)


def key_cost_matrix(keys: KeyMatrix, tokens, rank_normalize: bool = True) -> np.ndarray:
    """Cost matrix used by the permutation tests.

    With ``rank_normalize`` every key value is replaced by its rank within its
    column, so each token's column holds the same n values whatever the key
    draw. A single extreme entry in the column of a frequent token then can no
    longer pull every text's statistic down at once.
    """
    if not rank_normalize:
        return cost_matrix(keys.xi, tokens)
    return rank_costs(keys.n)[keys.col_ranks[:, np.asarray(tokens, dtype=np.int64)]]


def alignment_cost(tokens, keys: KeyMatrix, shift: int = 0) -> float:
    if len(tokens) < 1:
        raise ValueError("need at least one token")
    vals = np.minimum(keys.values(tokens, shift), CLAMP)
    return float(np.mean(np.log1p(-vals)))


def plain_costs_all_shifts(C: np.ndarray) -> np.ndarray:
    """Mean of ``C[(d + t) % n, t]`` over ``t`` for every shift ``d``."""
    n, T = C.shape
    rows = (np.arange(n)[:, None] + np.arange(T)[None, :]) % n
    return C[rows, np.arange(T)[None, :]].mean(axis=1)


@njit(cache=True)
def _edit_dp(C, d, gamma, band):
    # forward form of the suffix recursion; rows are text tokens, columns key rows
    n, T = C.shape
    L = T
    inf = np.inf
    if band < 0 or band > L:
        band = L
    rows = np.empty(L, dtype=np.int64)
    for j in range(L):
        rows[j] = (d + j) % n
    prev = np.full(L + 1, inf)
    cur = np.full(L + 1, inf)
    for j in range(min(L, band) + 1):
        prev[j] = gamma * j
    for i in range(1, T + 1):
        lo = max(1, i - band)
        hi = min(L, i + band)
        if lo == 1:
            cur[0] = gamma * i if i <= band else inf
        else:
            cur[lo - 1] = inf
        ci = i - 1
        left = cur[lo - 1]
        for j in range(lo, hi + 1):
            best = prev[j - 1] + C[rows[j - 1], ci]
            v = prev[j] + gamma
            if v < best:
                best = v
            v = left + gamma
            if v < best:
                best = v
            cur[j] = best
            left = best
        if hi < L:
            cur[hi + 1] = inf
        prev, cur = cur, prev
    return prev[L] / T


@njit(cache=True)
def _edit_min_over_shifts(C, gamma, band, stop_at):
    """Minimum edit cost over all shifts; returns early once a shift reaches ``stop_at``."""
    n = C.shape[0]
    best = np.inf
    arg = -1
    for d in range(n):
        v = _edit_dp(C, d, gamma, band)
        if v < best:
            best = v
            arg = d
            if best <= stop_at:
                break
    return best, arg


def edit_alignment_cost(tokens, keys: KeyMatrix, shift: int = 0, gamma_gap: float = 1.0, band: int | None = None) -> float:
    """Edit-robust alignment cost of ``tokens`` against key rows ``shift, shift+1, ...``.

    Minimum over monotone alignments of matched ``log(1 - xi)`` terms plus
    ``gamma_gap`` per unmatched token or key row, divided by the text length.
    The key window is as long as the text. ``band`` limits ``|i - j|`` in the
    DP table; ``None`` gives the exact minimum.
    """
    if gamma_gap <= 0:
        raise ValueError("gamma_gap must be positive")
    if len(tokens) == 0:
        return 0.0
    C = cost_matrix(keys.xi, tokens)
    return float(_edit_dp(C, shift % keys.n, gamma_gap, -1 if band is None else band))


def edit_costs_all_shifts(C: np.ndarray, gamma_gap: float, band: int | None) -> np.ndarray:
    b = -1 if band is None else band
    return np.array([_edit_dp(C, d, gamma_gap, b) for d in range(C.shape[0])])


# -- permutation tests -------------------------------------------------------

def _null_rng(prng_seed: int, *key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(prng_seed, spawn_key=key))


def null_cost_matrix(rng: np.random.Generator, n: int, tokens, rank_normalize: bool = True) -> np.ndarray:
    """Cost matrix against a fresh uniform key of shape ``(n, K)``.

    Only the columns of tokens present in the text influence the statistic, so
    only those are drawn; the result has the same law as slicing a full matrix.
    """
    uniq, inv = np.unique(np.asarray(tokens, dtype=np.int64), return_inverse=True)
    vals = rng.random((n, len(uniq)))
    if rank_normalize:
        ranks = np.argsort(np.argsort(vals, axis=0, kind="stable"), axis=0, kind="stable")
        return rank_costs(n)[ranks][:, inv]
    return np.log1p(-np.minimum(vals, CLAMP))[:, inv]


def _pvalue(count_le: int, N: int) -> float:
    return (1 + count_le) / (N + 1)


def global_pvalue(tokens, keys: KeyMatrix, N: int = 100, gamma_gap: float = 3.0,
                  prng_seed: int = 0, band: int | None = 16, rank_normalize: bool = True) -> AlignmentStats:
    """Permutation test of the min-over-shifts edit cost against ``N`` random keys."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if len(tokens) < 1:
        raise ValueError("need at least one token")
    b = -1 if band is None else band
    C = key_cost_matrix(keys, tokens, rank_normalize)
    costs = edit_costs_all_shifts(C, gamma_gap, band)
    d_best = int(np.argmin(costs))
    s = float(costs[d_best])
    count = 0
    for i in range(N):
        Cn = null_cost_matrix(_null_rng(prng_seed, 0, i), keys.n, tokens, rank_normalize)
        v, _ = _edit_min_over_shifts(Cn, gamma_gap, b, s)
        count += v <= s
    best10 = sorted(float(c) for c in costs)[:10]
    return AlignmentStats(s, d_best, _pvalue(count, N), N, prng_seed, best10)


def plain_pvalue(tokens, keys: KeyMatrix, N: int = 100, prng_seed: int = 0, stream: int = 0,
                 rank_normalize: bool = True) -> AlignmentStats:
    """Permutation test of the min-over-shifts plain cost."""
    if N < 1:
        raise ValueError("N must be >= 1")
    costs = plain_costs_all_shifts(key_cost_matrix(keys, tokens, rank_normalize))
    d_best = int(np.argmin(costs))
    s = float(costs[d_best])
    count = 0
    for i in range(N):
        Cn = null_cost_matrix(_null_rng(prng_seed, 1, stream, i), keys.n, tokens, rank_normalize)
        count += plain_costs_all_shifts(Cn).min() <= s
    return AlignmentStats(s, d_best, _pvalue(count, N), N, prng_seed, sorted(costs.tolist())[:10])


def split_segments(T: int, S: int) -> list[tuple[int, int]]:
    if S < 2:
        raise ValueError("need at least 2 segments")
    if T < 4 * S:
        raise ValueError("text too short for the requested number of segments")
    sizes = [len(a) for a in np.array_split(np.arange(T), S)]
    starts = np.concatenate([[0], np.cumsum(sizes)])
    return [(int(starts[k]), int(starts[k + 1])) for k in range(S)]


def local_alignment(tokens, keys: KeyMatrix, S: int = 5, N: int = 100, prng_seed: int = 0,
                    rank_normalize: bool = True) -> list[AlignmentStats]:
    tokens = list(tokens)
    return [plain_pvalue(tokens[a:b], keys, N, prng_seed, k, rank_normalize)
            for k, (a, b) in enumerate(split_segments(len(tokens), S))]


def local_pvalues(tokens, keys: KeyMatrix, S: int = 5, N: int = 100, prng_seed: int = 0,
                  rank_normalize: bool = True) -> list[float]:
    return [s.p_value for s in local_alignment(tokens, keys, S, N, prng_seed, rank_normalize)]


def abnormal_segments(pvalues, floor: float = 0.05, ratio: float = 5.0) -> list[int]:
    """Indices whose p-value exceeds ``floor`` and ``ratio`` times the median of the others."""
    out = []
    for k, p in enumerate(pvalues):
        others = [q for j, q in enumerate(pvalues) if j != k]
        if p > floor and p > ratio * float(np.median(others)):
            out.append(k)
    return out


# -- verdict -----------------------------------------------------------------

def signature_check(tokens, pk: bytes, m: int, b: int) -> bool:
    if len(tokens) < m + b:
        return False
    message, bits = extract_pair(tokens, m, b)
    return verify_signature(pk, message, bits)


def detect(tokens, pk: bytes, keys: KeyMatrix, cfg: DetectConfig = DetectConfig(),
           owner_flags_suspicious: bool = False) -> Verdict:
    tokens = [int(t) for t in tokens]
    valid = signature_check(tokens, pk, cfg.m, cfg.b)
    if valid:
        if not owner_flags_suspicious:
            return Verdict(Case.CLEAN_ATTRIBUTED, True)
        segs = local_alignment(tokens, keys, cfg.segments, cfg.N, cfg.prng_seed, cfg.rank_normalize)
        pvals = [s.p_value for s in segs]
        flagged = abnormal_segments(pvals, cfg.local_p_floor, cfg.local_ratio)
        case = Case.SIGNATURE_REPLACEMENT if flagged else Case.SAFETY_GAP
        return Verdict(case, True, None, pvals, segs)
    stats = global_pvalue(tokens, keys, cfg.N, cfg.gamma_gap, cfg.prng_seed, cfg.band, cfg.rank_normalize)
    case = Case.TAMPERED_FROM_TARGET if stats.p_value < cfg.p_threshold else Case.NOT_FROM_TARGET
    return Verdict(case, False, stats)
