"""Experiment orchestration: detection metrics, case studies and perplexity comparison."""
from __future__ import annotations

import configparser
import dataclasses
import json
import time
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from importlib.resources import files
from pathlib import Path

import numpy as np

from . import attacks
from .baselines import (
    SlsConfig,
    UnigramConfig,
    nucleus_generate,
    sls_generate,
    sls_verify,
    unigram_generate,
    unigram_zscore,
)
from .crypto import KeyMatrix, KeyPair, keygen
from .detector import (
    Case,
    DetectConfig,
    detect,
    local_alignment,
    plain_costs_all_shifts,
    cost_matrix,
)
from .lm import ToyLM, Vocabulary, build_vocab, perplexity, train_markov
from .sampler import WraParams, generate_watermarked

SCHEMES = ("bileve", "sls", "unigram")


@dataclass(frozen=True)
class ExperimentConfig:
    scheme: str = "bileve"
    edit_fraction: float = 0.0
    sample_count: int = 200
    # generation
    total_len: int = 300
    m: int = 44
    b: int = 256
    gamma_sample: float = 0.001
    n_keys: int = 300
    prompt_len: int = 2
    nucleus_p: float = 0.95
    # toy model
    corpus: str | None = None
    heldout: str | None = None
    lm_order: int = 2
    smoothing: float = 1e-5
    # unigram
    delta: float = 2.0
    green_ratio: float = 0.5
    z_threshold: float = 6.0
    # detection
    N: int = 100
    p_threshold: float = 0.01
    gamma_gap: float = 3.0
    band: int | None = 16
    segments: int = 5
    # seeds
    seed: int = 2024
    key_seed: str = "bileve-signing-key"
    xi_seed: str = "bileve-watermark-key"
    green_seed: int = 0
    null_seed: int = 7

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")
        if not 0 <= self.edit_fraction <= 1:
            raise ValueError("edit_fraction must lie in [0, 1]")
        if self.m + self.b > self.total_len:
            raise ValueError("m + b must not exceed total_len")

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    @property
    def wra(self) -> WraParams:
        return WraParams(self.gamma_sample, self.m, self.b, self.total_len)

    @property
    def unigram(self) -> UnigramConfig:
        return UnigramConfig(self.delta, self.green_ratio, self.green_seed, self.z_threshold, self.nucleus_p)

    @property
    def sls(self) -> SlsConfig:
        return SlsConfig(self.m, self.b, self.nucleus_p)

    @property
    def detect(self) -> DetectConfig:
        return DetectConfig(self.m, self.b, self.N, self.p_threshold, self.gamma_gap, self.band,
                            self.segments, prng_seed=self.null_seed)


def load_config(path) -> ExperimentConfig:
    """Read ``key = value`` lines (an optional ``[experiment]`` header is allowed)."""
    text = Path(path).read_text()
    if not text.lstrip().startswith("["):
        text = "[experiment]\n" + text
    parser = configparser.ConfigParser()
    parser.read_string(text)
    section = parser["experiment"] if parser.has_section("experiment") else parser[parser.sections()[0]]
    return config_from_mapping(section)


def config_from_mapping(mapping) -> ExperimentConfig:
    types = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
    kw = {}
    for key, raw in mapping.items():
        key = key.replace("-", "_")
        if key not in types:
            raise ValueError(f"unknown config key {key!r}")
        kw[key] = _coerce(raw, types[key])
    return ExperimentConfig(**kw)


def _coerce(raw, typ):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    if "None" in str(typ) and raw.lower() in ("none", ""):
        return None
    if typ in ("int", "int | None"):
        return int(raw)
    if typ in ("float", "float | None"):
        return float(raw)
    return raw


# -- assets ------------------------------------------------------------------

def bundled_text(name: str) -> str:
    return (files("bileve") / "data" / name).read_text(encoding="utf-8")


@dataclass
class Workspace:
    vocab: Vocabulary
    lm: ToyLM
    kp: KeyPair
    keys: KeyMatrix
    corpus_ids: list[int]
    heldout_ids: list[int]


@lru_cache(maxsize=4)
def _workspace(corpus, heldout, order, smoothing, key_seed, xi_seed, n_keys) -> Workspace:
    text = Path(corpus).read_text(encoding="utf-8") if corpus else bundled_text("corpus.txt")
    held = Path(heldout).read_text(encoding="utf-8") if heldout else bundled_text("heldout.txt")
    vocab = build_vocab(text)
    ids = vocab.encode(text.split())
    lm = train_markov(ids, vocab, order, smoothing)
    kp = keygen(key_seed.encode())
    keys = KeyMatrix(xi_seed.encode(), n_keys, vocab.K)
    return Workspace(vocab, lm, kp, keys, ids, vocab.encode(held.split()))


def workspace(cfg: ExperimentConfig) -> Workspace:
    return _workspace(cfg.corpus, cfg.heldout, cfg.lm_order, cfg.smoothing, cfg.key_seed, cfg.xi_seed, cfg.n_keys)


def sample_rng(cfg: ExperimentConfig, *key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=key))


def draw_prompt(ws: Workspace, rng, length: int) -> list[int]:
    if length == 0:
        return []
    start = int(rng.integers(0, len(ws.corpus_ids) - length))
    return ws.corpus_ids[start:start + length]


# -- sample producers ----------------------------------------------------------

def watermarked_sample(cfg: ExperimentConfig, i: int, scheme: str | None = None):
    """Continuation produced by ``scheme`` for positive sample ``i`` (before any edit)."""
    scheme = scheme or cfg.scheme
    key = cfg.replace(scheme=scheme, edit_fraction=0.0, sample_count=1)
    toks, meta = _watermarked_sample(key, i, scheme)
    return list(toks), {**meta, "prompt": list(meta["prompt"])}


@lru_cache(maxsize=4096)
def _watermarked_sample(cfg: ExperimentConfig, i: int, scheme: str):
    ws = workspace(cfg)
    rng = sample_rng(cfg, 0, SCHEMES.index(scheme), i)
    prompt = draw_prompt(ws, rng, cfg.prompt_len)
    if scheme == "bileve":
        rec = generate_watermarked(ws.lm, prompt, ws.keys, ws.kp, cfg.wra, int(rng.integers(ws.keys.n)))
        return tuple(rec.continuation), {"shift": rec.shift, "prompt": prompt}
    seed = int(rng.integers(2**63))
    if scheme == "sls":
        toks = sls_generate(ws.lm, prompt, cfg.sls, ws.kp, seed)
    else:
        toks = unigram_generate(ws.lm, prompt, cfg.unigram, cfg.total_len, seed)
    return tuple(toks[len(prompt):]), {"prompt": prompt}


def null_sample(cfg: ExperimentConfig, i: int):
    """Even indices: unwatermarked model text; odd indices: held-out human text."""
    ws = workspace(cfg)
    rng = sample_rng(cfg, 1, i)
    if i % 2 == 0:
        prompt = draw_prompt(ws, rng, cfg.prompt_len)
        toks = nucleus_generate(ws.lm, prompt, cfg.total_len, rng, cfg.nucleus_p)[len(prompt):]
        return toks, "model"
    start = int(rng.integers(0, len(ws.heldout_ids) - cfg.total_len))
    return ws.heldout_ids[start:start + cfg.total_len], "human"


def edited(cfg: ExperimentConfig, tokens, i: int):
    if cfg.edit_fraction <= 0:
        return list(tokens)
    ws = workspace(cfg)
    seed = int(sample_rng(cfg, 2, i).integers(2**63))
    return attacks.random_edit(tokens, cfg.edit_fraction, seed, ws.vocab.K)


def run_detector(cfg: ExperimentConfig, tokens) -> dict:
    ws = workspace(cfg)
    if cfg.scheme == "bileve":
        v = detect(tokens, ws.kp.pk, ws.keys, cfg.detect)
        return {
            "case": v.case.label,
            "signature_valid": v.signature_valid,
            "p_value": v.stats.p_value if v.stats else None,
            "cost": v.stats.cost if v.stats else None,
            "detected": v.case.attributed,
        }
    if cfg.scheme == "sls":
        ok = sls_verify(tokens, ws.kp.pk, cfg.sls)
        return {"signature_valid": ok, "detected": ok}
    z = unigram_zscore(tokens, cfg.unigram, ws.vocab.K)
    return {"z": z, "detected": bool(z > cfg.z_threshold)}


# -- metrics -------------------------------------------------------------------

@dataclass
class Metrics:
    TP: int
    FP: int
    TN: int
    FN: int

    @property
    def TPR(self) -> float:
        return self.TP / max(1, self.TP + self.FN)

    @property
    def FPR(self) -> float:
        return self.FP / max(1, self.FP + self.TN)

    @property
    def F1(self) -> float | None:
        if self.TP == 0 and self.FP == 0:
            return None
        return 2 * self.TP / (2 * self.TP + self.FP + self.FN)

    def as_dict(self) -> dict:
        return {"TP": self.TP, "FP": self.FP, "TN": self.TN, "FN": self.FN,
                "TPR": self.TPR, "FPR": self.FPR, "F1": self.F1}


def confusion(pos_flags, neg_flags) -> Metrics:
    tp = int(sum(bool(x) for x in pos_flags))
    fp = int(sum(bool(x) for x in neg_flags))
    return Metrics(tp, fp, len(neg_flags) - fp, len(pos_flags) - tp)


def fmt(x) -> str:
    return "/" if x is None else f"{x:.3f}"


@dataclass
class MetricsReport:
    config: ExperimentConfig
    metrics: Metrics
    levels: dict[str, Metrics] = field(default_factory=dict)
    samples: list[dict] = field(default_factory=list)
    runtime: float = 0.0

    @property
    def TPR(self):
        return self.metrics.TPR

    @property
    def FPR(self):
        return self.metrics.FPR

    @property
    def F1(self):
        return self.metrics.F1

    def records(self) -> list[dict]:
        head = {"record": "config", **asdict(self.config)}
        rows = [{"record": "sample", **s} for s in self.samples]
        tail = {"record": "metrics", **self.metrics.as_dict(),
                "levels": {k: v.as_dict() for k, v in self.levels.items()}}
        return [head, *rows, tail]

    def summary(self) -> str:
        c = self.config
        lines = [
            f"scheme={c.scheme} edit_fraction={c.edit_fraction} samples={c.sample_count} seed={c.seed}",
            f"{'level':<12}{'TPR':>8}{'FPR':>8}{'F1':>8}",
            f"{'detector':<12}{fmt(self.TPR):>8}{fmt(self.FPR):>8}{fmt(self.F1):>8}",
        ]
        for name, m in self.levels.items():
            lines.append(f"{name:<12}{fmt(m.TPR):>8}{fmt(m.FPR):>8}{fmt(m.F1):>8}")
        cases = {}
        for s in self.samples:
            if "case" in s:
                cases.setdefault(s["role"], {}).setdefault(s["case"], 0)
                cases[s["role"]][s["case"]] += 1
        for role, counts in cases.items():
            lines.append(f"{role} cases: " + ", ".join(f"{k}={v}" for k, v in sorted(counts.items())))
        lines.append(f"runtime {self.runtime:.1f}s")
        return "\n".join(lines)

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"metrics_{self.config.scheme}_edit{self.config.edit_fraction:g}.jsonl"
        with open(path, "w") as fh:
            for r in self.records():
                fh.write(json.dumps(r, sort_keys=True) + "\n")
        (out / path.with_suffix(".txt").name).write_text(self.summary() + "\n")
        return path


def positive_records(cfg: ExperimentConfig, progress=None) -> list[dict]:
    out = []
    for i in range(cfg.sample_count):
        toks, meta = watermarked_sample(cfg, i)
        toks = edited(cfg, toks, i)
        out.append({"role": "positive", "index": i, "source": cfg.scheme, **run_detector(cfg, toks)})
        if progress:
            progress(out[-1])
    return out


@lru_cache(maxsize=8)
def _negative_records(cfg: ExperimentConfig) -> tuple:
    recs = []
    for i in range(cfg.sample_count):
        toks, source = null_sample(cfg, i)
        recs.append({"role": "negative", "index": i, "source": source, **run_detector(cfg, toks)})
    return tuple(recs)


def negative_records(cfg: ExperimentConfig) -> list[dict]:
    """Detector outputs on the null samples; edits never touch negatives, so results are shared."""
    return [dict(r) for r in _negative_records(cfg.replace(edit_fraction=0.0))]


def eval_detection(cfg: ExperimentConfig, progress=None) -> MetricsReport:
    """Detect ``sample_count`` positives (optionally edited) and as many negatives."""
    t0 = time.perf_counter()
    pos = positive_records(cfg, progress)
    neg = negative_records(cfg)
    samples = pos + neg
    metrics = confusion([s["detected"] for s in pos], [s["detected"] for s in neg])
    levels = {}
    if cfg.scheme == "bileve":
        levels["signature"] = confusion([s["signature_valid"] for s in pos], [s["signature_valid"] for s in neg])
        levels["tampered"] = confusion([s["case"] == Case.TAMPERED_FROM_TARGET.label for s in pos],
                                       [s["case"] == Case.TAMPERED_FROM_TARGET.label for s in neg])
    for src in ("model", "human"):
        sub = [s["detected"] for s in neg if s["source"] == src]
        if sub:
            levels[f"null_{src}"] = confusion([s["detected"] for s in pos], sub)
    return MetricsReport(cfg, metrics, levels, samples, time.perf_counter() - t0)


# -- case studies --------------------------------------------------------------

def min_plain_cost(tokens, keys: KeyMatrix) -> float:
    return float(plain_costs_all_shifts(cost_matrix(keys.xi, tokens)).min())


def fig4(cfg: ExperimentConfig, count: int = 100) -> dict:
    """Best-shift plain alignment cost of watermarked vs. human/unwatermarked text."""
    ws = workspace(cfg)
    wm = [min_plain_cost(watermarked_sample(cfg, i, "bileve")[0], ws.keys) for i in range(count)]
    null = [min_plain_cost(null_sample(cfg, i)[0], ws.keys) for i in range(count)]
    se = float(np.std(null, ddof=1) / np.sqrt(len(null)))
    gap = float(np.mean(null) - np.mean(wm))
    return {"kind": "fig4", "watermarked": wm, "null": null, "null_se": se,
            "mean_watermarked": float(np.mean(wm)), "mean_null": float(np.mean(null)),
            "separation_in_se": gap / se if se > 0 else float("inf")}


def preserve_attack_segment(cfg: ExperimentConfig, tokens, segment: int, seed: int) -> list[int]:
    """Replace every signature-carrying token of ``segment`` with a same-bit token."""
    from .detector import split_segments

    ws = workspace(cfg)
    a, b = split_segments(len(tokens), cfg.segments)[segment]
    window = range(cfg.m, cfg.m + cfg.b)
    positions = [p for p in range(a, b) if p in window]
    return attacks.signature_preserving_replace(tokens, positions, ws.vocab.K, window, seed)


def fig5(cfg: ExperimentConfig, trial: int = 0, segment: int = 2) -> dict:
    """Per-segment local test before and after a signature-preserving attack on one segment."""
    ws = workspace(cfg)
    toks, _ = watermarked_sample(cfg, trial, "bileve")
    attacked = preserve_attack_segment(cfg, toks, segment, seed=trial)
    seed = cfg.null_seed
    before = local_alignment(toks, ws.keys, cfg.segments, cfg.N, seed)
    after = local_alignment(attacked, ws.keys, cfg.segments, cfg.N, seed)
    verdict = detect(attacked, ws.kp.pk, ws.keys, cfg.detect, owner_flags_suspicious=True)
    return {
        "kind": "fig5", "trial": trial, "attacked_segment": segment,
        "pvalues_before": [s.p_value for s in before], "pvalues_after": [s.p_value for s in after],
        "best10_before": [s.best_costs for s in before], "best10_after": [s.best_costs for s in after],
        "verdict": verdict.case.label, "signature_valid": verdict.signature_valid,
    }


def table4(cfg: ExperimentConfig, trial: int = 0, lexicon=None) -> dict:
    """Semantic manipulation of one Unigram and one bi-level sample with detector outcomes."""
    ws = workspace(cfg)
    lexicon = lexicon or attacks.SentimentLexicon.bundled()
    allowed = set(ws.vocab.tokens[2:])
    budget = attacks.EditBudget(0.1, 0.5)
    out = {"kind": "table4", "trial": trial}
    for scheme in ("unigram", "bileve"):
        c = cfg.replace(scheme=scheme)
        toks, _ = watermarked_sample(c, trial, scheme)
        words = [ws.vocab.tokens[t] for t in toks]

        def detector_fn(ws_words, c=c):
            return run_detector(c, ws.vocab.encode(ws_words))["detected"]

        row = {"before": " ".join(words), "sentiment_before": attacks.sentiment_score(words, lexicon),
               "detector_before": run_detector(c, toks)}
        try:
            att = attacks.semantic_manipulate(words, budget, lexicon, detector_fn, 8, allowed)
            row.update(success=True, after=" ".join(att), levenshtein=attacks.levenshtein(words, att),
                       sentiment_after=attacks.sentiment_score(att, lexicon),
                       detector_after=run_detector(c, ws.vocab.encode(att)))
        except attacks.AttackFailed:
            row.update(success=False)
        out[scheme] = row
    return out


def run_case_study(kind: str, cfg: ExperimentConfig = ExperimentConfig(), **kw) -> dict:
    if kind == "fig4":
        return fig4(cfg, **kw)
    if kind == "fig5":
        return fig5(cfg, **kw)
    if kind == "table4":
        return table4(cfg, **kw)
    raise ValueError(f"unknown case study {kind!r}")


def perplexities(cfg: ExperimentConfig, count: int = 100) -> dict[str, list[float]]:
    ws = workspace(cfg)
    out = {}
    for scheme in SCHEMES:
        vals = []
        for i in range(count):
            toks, meta = watermarked_sample(cfg, i, scheme)
            vals.append(perplexity(ws.lm, toks, meta["prompt"]))
        out[scheme] = vals
    return out
