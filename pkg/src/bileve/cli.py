"""Command-line front end.

    bileve keygen --out kp/
    bileve generate --keys kp/ --n 300 --out record.json
    bileve detect --keys kp/ --record record.json
    bileve attack --kind random --record record.json --fraction 0.1 --out edited.json
    bileve bench --scheme bileve --edit 0.1 --out reports/
    bileve case-study --kind fig5 --out reports/
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import attacks, bench, plots
from .crypto import KeyMatrix, KeyPair, keygen, load_public_key, pk_fingerprint
from .detector import DetectConfig, detect
from .lm import ToyLM, build_vocab, train_markov
from .sampler import WraParams, draw_shift, generate_watermarked


MODEL_FILE = "model.txt"
KEYMATRIX_FILE = "keymatrix.txt"
DEFAULT_DETECT = DetectConfig()


def _load_model(path) -> ToyLM:
    if path:
        return ToyLM.load(path)
    ws = bench.workspace(bench.ExperimentConfig())
    return ws.lm


def _write_json(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)


def cmd_train_lm(args):
    text = Path(args.corpus).read_text(encoding="utf-8") if args.corpus else bench.bundled_text("corpus.txt")
    vocab = build_vocab(text, args.tokenizer)
    words = list(text) if args.tokenizer == "char" else text.split()
    lm = train_markov(vocab.encode(words), vocab, args.order, args.smoothing)
    lm.save(args.out)
    print(f"trained order-{args.order} model, K={vocab.K}, contexts={len(lm.table)} -> {args.out}")


def cmd_keygen(args):
    lm = _load_model(args.model)
    seed = args.seed.encode() if args.seed is not None else None
    kp = keygen(seed)
    kp.save(args.out)
    xi_seed = (args.seed + ":xi").encode() if args.seed is not None else np.random.default_rng().bytes(16)
    KeyMatrix(xi_seed, args.n_keys, lm.K).save(Path(args.out) / KEYMATRIX_FILE)
    print(f"wrote key pair {kp.fingerprint} and key matrix (n={args.n_keys}, K={lm.K}) to {args.out}")


def _keys(args, lm=None):
    d = Path(args.keys)
    keys = KeyMatrix.load(d / KEYMATRIX_FILE)
    if lm is not None and keys.K != lm.K:
        raise ValueError(f"key matrix K={keys.K} does not match model K={lm.K}")
    return keys


def cmd_generate(args):
    lm = _load_model(args.model)
    kp = KeyPair.load(args.keys)
    keys = _keys(args, lm)
    rng = np.random.default_rng(args.seed)
    prompt = lm.vocab.encode(args.prompt.split()) if args.prompt else []
    params = WraParams(args.gamma, args.m, args.b, args.n)
    shift = args.shift if args.shift is not None else draw_shift(rng, keys.n)
    rec = generate_watermarked(lm, prompt, keys, kp, params, shift)
    out = rec.to_dict(lm.vocab, kp.fingerprint)
    out["seed"] = args.seed
    _write_json(out, args.out)


def _read_tokens(args, lm):
    if args.record:
        rec = json.loads(Path(args.record).read_text())
        return rec["tokens"][rec.get("prompt_len", 0):]
    if args.text:
        return lm.vocab.encode(Path(args.text).read_text(encoding="utf-8").split())
    raise ValueError("one of --record or --text is required")


def cmd_detect(args):
    lm = _load_model(args.model)
    pk = load_public_key(Path(args.keys) / "public.key")
    keys = _keys(args, lm)
    tokens = _read_tokens(args, lm)
    if args.limit:
        tokens = tokens[:args.limit]
    cfg = DetectConfig(args.m, args.b, args.N, args.p_threshold, args.gamma_gap, args.band,
                       args.segments, prng_seed=args.seed)
    verdict = detect(tokens, pk, keys, cfg, owner_flags_suspicious=args.suspicious)
    report = verdict.to_dict(cfg, pk, keys)
    if args.out:
        _write_json(report, args.out)
    print(verdict.case.label)
    if verdict.stats:
        print(f"global p-value {verdict.stats.p_value:.4f} cost {verdict.stats.cost:.4f} shift {verdict.stats.best_shift}")
    if verdict.segment_pvalues:
        print("segment p-values " + " ".join(f"{p:.3f}" for p in verdict.segment_pvalues))


def cmd_attack(args):
    lm = _load_model(args.model)
    rec = json.loads(Path(args.record).read_text())
    plen = rec.get("prompt_len", 0)
    tokens = rec["tokens"][plen:]
    m, b = rec["params"]["m"], rec["params"]["b"]
    report = {"kind": args.kind, "record": args.record}
    if args.kind == "random":
        new = attacks.random_edit(tokens, args.fraction, args.seed, lm.K)
    elif args.kind == "preserve":
        positions = [int(p) for p in args.positions.split(",")] if args.positions else list(range(m, m + min(b, 6)))
        new = attacks.signature_preserving_replace(tokens, positions, lm.K, range(m, m + b), args.seed)
    else:
        lexicon = attacks.SentimentLexicon.bundled()
        pk = load_public_key(Path(args.keys) / "public.key")
        keys = _keys(args, lm)
        cfg = DetectConfig(m, b, prng_seed=args.seed)

        def detector_fn(words):
            return detect(lm.vocab.encode(words), pk, keys, cfg).case.attributed

        words = [lm.vocab.tokens[t] for t in tokens]
        budget = attacks.EditBudget(args.fraction, args.alpha)
        att = attacks.semantic_manipulate(words, budget, lexicon, detector_fn, args.max_rounds,
                                          set(lm.vocab.tokens[2:]))
        new = lm.vocab.encode(att)
        report["sentiment_before"] = attacks.sentiment_score(words, lexicon)
        report["sentiment_after"] = attacks.sentiment_score(att, lexicon)
    report["levenshtein"] = attacks.levenshtein(tokens, new)
    report["before"] = lm.vocab.decode(tokens)
    report["after"] = lm.vocab.decode(new)
    out = dict(rec, tokens=[int(t) for t in new], prompt_len=0, text=lm.vocab.decode(new), attack=report)
    _write_json(out, args.out)


def _bench_config(args) -> bench.ExperimentConfig:
    cfg = bench.load_config(args.config) if args.config else bench.ExperimentConfig()
    over = {}
    if args.scheme:
        over["scheme"] = args.scheme
    if args.edit is not None:
        over["edit_fraction"] = args.edit
    if args.samples is not None:
        over["sample_count"] = args.samples
    if args.seed is not None:
        over["seed"] = args.seed
    return cfg.replace(**over)


def cmd_bench(args):
    cfg = _bench_config(args)
    report = bench.eval_detection(cfg)
    path = report.write(args.out)
    out = Path(args.out)
    plots.metrics_bars({lvl: (m.TPR, m.FPR) for lvl, m in {"detector": report.metrics, **report.levels}.items()},
                       out / f"metrics_{cfg.scheme}_edit{cfg.edit_fraction:g}.png")
    pv = [s["p_value"] for s in report.samples if s.get("p_value") is not None and s["role"] == "negative"]
    if pv:
        plots.pvalue_histogram(pv, out / f"null_pvalues_{cfg.scheme}_edit{cfg.edit_fraction:g}.png")
    print(report.summary())
    print(f"records -> {path}")


def cmd_case_study(args):
    cfg = _bench_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "fig4":
        res = bench.fig4(cfg, args.count)
        plots.cost_histogram(res, out / "fig4_costs.png")
    elif args.kind == "fig5":
        res = bench.fig5(cfg, args.trial)
        plots.segment_panel(res, out / "fig5_segments.png")
    elif args.kind == "table4":
        res = bench.table4(cfg, args.trial)
    else:
        res = bench.perplexities(cfg, args.count)
        plots.perplexity_boxes(res, out / "perplexity.png")
        res = {"kind": "ppl", "median": {k: float(np.median(v)) for k, v in res.items()}, "values": res}
    res["config"] = asdict(cfg)
    with open(out / f"{args.kind}.jsonl", "w") as fh:
        fh.write(json.dumps(res, sort_keys=True) + "\n")
    brief = {k: v for k, v in res.items() if not isinstance(v, (list, dict)) or k in ("median",)}
    print(json.dumps(brief, indent=2, sort_keys=True))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bileve", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("train-lm", help="train the toy Markov model")
    s.add_argument("--corpus", help="UTF-8 text file (default: bundled corpus)")
    s.add_argument("--out", required=True)
    s.add_argument("--order", type=int, default=2)
    s.add_argument("--smoothing", type=float, default=1e-5)
    s.add_argument("--tokenizer", choices=("whitespace", "char"), default="whitespace")
    s.set_defaults(func=cmd_train_lm)

    s = sub.add_parser("keygen", help="create a signing key pair and a watermark key matrix")
    s.add_argument("--out", required=True)
    s.add_argument("--model")
    s.add_argument("--seed")
    s.add_argument("--n-keys", type=int, default=300)
    s.set_defaults(func=cmd_keygen)

    s = sub.add_parser("generate", help="generate a watermarked continuation")
    s.add_argument("--keys", required=True)
    s.add_argument("--model")
    s.add_argument("--n", type=int, default=300, help="tokens to generate")
    s.add_argument("--m", type=int, default=44)
    s.add_argument("--b", type=int, default=256)
    s.add_argument("--gamma", type=float, default=0.001)
    s.add_argument("--prompt", default="")
    s.add_argument("--shift", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("detect", help="verify signature and run alignment tests")
    s.add_argument("--keys", required=True)
    s.add_argument("--model")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--record")
    g.add_argument("--text")
    s.add_argument("--limit", type=int, help="only use the first LIMIT tokens")
    s.add_argument("--suspicious", action="store_true", help="owner flags the content")
    s.add_argument("--m", type=int, default=44)
    s.add_argument("--b", type=int, default=256)
    s.add_argument("--N", type=int, default=100)
    s.add_argument("--p-threshold", type=float, default=0.01)
    s.add_argument("--gamma-gap", type=float, default=DEFAULT_DETECT.gamma_gap)
    s.add_argument("--band", type=int, default=DEFAULT_DETECT.band)
    s.add_argument("--segments", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("attack", help="perturb a generation record")
    s.add_argument("--kind", choices=("random", "preserve", "semantic"), required=True)
    s.add_argument("--record", required=True)
    s.add_argument("--keys")
    s.add_argument("--model")
    s.add_argument("--fraction", type=float, default=0.1)
    s.add_argument("--alpha", type=float, default=0.5)
    s.add_argument("--max-rounds", type=int, default=8)
    s.add_argument("--positions", help="comma separated continuation positions")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_attack)

    for name, func in (("bench", cmd_bench), ("case-study", cmd_case_study)):
        s = sub.add_parser(name)
        s.add_argument("--config")
        s.add_argument("--scheme", choices=bench.SCHEMES)
        s.add_argument("--edit", type=float)
        s.add_argument("--samples", type=int)
        s.add_argument("--seed", type=int)
        s.add_argument("--out", default="reports")
        if name == "case-study":
            s.add_argument("--kind", choices=("fig4", "fig5", "table4", "ppl"), required=True)
            s.add_argument("--count", type=int, default=100)
            s.add_argument("--trial", type=int, default=0)
        s.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except (ValueError, OSError, KeyError, attacks.AttackFailed) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
