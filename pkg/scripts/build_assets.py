"""Rebuild the bundled text assets under src/bileve/data/.

Source: the ``pattern3`` 3.0.0 sdist (BSD), which ships the Pang & Lee
movie-review polarity corpus, a PDDL adjective sentiment lexicon and the
WordNet 3 database files.

    pip download --no-deps --no-binary :all: pattern3==3.0.0
    tar xzf pattern3-3.0.0.tar.gz
    python scripts/build_assets.py pattern3-3.0.0
"""
import csv
import re
import sys
import xml.etree.ElementTree as ET
from collections import defaultdict
from pathlib import Path

TRAIN_REVIEWS = range(0, 95)
HELDOUT_REVIEWS = range(1000, 1040)

# hand-written identity substitutions: neutral subject -> derogatory stand-in
SUBSTITUTIONS = [
    ("audience", "idiots"),
    ("audiences", "idiots"),
    ("critics", "morons"),
    ("director", "hack"),
    ("actors", "amateurs"),
    ("actor", "amateur"),
    ("fans", "losers"),
    ("people", "fools"),
    ("man", "fool"),
    ("woman", "fool"),
    ("kids", "brats"),
    ("family", "mob"),
    ("friends", "thugs"),
    ("hero", "villain"),
    ("star", "disaster"),
    ("film", "mess"),
    ("movie", "disaster"),
    ("story", "mess"),
    ("love", "hate"),
]


def build_corpus(root, out):
    path = root / "test" / "corpora" / "polarity-en-pang&lee1.csv"
    with open(path, encoding="utf-8-sig") as fh:
        rows = list(csv.reader(fh))
    for name, idx in (("corpus.txt", TRAIN_REVIEWS), ("heldout.txt", HELDOUT_REVIEWS)):
        text = "\n".join(" ".join(rows[i][1].split()) for i in idx)
        (out / name).write_text(text + "\n", encoding="utf-8")


def build_lexicon(root, out):
    tree = ET.parse(root / "pattern3" / "text" / "en" / "en-sentiment.xml")
    scores = defaultdict(list)
    for w in tree.getroot().iter("word"):
        form = w.get("form", "").lower()
        if re.fullmatch(r"[a-z]+(-[a-z]+)?", form):
            scores[form].append(float(w.get("polarity", 0.0)))
    lex = {}
    for form, vals in scores.items():
        s = sum(vals) / len(vals)
        if abs(s) >= 0.05:
            lex[form] = round(max(-1.0, min(1.0, s)), 4)
    for a, b in SUBSTITUTIONS:
        # derogatory substitutes need a negative score to register at all
        lex.setdefault(b, -0.6)
    with open(out / "lexicon.tsv", "w", encoding="utf-8") as fh:
        for form in sorted(lex):
            fh.write(f"{form}\t{lex[form]}\n")
    return lex


def build_antonyms(root, out, lex):
    data = root / "pattern3" / "text" / "en" / "wordnet" / "dict" / "data.adj"
    synsets = {}
    lines = [l for l in data.read_text(encoding="latin-1").splitlines() if l and not l.startswith(" ")]
    for line in lines:
        head = line.split(" | ")[0].split()
        offset, n_words = head[0], int(head[3], 16)
        words = [re.sub(r"\(.*\)$", "", head[4 + 2 * i]).lower() for i in range(n_words)]
        synsets[offset] = (words, head)
    pairs = set()
    for offset, (words, head) in synsets.items():
        i = 4 + 2 * len(words)
        n_ptr = int(head[i])
        for k in range(n_ptr):
            sym, tgt, pos, st = head[i + 1 + 4 * k: i + 5 + 4 * k]
            if sym != "!" or tgt not in synsets:
                continue
            src_w = words[int(st[:2], 16) - 1]
            dst_w = synsets[tgt][0][int(st[2:], 16) - 1]
            if src_w in lex and dst_w in lex and lex[src_w] * lex[dst_w] < 0:
                pairs.add((src_w, dst_w))
                pairs.add((dst_w, src_w))
    with open(out / "antonyms.tsv", "w", encoding="utf-8") as fh:
        for a, b in sorted(pairs):
            fh.write(f"{a}\t{b}\n")
    with open(out / "substitutions.tsv", "w", encoding="utf-8") as fh:
        for a, b in SUBSTITUTIONS:
            fh.write(f"{a}\t{b}\n")


def main(argv):
    root = Path(argv[1])
    out = Path(__file__).resolve().parents[1] / "src" / "bileve" / "data"
    out.mkdir(parents=True, exist_ok=True)
    build_corpus(root, out)
    lex = build_lexicon(root, out)
    build_antonyms(root, out, lex)


if __name__ == "__main__":
    main(sys.argv)
