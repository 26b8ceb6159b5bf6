import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bileve.lm import (
    ToyLM,
    Vocabulary,
    build_vocab,
    next_distribution,
    perplexity,
    train_markov,
    uniform_lm,
)


def test_build_vocab_whitespace_and_char():
    assert build_vocab("a b a").tokens == ("<bos>", "<unk>", "a", "b")
    v = build_vocab("ab", tokenizer="char")
    assert v.tokens == ("<bos>", "<unk>", "a", "b") and v.K == 4


def test_build_vocab_empty():
    with pytest.raises(ValueError, match="empty corpus"):
        build_vocab("")
    with pytest.raises(ValueError):
        build_vocab("   ")


def test_encode_unknown_maps_to_unk():
    v = build_vocab("a b")
    assert v.encode(["a", "zzz"]) == [2, v.unk_id]
    assert v.decode([2, 3]) == "a b"


def _model(text, order=1, smoothing=0.0):
    v = build_vocab(text)
    return train_markov(v.encode(text.split()), v, order, smoothing), v


def test_counts_abab():
    lm, v = _model("a b a b")
    a, b = v.index["a"], v.index["b"]
    assert lm.next_distribution([a])[b] == 1.0


def test_counts_aaab():
    lm, v = _model("a a a b")
    a, b = v.index["a"], v.index["b"]
    p = lm.next_distribution([a])
    # transitions out of a: a->a twice, a->b once
    assert p[a] == pytest.approx(2 / 3) and p[b] == pytest.approx(1 / 3)


def test_large_smoothing_tends_to_uniform():
    lm, v = _model("a a a b", smoothing=1e9)
    np.testing.assert_allclose(lm.next_distribution([v.index["a"]]), np.full(v.K, 1 / v.K), atol=1e-8)


def test_near_one_mass_with_light_smoothing():
    lm, v = _model("a b a b", smoothing=0.01)
    assert lm.next_distribution([v.index["a"]])[v.index["b"]] > 0.98


def test_unseen_context_falls_back_to_smoothed_unigram():
    lm, v = _model("a a a b", order=2, smoothing=0.5)
    b = v.index["b"]
    p = lm.next_distribution([b, b])
    counts = np.array([0, 0, 3, 1], dtype=float)
    np.testing.assert_allclose(p, (counts + 0.5) / (4 + 0.5 * 4))


def test_next_distribution_deterministic_and_normalized():
    lm, v = _model("the cat sat on the mat .", smoothing=0.1)
    p1 = next_distribution(lm, [v.index["the"]])
    p2 = next_distribution(lm, [v.index["the"]])
    assert np.array_equal(p1, p2)
    assert p1.sum() == pytest.approx(1.0)


def test_bad_order_and_smoothing():
    v = build_vocab("a b")
    with pytest.raises(ValueError):
        train_markov([2, 3], v, order=0)
    with pytest.raises(ValueError):
        train_markov([2, 3], v, order=1, smoothing=-1)
    with pytest.raises(ValueError):
        train_markov([2, 99], v)


def test_uniform_perplexity_is_K():
    v = build_vocab("a b c d e")
    assert perplexity(uniform_lm(v), [2, 3, 4, 2]) == pytest.approx(v.K)


def test_deterministic_model_perplexity_one():
    lm, v = _model("a b a b a b")
    a, b = v.index["a"], v.index["b"]
    assert perplexity(lm, [b, a, b], context=[a]) == pytest.approx(1.0)


def test_perplexity_hand_summed():
    lm, v = _model("a b a b", smoothing=0.01)
    a, b = v.index["a"], v.index["b"]
    K = 4
    # P(a | <bos>): <bos> seen once, followed by a
    p_a = (1 + 0.01) / (1 + 0.01 * K)
    # P(b | a): a seen twice, followed by b both times
    p_b = (2 + 0.01) / (2 + 0.01 * K)
    expected = math.exp(-(math.log(p_a) + math.log(p_b)) / 2)
    assert perplexity(lm, [a, b]) == pytest.approx(expected, rel=1e-12)


def test_zero_likelihood_raises():
    lm, v = _model("a a a b")
    b = v.index["b"]
    # b never occurs as a context, so the unigram fallback applies, and <unk>
    # has zero count there when lambda = 0
    with pytest.raises(ValueError, match="zero likelihood"):
        perplexity(lm, [v.unk_id], context=[b])


def test_save_load_roundtrip(tmp_path):
    lm, v = _model("the cat sat on the mat . the dog sat .", order=2, smoothing=0.05)
    lm.save(tmp_path / "m.txt")
    lm2 = ToyLM.load(tmp_path / "m.txt")
    assert lm2.vocab.tokens == v.tokens and lm2.order == 2
    for ctx in ([], [2], [2, 3], [5, 4]):
        assert np.array_equal(lm.next_distribution(ctx), lm2.next_distribution(ctx))


def test_load_rejects_bad_header(tmp_path):
    (tmp_path / "m.txt").write_text("nope\n")
    with pytest.raises(ValueError):
        ToyLM.load(tmp_path / "m.txt")


@settings(max_examples=30, deadline=None)
@given(
    corpus=st.lists(st.integers(0, 5), min_size=2, max_size=40),
    seq=st.lists(st.integers(0, 5), min_size=1, max_size=10),
    perm_seed=st.integers(0, 2**32 - 1),
    order=st.integers(1, 3),
)
def test_perplexity_invariant_under_relabeling(corpus, seq, perm_seed, order):
    words = [f"w{i}" for i in range(6)]
    base = Vocabulary(("<bos>", "<unk>", *words))
    perm = np.random.default_rng(perm_seed).permutation(6)
    relabeled = Vocabulary(("<bos>", "<unk>", *[words[j] for j in perm]))

    def ppl(vocab):
        to_ids = lambda xs: vocab.encode([f"w{x}" for x in xs])
        lm = train_markov(to_ids(corpus), vocab, order, 0.1)
        return perplexity(lm, to_ids(seq))

    assert ppl(base) == pytest.approx(ppl(relabeled), rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(2, 7), min_size=1, max_size=30), st.floats(1e-4, 5.0))
def test_distributions_are_normalized(corpus, lam):
    v = Vocabulary(("<bos>", "<unk>", *[f"w{i}" for i in range(6)]))
    lm = train_markov(corpus, v, 2, lam)
    for ctx in ([], corpus[:1], corpus[-2:]):
        p = lm.next_distribution(ctx)
        assert p.min() > 0 and p.sum() == pytest.approx(1.0)
