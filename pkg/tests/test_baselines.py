import numpy as np
import pytest

from bileve.baselines import (
    SlsConfig,
    UnigramConfig,
    green_list,
    nucleus_filter,
    nucleus_generate,
    sls_generate,
    sls_verify,
    unigram_distribution,
    unigram_generate,
    unigram_zscore,
)
from bileve.crypto import bit_table
from bileve.lm import Vocabulary, uniform_lm


def test_nucleus_filter():
    q = nucleus_filter([0.5, 0.3, 0.15, 0.05], 0.8)
    np.testing.assert_allclose(q, [0.625, 0.375, 0, 0])
    np.testing.assert_allclose(nucleus_filter([0.2, 0.8], 1.0), [0.2, 0.8])


def test_green_list_reproducible():
    cfg = UnigramConfig(seed=3)
    assert np.array_equal(green_list(1000, cfg), green_list(1000, cfg))
    assert green_list(1000, cfg).sum() == 500
    assert not np.array_equal(green_list(1000, cfg), green_list(1000, UnigramConfig(seed=4)))


def test_delta_zero_is_base_nucleus(small):
    green = green_list(small.vocab.K, UnigramConfig())
    for ctx in ([], small.ids[:1], small.ids[5:6]):
        p = small.lm.next_distribution(ctx)
        np.testing.assert_allclose(unigram_distribution(p, green, 0.0, 0.95), nucleus_filter(p, 0.95), atol=1e-12)


def test_large_delta_mostly_green(small):
    cfg = UnigramConfig(delta=10.0)
    green = green_list(small.vocab.K, cfg)
    for seed in range(3):
        toks = unigram_generate(small.lm, small.ids[:2], cfg, 200, seed)[2:]
        assert green[toks].mean() >= 0.95


def test_zscore_formula():
    cfg = UnigramConfig()
    K = 1000
    green = np.flatnonzero(green_list(K, cfg))
    red = np.flatnonzero(~green_list(K, cfg))
    assert unigram_zscore(green[:100].tolist(), cfg, K) == pytest.approx(10.0)
    assert unigram_zscore(green[:50].tolist() + red[:50].tolist(), cfg, K) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        unigram_zscore([], cfg, K)


def test_watermarked_sample_z_above_6(desk):
    cfg, ws = desk
    toks = unigram_generate(ws.lm, ws.corpus_ids[:2], cfg.unigram, 300, 1)[2:]
    assert unigram_zscore(toks, cfg.unigram, ws.vocab.K) > 6


def test_unwatermarked_z_small(small):
    cfg = UnigramConfig()
    zs = [unigram_zscore(nucleus_generate(small.lm, small.ids[:2], 300, np.random.default_rng(s))[2:], cfg,
                         small.vocab.K) for s in range(20)]
    assert max(abs(z) for z in zs) < 4


@pytest.fixture(scope="module")
def sls_tokens(small):
    return sls_generate(small.lm, small.ids[:2], SlsConfig(), small.kp, 12)[2:]


def test_sls_roundtrip(small, sls_tokens):
    assert len(sls_tokens) == 300
    assert sls_verify(sls_tokens, small.kp.pk, SlsConfig())


def test_sls_message_phase_is_plain_nucleus(small, sls_tokens):
    base = nucleus_generate(small.lm, small.ids[:2], 44, np.random.default_rng(12), 0.95)[2:]
    assert sls_tokens[:44] == base


def test_sls_deletion_breaks(small, sls_tokens):
    cut = sls_tokens[:100] + sls_tokens[101:]
    assert not sls_verify(cut, small.kp.pk, SlsConfig())


def test_sls_message_replacement_breaks(small, sls_tokens):
    bad = list(sls_tokens)
    bad[3] = (bad[3] + 1) % small.vocab.K
    assert not sls_verify(bad, small.kp.pk, SlsConfig())


def test_sls_insertion_breaks(small, sls_tokens):
    bad = sls_tokens[:200] + [sls_tokens[0]] + sls_tokens[200:]
    assert not sls_verify(bad, small.kp.pk, SlsConfig())


def test_sls_short_text(small, sls_tokens):
    assert not sls_verify(sls_tokens[:250], small.kp.pk, SlsConfig())


def test_sls_rejections_geometric(small):
    vocab = Vocabulary(("<bos>", "<unk>", *[f"w{i}" for i in range(998)]))
    lm = uniform_lm(vocab)
    stats = []
    for seed in range(4):
        sls_generate(lm, [], SlsConfig(), small.kp, seed, stats)
    assert len(stats) == 4 * 256
    # success probability is the 1-bit share of the nucleus support
    q = nucleus_filter(np.full(vocab.K, 1 / vocab.K), 0.95) > 0
    share = bit_table(vocab.K)[q].mean()
    # signature bits are fair coins, so the mean draw count is the average of 1/share and 1/(1 - share)
    expected = 0.5 / share + 0.5 / (1 - share)
    assert np.mean(stats) == pytest.approx(expected, abs=0.15)
    assert 1.8 <= np.mean(stats) <= 2.2


def test_sls_config_checks():
    with pytest.raises(ValueError):
        SlsConfig(b=128)
    with pytest.raises(ValueError):
        UnigramConfig(green_ratio=1.0)
