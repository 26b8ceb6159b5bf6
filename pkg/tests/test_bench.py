import json

import pytest

from bileve import bench
from bileve.bench import ExperimentConfig, Metrics, confusion, load_config


def test_metrics_hand_computed():
    # 10 positives, 10 negatives: 8 hits, 1 false alarm
    m = confusion([1] * 8 + [0] * 2, [1] + [0] * 9)
    assert (m.TP, m.FP, m.TN, m.FN) == (8, 1, 9, 2)
    assert m.TPR == 0.8 and m.FPR == 0.1
    assert m.F1 == pytest.approx(16 / 19)


def test_metrics_perfect_and_undefined():
    m = confusion([True] * 10, [False] * 10)
    assert (m.TPR, m.FPR, m.F1) == (1.0, 0.0, 1.0)
    none = confusion([False] * 10, [False] * 10)
    assert none.TPR == 0.0 and none.F1 is None
    assert bench.fmt(none.F1) == "/"


def test_f1_matches_rate_form():
    # with as many negatives as positives, 2TPR / (2TPR + FPR + FNR) equals the count form
    m = Metrics(TP=6, FP=3, TN=7, FN=4)
    rate = 2 * m.TPR / (2 * m.TPR + m.FPR + (1 - m.TPR))
    assert m.F1 == pytest.approx(rate)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(sample_count=0)
    with pytest.raises(ValueError):
        ExperimentConfig(scheme="other")
    with pytest.raises(ValueError):
        ExperimentConfig(m=100)


def test_load_config(tmp_path):
    p = tmp_path / "exp.cfg"
    p.write_text("scheme = sls\nedit_fraction = 0.1\nsample_count = 5\nband = none\nseed = 9\n")
    cfg = load_config(p)
    assert cfg == ExperimentConfig(scheme="sls", edit_fraction=0.1, sample_count=5, band=None, seed=9)
    p.write_text("[experiment]\nbogus = 1\n")
    with pytest.raises(ValueError, match="unknown config key"):
        load_config(p)


def test_report_reproducible(tmp_path):
    cfg = ExperimentConfig(scheme="unigram", sample_count=4, edit_fraction=0.1)
    a = bench.eval_detection(cfg).write(tmp_path / "a")
    b = bench.eval_detection(cfg).write(tmp_path / "b")
    assert a.read_bytes() == b.read_bytes()
    rows = [json.loads(line) for line in a.read_text().splitlines()]
    assert rows[0]["record"] == "config" and rows[0]["seed"] == cfg.seed
    for key in ("key_seed", "xi_seed", "green_seed", "null_seed"):
        assert key in rows[0]
    assert rows[-1]["record"] == "metrics"
    assert sum(r["record"] == "sample" for r in rows) == 8
    assert "runtime" not in rows[-1]
    assert (tmp_path / "a" / a.with_suffix(".txt").name).exists()


def test_null_sources_alternate():
    cfg = ExperimentConfig()
    assert [bench.null_sample(cfg, i)[1] for i in range(4)] == ["model", "human", "model", "human"]
    assert len(bench.null_sample(cfg, 1)[0]) == cfg.total_len


def test_sample_determinism():
    cfg = ExperimentConfig()
    a, _ = bench.watermarked_sample(cfg, 3)
    b, _ = bench.watermarked_sample(cfg, 3)
    assert a == b and len(a) == 300
    assert bench.edited(cfg.replace(edit_fraction=0.1), a, 3) == bench.edited(cfg.replace(edit_fraction=0.1), b, 3)
    assert bench.watermarked_sample(cfg.replace(seed=1), 3)[0] != a


def test_unknown_case_study():
    with pytest.raises(ValueError):
        bench.run_case_study("fig9")
