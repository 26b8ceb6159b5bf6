import pytest

from bileve import bench
from bileve.crypto import KeyMatrix, keygen
from bileve.lm import build_vocab, train_markov
from bileve.sampler import WraParams


class Small:
    """A ~1k-token model trained on a slice of the bundled corpus, for fast unit tests."""

    def __init__(self):
        words = bench.bundled_text("corpus.txt").split()[:6000]
        text = " ".join(words)
        self.vocab = build_vocab(text)
        self.ids = self.vocab.encode(words)
        self.lm = train_markov(self.ids, self.vocab, order=1, smoothing=0.01)
        self.kp = keygen(b"unit-test-signer")
        self.keys = KeyMatrix(b"unit-test-xi", 300, self.vocab.K)
        # gamma * K ~ 10: the key term reorders roughly the top ten ranks,
        # as gamma = 0.001 does at the desk-scale K of ~10k
        self.params = WraParams(gamma_sample=0.01)


@pytest.fixture(scope="session")
def small():
    return Small()


@pytest.fixture(scope="session")
def desk():
    """The default desk-scale configuration and its workspace."""
    cfg = bench.ExperimentConfig()
    return cfg, bench.workspace(cfg)


CRITERIA: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> str:
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    CRITERIA[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])
