import numpy as np
import pytest
from hypothesis import settings

from notebert.encoder import EncoderConfig, init_params
from notebert.synth import synthetic_sentences
from notebert.tokenizer import build_vocab

settings.register_profile("default", max_examples=100, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def sentences():
    return synthetic_sentences(60, seed=5)


@pytest.fixture(scope="session")
def vocab(sentences):
    return build_vocab(sentences, 300)


@pytest.fixture
def toy_config(vocab):
    return EncoderConfig(num_layers=2, num_heads=2, model_dim=16, ff_dim=32, max_seq_len=32,
                         vocab_size=len(vocab), dropout_rate=0.0)


@pytest.fixture
def toy_params(toy_config):
    return init_params(toy_config, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance():
    """Record one PASS/FAIL line per criterion; the lines are printed in the terminal summary."""
    def record(number: int, passed: bool, detail: str) -> bool:
        ACCEPTANCE_LINES.append(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
        print(ACCEPTANCE_LINES[-1])
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
