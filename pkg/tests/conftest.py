from collections import Counter

import numpy as np
import pytest

from ctxslu.data import LabelSet
from ctxslu.synth import GeneratorConfig, generate_synthetic_corpus
from ctxslu.tokenizer import build_vocab


# criterion number -> (passed, one-line detail), filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


def small_corpus(n=12, seed=3, **kw):
    return generate_synthetic_corpus(GeneratorConfig(n_dialogues=n, seed=seed, **kw))


def vocab_for(dialogues, size=256):
    return build_vocab(Counter(w for d in dialogues for t in d.turns for w in t.tokens), size)


@pytest.fixture(scope="session")
def corpus():
    return small_corpus()


@pytest.fixture(scope="session")
def vocab(corpus):
    return vocab_for(corpus)


@pytest.fixture(scope="session")
def labels(corpus):
    return LabelSet.from_dialogues(corpus)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
