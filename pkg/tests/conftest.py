import numpy as np
import pytest
import torch

from augrec.acoustic import AcousticModel
from augrec.classifier import ClassifierConfig, train_classifier
from augrec.toyworld import default_impairment, generate_corpus, make_language
from augrec.training import PRETRAIN, TrainConfig, pretrain_tts

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def lang():
    return make_language(0)


@pytest.fixture(scope="session")
def impairment(lang):
    return default_impairment(lang, target_speaker=8)


@pytest.fixture(scope="session")
def clean_corpus(lang):
    return generate_corpus(lang, list(range(8)), 200, seed=0, prefix="pre")


@pytest.fixture(scope="session")
def small_corpus(lang):
    return generate_corpus(lang, list(range(8)), 6, seed=1, prefix="small")


@pytest.fixture(scope="session")
def target_corpus(lang, impairment):
    return generate_corpus(lang, [8], 12, impairment, seed=2, prefix="tgt")


@pytest.fixture(scope="session")
def classifier(clean_corpus):
    """Default-configuration classifier on the default clean toy corpus."""
    return train_classifier(clean_corpus, ClassifierConfig(), seed=11)


@pytest.fixture(scope="session")
def oracle(clean_corpus):
    return train_classifier(clean_corpus, ClassifierConfig(), seed=12)


@pytest.fixture(scope="session")
def pretrained(small_corpus):
    model, _, _ = pretrain_tts(small_corpus, TrainConfig.for_stage(PRETRAIN, epochs=2, batch_size=8), seed=0,
                               n_speakers=9)
    return model


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""

    def record(number, name, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number} ({name}): {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
