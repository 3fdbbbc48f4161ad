import sys

import numpy as np
import pytest

from casegraph.ner import NerConfig, train_ner
from casegraph.pipeline import CaseModels, example_rules, generate_synthetic_corpus
from casegraph.relation import ReConfig, generate_candidates, train_re
from casegraph.schema import example_schema


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def schema():
    return example_schema()


@pytest.fixture(scope="session")
def rules():
    return example_rules()


@pytest.fixture(scope="session")
def small_corpus(schema):
    return generate_synthetic_corpus(7, 60, schema)


@pytest.fixture(scope="session")
def tiny_models(small_corpus, schema):
    """Small, quickly trained taggers: good enough to exercise the pipeline,
    not to measure accuracy."""
    tr, _ = small_corpus.split(0.8)
    ner = train_ner(small_corpus.ner_sentences(tr), schema.tagset(), NerConfig(lr=5e-3, epochs=3, hidden_dim=32, emb_dim=32))
    cands = generate_candidates(small_corpus.re_sentences(tr), schema, "train", 0.5, np.random.default_rng(0))
    re_model = train_re(cands, schema, ReConfig(lr=1e-3, epochs=3, rel_emb_dim=32, type_emb_dim=16, emb_dim=32))
    return CaseModels(ner, re_model)


def pytest_terminal_summary(terminalreporter):
    lines = getattr(sys.modules.get("test_acceptance"), "REPORT", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
