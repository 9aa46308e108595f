import numpy as np
import pytest

from piat.core import CandidateSet, TokenDoc, TokenQuery
from piat.datagen import SynonymLexicon
from piat.model import ScoringModel


def random_model(rng, vocab_size=8, dim=3, scale=1.0) -> ScoringModel:
    return ScoringModel(
        scale * rng.normal(size=(vocab_size, dim)), scale * rng.normal(size=(dim, dim)), float(rng.normal())
    )


def random_docs(rng, n_docs, doc_len, vocab_size, prefix="d"):
    return tuple(
        TokenDoc(f"{prefix}{j}", tuple(int(t) for t in rng.integers(0, vocab_size, size=doc_len)))
        for j in range(n_docs)
    )


def random_candidates(rng, n_docs, doc_len, vocab_size, query_id="q") -> CandidateSet:
    docs = random_docs(rng, n_docs, doc_len, vocab_size)
    ranks = rng.permutation(n_docs) + 1
    return CandidateSet(query_id, docs, {d.doc_id: int(r) for d, r in zip(docs, ranks)})


def random_query(rng, vocab_size, length=2, query_id="q") -> TokenQuery:
    return TokenQuery(query_id, tuple(int(t) for t in rng.integers(0, vocab_size, size=length)))


def pair_lexicon(vocab_size) -> SynonymLexicon:
    """Tokens (0,1), (2,3), ... are synonym pairs."""
    return SynonymLexicon(tuple((t, t + 1) for t in range(0, vocab_size - 1, 2)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "ACCEPTANCE_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
