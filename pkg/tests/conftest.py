import numpy as np
import pytest

from policylab.corpus import Policy, RawDocument, Sentence
from policylab.embedding import WordVectorTable


@pytest.fixture
def line_table():
    """Five tokens laid out on a line; WMD between single-token sentences is
    the absolute coordinate difference."""
    xs = {"alpha": 0.0, "bravo": 10.0, "charlie": 10.5, "delta": 10.6, "echo": 11.0}
    return WordVectorTable(
        dimension=2,
        vectors={t: np.array([x, 0.0]) for t, x in xs.items()},
    )


@pytest.fixture
def line_policy():
    sentences = tuple(
        Sentence(i, tok, (i * 10, i * 10 + len(tok)))
        for i, tok in enumerate(["alpha", "bravo", "charlie", "delta", "echo"])
    )
    return Policy(doc_id="line", sentences=sentences)


def make_policy(doc_id, texts):
    pos = 0
    sentences = []
    for i, t in enumerate(texts):
        sentences.append(Sentence(i, t, (pos, pos + len(t))))
        pos += len(t) + 1
    return Policy(doc_id=doc_id, sentences=tuple(sentences))


@pytest.fixture
def make_policy_fixture():
    return make_policy
