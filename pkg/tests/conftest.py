import json
from pathlib import Path

import pytest

from crrkit import ConditioningContext, NgramModel, Vocabulary, train

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

LIGHTHOUSE_CORPUS = [
    "the lighthouse keeper lit the lamp at dusk",
    "the lighthouse stands on the rocky point",
    "the keeper climbed the spiral stairs",
    "the lamp guides ships past the rocky point",
    "ships sail past the lighthouse at night",
    "the harbor opens at dawn for fishing boats",
    "fishing boats unload their catch at the harbor",
    "the harbor master logs every boat by name",
    "gulls circle the fishing boats at dawn",
    "the catch is sold fresh at the harbor market",
]


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def word_model() -> NgramModel:
    return train(LIGHTHOUSE_CORPUS, order=2, alpha=0.1)


@pytest.fixture(scope="session")
def knowledge_context() -> ConditioningContext:
    return ConditioningContext(
        knowledge="the lighthouse keeper lit the lamp at dusk",
        history=("what does the keeper do",),
    )


@pytest.fixture(scope="session")
def fixture_examples(fixtures_dir) -> list[dict]:
    with open(fixtures_dir / "data.jsonl", "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def build_model(
    counts_by_token: dict[tuple[str, ...], dict[str, int]],
    alpha: float = 1e-300,
    extra_tokens: tuple[str, ...] = (),
) -> NgramModel:
    """Construct an order-2 model from explicit token-level counts.

    Keys are 1-token context windows; values map next token to count.
    Token names are translated to vocabulary ids. An alpha of 1e-300
    makes observed transitions carry probability 1.0 exactly in float64
    when they are the only continuation.
    """
    tokens: set[str] = set(extra_tokens)
    for ctx, table in counts_by_token.items():
        tokens.update(ctx)
        tokens.update(table)
    vocab = Vocabulary.from_corpus_tokens(tokens)
    counts = {
        tuple(vocab.id_of(t) for t in ctx): {
            vocab.id_of(t): c for t, c in table.items()
        }
        for ctx, table in counts_by_token.items()
    }
    return NgramModel(order=2, alpha=alpha, vocab=vocab, counts=counts)
