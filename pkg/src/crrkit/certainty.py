"""Sequence-level certainty measures over candidate sets.

Two measures are computed per candidate:

* probabilistic certainty: the arithmetic mean of the candidate's
  per-token natural-log probabilities;
* semantic certainty: the agreement score, i.e. the summed probability
  that the candidate entails each of the other candidates in its set,
  obtained from an entailment provider.

Entailment is directional: entry (i, j) scores candidate i as premise and
candidate j as hypothesis, and the agreement sum for candidate i runs over
row i with the self-pair excluded (a flag restores self-inclusion for
comparison). The full matrix is kept so alternative aggregations can be
studied without re-scoring.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .decoders import Candidate, CandidateSet
from .errors import ProviderContractError
from .textnorm import content_tokens


@dataclass(frozen=True)
class CertaintyScores:
    """Per-candidate certainty values; either side may be absent."""

    probabilistic: float | None = None
    semantic: float | None = None


@runtime_checkable
class EntailmentProvider(Protocol):
    """Maps an ordered (premise, hypothesis) text pair to a probability."""

    tag: str

    def score(self, premise: str, hypothesis: str) -> float: ...


@dataclass(frozen=True)
class EntailmentMatrix:
    """Pairwise entailment probabilities over one candidate set."""

    entries: np.ndarray
    provider_tag: str

    def __post_init__(self):
        arr = np.asarray(self.entries, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError("entailment matrix must be square")
        object.__setattr__(self, "entries", arr)

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def probabilistic_certainty(candidate: Candidate) -> float:
    """Arithmetic mean of the candidate's per-token log-probabilities."""
    if not candidate.token_logprobs:
        raise ValueError("candidate has no tokens")
    return math.fsum(candidate.token_logprobs) / len(candidate.token_logprobs)


def lexical_entailment_proxy(premise: str, hypothesis: str) -> float:
    """Offline entailment stand-in: hypothesis content-token coverage.

    Fraction of the hypothesis's content tokens that also occur in the
    premise. A hypothesis with no content tokens scores 1.0 by convention
    (nothing asserted, nothing to contradict).
    """
    hyp = content_tokens(hypothesis)
    if not hyp:
        return 1.0
    return len(hyp & content_tokens(premise)) / len(hyp)


class LexicalEntailmentProvider:
    """Deterministic local provider built on the lexical proxy."""

    tag = "lexical"

    def score(self, premise: str, hypothesis: str) -> float:
        return lexical_entailment_proxy(premise, hypothesis)

    def score_batch(self, pairs: Sequence[tuple[str, str]]) -> list[float]:
        return [self.score(p, h) for p, h in pairs]


def entailment_matrix(
    cset: CandidateSet,
    provider: EntailmentProvider,
    parallelism: int = 8,
) -> EntailmentMatrix:
    """Score every ordered candidate pair, diagonal included.

    Providers exposing ``score_batch`` are called once with the row-major
    pair list; otherwise single-pair calls fan out over a thread pool with
    at most ``parallelism`` in flight. Results are assembled by pair index
    either way, so the matrix does not depend on completion order.
    """
    n = len(cset)
    texts = [c.text for c in cset.candidates]
    pairs = [(texts[i], texts[j]) for i in range(n) for j in range(n)]
    if hasattr(provider, "score_batch"):
        values = list(provider.score_batch(pairs))
    elif parallelism > 1 and n > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            values = list(pool.map(lambda pr: provider.score(*pr), pairs))
    else:
        values = [provider.score(p, h) for p, h in pairs]
    for k, value in enumerate(values):
        if not 0.0 <= value <= 1.0:
            i, j = divmod(k, n)
            raise ProviderContractError(
                f"provider {provider.tag!r} returned {value!r} for pair ({i}, {j}); "
                "entailment probabilities must lie in [0, 1]"
            )
    entries = np.array(values, dtype=np.float64).reshape(n, n)
    return EntailmentMatrix(entries=entries, provider_tag=provider.tag)


def agreement_scores(
    matrix: EntailmentMatrix, include_self: bool = False
) -> list[float]:
    """Summed entailment of each candidate with the other candidates.

    Row sums of the matrix, excluding the diagonal self-pair unless
    ``include_self`` is set. A singleton set gets score 0 (nothing to
    agree with).
    """
    entries = matrix.entries
    sums = entries.sum(axis=1)
    if not include_self:
        sums = sums - np.diagonal(entries)
    return [float(s) for s in sums]
