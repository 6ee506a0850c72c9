"""Certainty-based response ranking.

Given a set of independently sampled candidates, rank them by sequence-
level certainty and emit the highest-certainty one. Two rankers exist:
``p_crr`` orders by probabilistic certainty (mean log-prob), ``s_crr`` by
semantic certainty (agreement score). ``none`` is the unranked baseline:
the first sampled candidate passes through untouched.

Tie-breaking is deterministic: p_crr breaks exact ties by lower candidate
index; s_crr breaks agreement ties by higher probabilistic certainty,
then by lower index. The full ranking is returned, not just the winner,
so downstream analysis can look past the top slot.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .certainty import (
    CertaintyScores,
    EntailmentProvider,
    agreement_scores,
    entailment_matrix,
    probabilistic_certainty,
)
from .decoders import Candidate, CandidateSet
from .errors import ConfigError

MITIGATION_METHODS = ("none", "p_crr", "s_crr")


@dataclass(frozen=True)
class RankingResult:
    """Outcome of ranking one candidate set.

    ``ranking`` is a permutation of candidate indices, best first;
    ``selected_index`` is always ``ranking[0]``.
    """

    example_id: str
    method: str
    scores: tuple[CertaintyScores, ...]
    ranking: tuple[int, ...]
    selected_index: int

    def __post_init__(self):
        if sorted(self.ranking) != list(range(len(self.ranking))):
            raise ValueError("ranking must be a permutation of 0..N-1")
        if self.selected_index != self.ranking[0]:
            raise ValueError("selected_index must equal ranking[0]")


def rank_from_certainties(
    example_id: str,
    prob_certainties: Sequence[float],
    sem_certainties: Sequence[float] | None,
    method: str,
) -> RankingResult:
    """Build a ranking from precomputed certainty values.

    This is the single source of ordering truth: the convenience
    wrappers below and the pipeline's artifact-driven rank stage both
    delegate here, so stored and freshly computed certainties can never
    rank differently.
    """
    n = len(prob_certainties)
    if n < 1:
        raise ValueError("need at least one candidate to rank")
    if method == "none":
        return RankingResult(
            example_id=example_id,
            method="none",
            scores=tuple(CertaintyScores() for _ in range(n)),
            ranking=tuple(range(n)),
            selected_index=0,
        )
    if method == "p_crr":
        order = sorted(range(n), key=lambda i: (-prob_certainties[i], i))
        scores = tuple(CertaintyScores(probabilistic=p) for p in prob_certainties)
    elif method == "s_crr":
        if sem_certainties is None or len(sem_certainties) != n:
            raise ValueError("s_crr needs one semantic certainty per candidate")
        order = sorted(
            range(n),
            key=lambda i: (-sem_certainties[i], -prob_certainties[i], i),
        )
        scores = tuple(
            CertaintyScores(probabilistic=p, semantic=s)
            for p, s in zip(prob_certainties, sem_certainties)
        )
    else:
        raise ConfigError(f"unknown mitigation method {method!r}")
    return RankingResult(
        example_id=example_id,
        method=method,
        scores=scores,
        ranking=tuple(order),
        selected_index=order[0],
    )


def rank_p_crr(cset: CandidateSet) -> RankingResult:
    """Rank candidates by mean log-probability, descending."""
    certainties = [probabilistic_certainty(c) for c in cset.candidates]
    return rank_from_certainties(cset.example_id, certainties, None, "p_crr")


def rank_s_crr(
    cset: CandidateSet,
    provider: EntailmentProvider,
    parallelism: int = 8,
    include_self: bool = False,
) -> RankingResult:
    """Rank candidates by agreement score, descending.

    Agreement ties fall back to probabilistic certainty, then index, so a
    set of mutually identical candidates still has one deterministic
    winner.
    """
    matrix = entailment_matrix(cset, provider, parallelism=parallelism)
    semantic = agreement_scores(matrix, include_self=include_self)
    prob = [probabilistic_certainty(c) for c in cset.candidates]
    return rank_from_certainties(cset.example_id, prob, semantic, "s_crr")


def rank_none(cset: CandidateSet) -> RankingResult:
    """Baseline: keep sampling order, select the first candidate."""
    return rank_from_certainties(
        cset.example_id, [0.0] * len(cset), None, "none"
    )


def rank(
    cset: CandidateSet,
    method: str,
    provider: EntailmentProvider | None = None,
    parallelism: int = 8,
) -> RankingResult:
    if method == "none":
        return rank_none(cset)
    if method == "p_crr":
        return rank_p_crr(cset)
    if method == "s_crr":
        if provider is None:
            raise ConfigError("s_crr requires an entailment provider")
        return rank_s_crr(cset, provider, parallelism=parallelism)
    raise ConfigError(f"unknown mitigation method {method!r}")


def select_response(
    cset: CandidateSet,
    method: str,
    provider: EntailmentProvider | None = None,
) -> Candidate:
    """Return the candidate the chosen mitigation method would emit."""
    return cset.candidates[rank(cset, method, provider).selected_index]
