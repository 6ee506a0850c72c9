"""Decoding methods: beam search, top-k sampling, nucleus sampling with
top-k, and entropy-penalized (uncertainty-aware) beam search.

All decoders emit :class:`Candidate` objects whose ``token_logprobs`` are
the model's own log-probabilities at every realized token, taken from the
untruncated distribution. Sequence-level certainty is defined over the
model's probabilities, not over whatever renormalized proposal a sampler
happened to draw from, so the records must come from the former.

Determinism: sampling uses one PCG64 stream per candidate, seeded by
:func:`mix_seed`, a keyed blake2b hash of (base seed, example id,
candidate index). The same triple always reproduces the same candidate on
any platform. Beam variants use no randomness at all.

Beam scoring: hypotheses are pruned step-by-step on cumulative score; the
returned hypothesis maximizes the length-normalized (mean per-token)
score, with exact ties broken by the lexicographically smallest
token-index sequence. A hypothesis finishes at EOS or is finished forcibly
at ``max_new_tokens``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .corpus_lm import EMPTY_CONTEXT, EOS, ConditioningContext, NgramModel

METHODS = ("beam", "topk", "nucleus_topk", "uncertainty_beam")

_U64 = (1 << 64) - 1


def mix_seed(base_seed: int, example_id: str, candidate_index: int) -> int:
    """Derive the per-candidate RNG seed.

    blake2b(base_seed_u64_le || example_id_utf8 || 0x00 || index_u64_le),
    8-byte digest, read little-endian. Stable across platforms and runs.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update((base_seed & _U64).to_bytes(8, "little"))
    h.update(example_id.encode("utf-8"))
    h.update(b"\x00")
    h.update((candidate_index & _U64).to_bytes(8, "little"))
    return int.from_bytes(h.digest(), "little")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class DecodeConfig:
    """Decoding hyperparameters. Defaults follow the evaluation setup:
    beam width 5, temperature 1.0, top-k 50, top-p 0.9, entropy weight 0.2,
    at most 100 new tokens."""

    method: str = "nucleus_topk"
    beam_size: int = 5
    temperature: float = 1.0
    top_k: int = 50
    top_p: float = 0.9
    uncertainty_lambda: float = 0.2
    max_new_tokens: int = 100
    seed: int = 0
    # Non-standard extension: when > 0, beam methods inside
    # sample_candidate_set score against per-candidate temperature-perturbed
    # distributions so that repeated beam decodes differ. Off by default.
    beam_diversity: float = 0.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")
        if self.uncertainty_lambda < 0:
            raise ValueError("uncertainty_lambda must be >= 0")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")


@dataclass(frozen=True)
class Candidate:
    """One decoded response: realized tokens with their model log-probs."""

    tokens: tuple[str, ...]
    token_logprobs: tuple[float, ...]
    text: str
    method: str
    seed: int = 0
    index: int = 0

    def __post_init__(self):
        if len(self.tokens) != len(self.token_logprobs):
            raise ValueError("tokens and token_logprobs must have equal length")


@dataclass(frozen=True)
class CandidateSet:
    """N independently sampled candidates for one dialogue context."""

    example_id: str
    candidates: tuple[Candidate, ...]
    context: ConditioningContext = EMPTY_CONTEXT

    def __post_init__(self):
        if len(self.candidates) < 1:
            raise ValueError("a candidate set needs at least one candidate")
        for i, cand in enumerate(self.candidates):
            if cand.index != i:
                raise ValueError("candidate indices must run 0..N-1 in order")

    def __len__(self) -> int:
        return len(self.candidates)


# -- beam search ---------------------------------------------------------


def _entropy(dist: np.ndarray) -> float:
    """Shannon entropy in nats; dist is strictly positive by smoothing."""
    return float(-(dist * np.log(dist)).sum())


def _select_top(scores: np.ndarray, keep: int) -> np.ndarray:
    """Indices of the ``keep`` largest scores, exact ties included."""
    if len(scores) <= keep:
        return np.arange(len(scores))
    cutoff = np.partition(scores, len(scores) - keep)[len(scores) - keep]
    return np.flatnonzero(scores >= cutoff)


def _beam_decode(
    model: NgramModel,
    context: ConditioningContext,
    config: DecodeConfig,
    lam: float,
    method_tag: str,
    score_temperature: float = 1.0,
) -> Candidate:
    frame_ids = model._ids(model.context_frame(context))
    eos = model.vocab.index[EOS]
    width = config.beam_size

    # live hypothesis: (cumulative penalized score, token ids, raw logprobs)
    live: list[tuple[float, tuple[int, ...], tuple[float, ...]]] = [(0.0, (), ())]
    finished: list[tuple[float, tuple[int, ...], tuple[float, ...]]] = []

    def retire(total: float, ids: tuple[int, ...], lps: tuple[float, ...]) -> None:
        finished.append((total / len(ids), ids, lps))
        if len(finished) > width:
            finished.sort(key=lambda f: ((-f[0]), f[1]))
            del finished[width:]

    for step in range(config.max_new_tokens):
        if not live:
            break
        pool_scores: list[np.ndarray] = []
        pool_logs: list[np.ndarray] = []
        for total, ids, _ in live:
            dist = model.distribution_for_window(model._window(frame_ids + list(ids)))
            raw_log = np.log(dist)
            if score_temperature != 1.0:
                scoring = dist ** (1.0 / score_temperature)
                scoring /= scoring.sum()
            else:
                scoring = dist
            increment = np.log(scoring)
            if lam:
                increment = increment - lam * _entropy(scoring)
            pool_scores.append(total + increment)
            pool_logs.append(raw_log)
        flat_scores = np.concatenate(pool_scores)
        top = _select_top(flat_scores, width)
        v = len(model.vocab)
        expanded = []
        for flat_idx in top:
            hyp_idx, tok = divmod(int(flat_idx), v)
            total, ids, lps = live[hyp_idx]
            expanded.append(
                (
                    float(flat_scores[flat_idx]),
                    ids + (tok,),
                    lps + (float(pool_logs[hyp_idx][tok]),),
                )
            )
        expanded.sort(key=lambda h: (-h[0], h[1]))
        del expanded[width:]
        live = []
        last_step = step == config.max_new_tokens - 1
        for total, ids, lps in expanded:
            if ids[-1] == eos or last_step:
                retire(total, ids, lps)
            else:
                live.append((total, ids, lps))

    finished.sort(key=lambda f: (-f[0], f[1]))
    _, best_ids, best_lps = finished[0]
    tokens = tuple(model.vocab.token_of(i) for i in best_ids)
    return Candidate(
        tokens=tokens,
        token_logprobs=best_lps,
        text=model.detokenize(tokens),
        method=method_tag,
    )


def beam_search(
    model: NgramModel,
    context: ConditioningContext = EMPTY_CONTEXT,
    config: DecodeConfig = DecodeConfig(method="beam"),
) -> Candidate:
    """Deterministic beam search; returns the best finished hypothesis."""
    return _beam_decode(model, context, config, lam=0.0, method_tag="beam")


def uncertainty_aware_beam_search(
    model: NgramModel,
    context: ConditioningContext = EMPTY_CONTEXT,
    config: DecodeConfig = DecodeConfig(method="uncertainty_beam"),
) -> Candidate:
    """Beam search whose step score is ``log p(token) - lambda * H(dist)``.

    H is the Shannon entropy (nats) of the full next-token distribution at
    that step, so high-entropy continuations are penalized in proportion to
    ``uncertainty_lambda``. With lambda 0 this is exactly plain beam search.
    """
    return _beam_decode(
        model,
        context,
        config,
        lam=config.uncertainty_lambda,
        method_tag="uncertainty_beam",
    )


# -- truncated sampling ----------------------------------------------------


def _sorted_by_prob(dist: np.ndarray) -> np.ndarray:
    """Token ids ordered by descending probability, ties by ascending id."""
    return np.lexsort((np.arange(len(dist)), -dist))


def _truncated_support(
    dist: np.ndarray, top_k: int, top_p: float | None
) -> np.ndarray:
    """Support ids after the nucleus cutoff (if any) and top-k restriction.

    Both filters are prefixes of the probability-sorted vocabulary, so the
    intersection is simply the shorter prefix; it always contains the
    argmax token.
    """
    order = _sorted_by_prob(dist)
    keep = min(top_k, len(order))
    if top_p is not None:
        cumulative = np.cumsum(dist[order])
        nucleus = int(np.searchsorted(cumulative, top_p, side="left")) + 1
        keep = min(keep, nucleus, len(order))
    return order[:keep]


def _sample_step(
    dist: np.ndarray,
    rng: np.random.Generator,
    top_k: int,
    top_p: float | None,
    temperature: float,
) -> tuple[int, float]:
    """Draw one token; return (token id, log-prob under the full dist)."""
    support = _truncated_support(dist, top_k, top_p)
    weights = dist[support]
    if temperature != 1.0:
        weights = weights ** (1.0 / temperature)
    weights = weights / weights.sum()
    cumulative = np.cumsum(weights)
    u = rng.random()
    pick = min(int(np.searchsorted(cumulative, u, side="right")), len(support) - 1)
    token = int(support[pick])
    return token, float(np.log(dist[token]))


def _sampled_decode(
    model: NgramModel,
    context: ConditioningContext,
    config: DecodeConfig,
    rng: np.random.Generator,
    top_p: float | None,
    method_tag: str,
) -> Candidate:
    frame_ids = model._ids(model.context_frame(context))
    eos = model.vocab.index[EOS]
    ids: list[int] = []
    logprobs: list[float] = []
    for _ in range(config.max_new_tokens):
        dist = model.distribution_for_window(model._window(frame_ids + ids))
        token, lp = _sample_step(dist, rng, config.top_k, top_p, config.temperature)
        ids.append(token)
        logprobs.append(lp)
        if token == eos:
            break
    tokens = tuple(model.vocab.token_of(i) for i in ids)
    return Candidate(
        tokens=tokens,
        token_logprobs=tuple(logprobs),
        text=model.detokenize(tokens),
        method=method_tag,
    )


def topk_sample(
    model: NgramModel,
    context: ConditioningContext,
    config: DecodeConfig,
    rng: np.random.Generator,
) -> Candidate:
    """Sample restricted to the ``top_k`` most probable tokens per step."""
    return _sampled_decode(model, context, config, rng, top_p=None, method_tag="topk")


def nucleus_topk_sample(
    model: NgramModel,
    context: ConditioningContext,
    config: DecodeConfig,
    rng: np.random.Generator,
) -> Candidate:
    """Sample from the smallest mass >= ``top_p`` prefix, capped at top-k."""
    return _sampled_decode(
        model, context, config, rng, top_p=config.top_p, method_tag="nucleus_topk"
    )


# -- candidate sets ----------------------------------------------------------


def sample_candidate_set(
    model: NgramModel,
    context: ConditioningContext,
    config: DecodeConfig,
    n_candidates: int,
    base_seed: int,
    example_id: str = "",
) -> CandidateSet:
    """Decode ``n_candidates`` independent candidates for one context.

    Candidate ``i`` uses the RNG stream seeded by ``mix_seed(base_seed,
    example_id, i)``, so candidate i is the same no matter how many other
    candidates are requested. For the deterministic beam methods all
    candidates are identical unless ``beam_diversity`` is enabled.
    """
    if n_candidates < 1:
        raise ValueError("n_candidates must be >= 1")
    out: list[Candidate] = []
    for i in range(n_candidates):
        seed = mix_seed(base_seed, example_id, i)
        if config.method == "topk":
            cand = topk_sample(model, context, config, make_rng(seed))
        elif config.method == "nucleus_topk":
            cand = nucleus_topk_sample(model, context, config, make_rng(seed))
        elif config.method in ("beam", "uncertainty_beam"):
            lam = config.uncertainty_lambda if config.method == "uncertainty_beam" else 0.0
            if config.beam_diversity > 0:
                # Perturb the scoring temperature per candidate; recorded
                # log-probs still come from the unperturbed model.
                u = make_rng(seed).uniform(-1.0, 1.0)
                tau = float(np.exp(config.beam_diversity * u))
            else:
                tau = 1.0
            cand = _beam_decode(
                model, context, config, lam=lam, method_tag=config.method,
                score_temperature=tau,
            )
        else:  # pragma: no cover - DecodeConfig already validates
            raise ValueError(f"unknown method {config.method!r}")
        out.append(replace(cand, seed=seed, index=i))
    return CandidateSet(example_id=example_id, candidates=tuple(out), context=context)
