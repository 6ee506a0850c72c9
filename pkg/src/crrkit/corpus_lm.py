"""Order-n n-gram language model with add-alpha smoothing.

This is the token-probability source every decoder consumes: a model
trained from a plain text corpus (one document per line) that exposes the
full next-token conditional distribution and exact per-token sequence
log-probabilities. Word-level tokenization by default, character-level via
flag.

Knowledge/history conditioning is a deterministic framing convention: the
knowledge tokens, then each history utterance, are prepended to the
response prefix, each stream terminated by the reserved ``<sep>`` marker.

Models are immutable after training and safe to share across workers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, TrainingError
from .textnorm import detokenize, tokenize

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
SEP = "<sep>"

#: Reserved markers, always the first vocabulary entries in this order.
RESERVED = (BOS, EOS, UNK, SEP)

MODEL_SCHEMA = "crr/ngram-model"
MODEL_VERSION = "1.0"


@dataclass(frozen=True)
class Vocabulary:
    """Ordered token alphabet with reserved markers at fixed indices."""

    tokens: tuple[str, ...]
    index: dict[str, int] = field(repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("vocabulary tokens must be unique")
        for marker in RESERVED:
            if self.tokens.count(marker) != 1:
                raise ValueError(f"reserved marker {marker!r} must appear exactly once")
        object.__setattr__(self, "index", {t: i for i, t in enumerate(self.tokens)})

    @classmethod
    def from_corpus_tokens(cls, corpus_tokens: Iterable[str]) -> "Vocabulary":
        extra = sorted(set(corpus_tokens) - set(RESERVED))
        return cls(tokens=RESERVED + tuple(extra))

    def __len__(self) -> int:
        return len(self.tokens)

    def id_of(self, token: str) -> int:
        """Index of ``token``, mapping unknowns to the UNK marker."""
        return self.index.get(token, self.index[UNK])

    def token_of(self, idx: int) -> str:
        return self.tokens[idx]


@dataclass(frozen=True)
class ConditioningContext:
    """Knowledge text plus ordered dialogue history utterances."""

    knowledge: str = ""
    history: tuple[str, ...] = ()

    @classmethod
    def of(cls, knowledge: str = "", history: Sequence[str] = ()) -> "ConditioningContext":
        return cls(knowledge=knowledge, history=tuple(history))


EMPTY_CONTEXT = ConditioningContext()


@dataclass(frozen=True)
class NgramModel:
    """Immutable add-alpha smoothed n-gram model over a fixed vocabulary.

    ``counts`` maps a context window of ``order - 1`` token ids to the
    observed next-token count table. The conditional probability of token
    ``t`` after context ``c`` is ``(counts[c][t] + alpha) / (total(c) +
    alpha * V)``, which is strictly positive and sums to one over the
    vocabulary.
    """

    order: int
    alpha: float
    vocab: Vocabulary
    counts: dict[tuple[int, ...], dict[int, int]] = field(compare=False)
    tokenizer: str = "word"
    context_totals: dict[tuple[int, ...], int] = field(
        repr=False, compare=False, default_factory=dict
    )

    def __post_init__(self):
        if self.order < 1:
            raise ValueError(f"order must be >= 1, got {self.order}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        totals = {ctx: sum(table.values()) for ctx, table in self.counts.items()}
        object.__setattr__(self, "context_totals", totals)

    # -- token plumbing ----------------------------------------------------

    def tokenize(self, text: str) -> list[str]:
        return tokenize(text, self.tokenizer)

    def detokenize(self, tokens: Sequence[str]) -> str:
        """Display string for a token sequence, reserved markers stripped."""
        visible = [t for t in tokens if t not in RESERVED]
        return detokenize(list(visible), self.tokenizer)

    def context_frame(self, context: ConditioningContext) -> list[str]:
        """Tokens prepended to every response prefix for this context.

        Layout: knowledge tokens, ``<sep>``, then each history utterance
        followed by ``<sep>``. Empty context yields an empty frame.
        """
        frame: list[str] = []
        if context.knowledge:
            frame.extend(self.tokenize(context.knowledge))
            frame.append(SEP)
        for utterance in context.history:
            frame.extend(self.tokenize(utterance))
            frame.append(SEP)
        return frame

    def _ids(self, tokens: Sequence[str]) -> list[int]:
        return [self.vocab.id_of(t) for t in tokens]

    def _window(self, prefix_ids: Sequence[int]) -> tuple[int, ...]:
        """Last ``order - 1`` ids of the BOS-padded prefix."""
        need = self.order - 1
        if need == 0:
            return ()
        bos = self.vocab.index[BOS]
        padded = [bos] * need + list(prefix_ids)
        return tuple(padded[-need:])

    # -- probabilities -----------------------------------------------------

    def distribution_for_window(self, window: tuple[int, ...]) -> np.ndarray:
        """Smoothed next-token probability vector for a context window."""
        v = len(self.vocab)
        row = np.zeros(v, dtype=np.float64)
        table = self.counts.get(window)
        total = 0
        if table is not None:
            total = self.context_totals[window]
            for tok_id, count in table.items():
                row[tok_id] = count
        row += self.alpha
        row /= total + self.alpha * v
        return row


def train(
    corpus: Iterable[str],
    order: int,
    alpha: float,
    tokenizer: str = "word",
) -> NgramModel:
    """Estimate an :class:`NgramModel` from a stream of documents.

    Every document is wrapped as ``BOS^(order-1) .. tokens .. EOS`` and all
    order-length windows are counted. Raises :class:`TrainingError` when no
    document yields any tokens.
    """
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    if not alpha > 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")

    token_docs: list[list[str]] = []
    vocab_tokens: set[str] = set()
    for doc in corpus:
        toks = tokenize(doc, tokenizer)
        if not toks:
            continue
        token_docs.append(toks)
        vocab_tokens.update(toks)
    if not token_docs:
        raise TrainingError("corpus yielded no non-empty documents")

    vocab = Vocabulary.from_corpus_tokens(vocab_tokens)
    bos = vocab.index[BOS]
    eos = vocab.index[EOS]

    counts: dict[tuple[int, ...], dict[int, int]] = {}
    for toks in token_docs:
        seq = [bos] * (order - 1) + [vocab.id_of(t) for t in toks] + [eos]
        for i in range(order - 1, len(seq)):
            window = tuple(seq[i - order + 1 : i])
            table = counts.setdefault(window, {})
            table[seq[i]] = table.get(seq[i], 0) + 1

    return NgramModel(order=order, alpha=alpha, vocab=vocab, counts=counts, tokenizer=tokenizer)


def next_token_distribution(
    model: NgramModel,
    prefix: Sequence[str],
    context: ConditioningContext = EMPTY_CONTEXT,
) -> np.ndarray:
    """Probability vector over the vocabulary for the next token.

    The effective prefix is ``context_frame(context) + prefix``; unknown
    tokens map to UNK. The result is strictly positive and sums to one.
    """
    frame = model.context_frame(context)
    prefix_ids = model._ids(list(frame) + list(prefix))
    return model.distribution_for_window(model._window(prefix_ids))


def sequence_logprob(
    model: NgramModel,
    tokens: Sequence[str],
    context: ConditioningContext = EMPTY_CONTEXT,
) -> list[float]:
    """Natural-log probability of each token given everything before it.

    Entry ``i`` is ``ln P(tokens[i] | frame + tokens[:i])``. Smoothing
    guarantees every entry is finite.
    """
    if len(tokens) == 0:
        raise ValueError("tokens must be non-empty")
    frame = model.context_frame(context)
    ids = model._ids(list(frame) + list(tokens))
    n_frame = len(frame)
    out: list[float] = []
    for i in range(n_frame, len(ids)):
        dist = model.distribution_for_window(model._window(ids[:i]))
        out.append(math.log(dist[ids[i]]))
    return out


# -- persistence -------------------------------------------------------------


def save_model(model: NgramModel, path: str | Path) -> None:
    """Write the model as versioned JSON with a flattened count table."""
    flat = [
        {
            "context": list(ctx),
            "next": {str(tok): cnt for tok, cnt in sorted(table.items())},
        }
        for ctx, table in sorted(model.counts.items())
    ]
    payload = {
        "schema": MODEL_SCHEMA,
        "version": MODEL_VERSION,
        "order": model.order,
        "alpha": model.alpha,
        "tokenizer": model.tokenizer,
        "vocab": list(model.vocab.tokens),
        "counts": flat,
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> NgramModel:
    """Read a model written by :func:`save_model`. Rejects unknown majors."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc
    if payload.get("schema") != MODEL_SCHEMA:
        raise DataError(f"not an n-gram model file: {path}")
    major = str(payload.get("version", "")).split(".", 1)[0]
    if major != MODEL_VERSION.split(".", 1)[0]:
        raise DataError(f"unsupported model schema version {payload.get('version')!r}")
    counts = {
        tuple(entry["context"]): {int(t): int(c) for t, c in entry["next"].items()}
        for entry in payload["counts"]
    }
    return NgramModel(
        order=int(payload["order"]),
        alpha=float(payload["alpha"]),
        vocab=Vocabulary(tokens=tuple(payload["vocab"])),
        counts=counts,
        tokenizer=payload["tokenizer"],
    )
