"""Dataset ingestion, faithfulness judging, and report generation.

The rule-based critic is a deterministic knowledge-coverage heuristic: a
response's hallucination probability is the fraction of its content
tokens that do not appear in the knowledge text. It is an offline
stand-in that keeps the whole evaluation path runnable without any
model, not an approximation of a trained classifier.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Protocol, Sequence, runtime_checkable

from .errors import ConfigError, DataError
from .textnorm import content_tokens

logger = logging.getLogger(__name__)

DATASET_FORMATS = ("faithdial_jsonl", "generic_jsonl")
CRITICS = ("rule", "remote")


@dataclass(frozen=True)
class DialogueExample:
    """One knowledge-grounded dialogue turn to respond to."""

    id: str
    knowledge: str
    history: tuple[str, ...] = ()
    reference: str | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("example id must be non-empty")
        if not self.knowledge:
            raise ValueError(f"example {self.id!r}: knowledge must be non-empty")


@dataclass(frozen=True)
class FaithfulnessJudgment:
    hallucination_prob: float
    label: str
    critic_tag: str

    def __post_init__(self) -> None:
        if not 0.0 <= self.hallucination_prob <= 1.0:
            raise ValueError(
                f"hallucination_prob must lie in [0, 1], got {self.hallucination_prob}"
            )
        if self.label not in ("faithful", "hallucinated"):
            raise ValueError(f"unknown label {self.label!r}")


@runtime_checkable
class FaithfulnessCritic(Protocol):
    tag: str

    def hallucination_prob(self, knowledge: str, response: str) -> float: ...


class RuleBasedCritic:
    """Knowledge-coverage heuristic critic; fully offline."""

    tag = "rule"

    def hallucination_prob(self, knowledge: str, response: str) -> float:
        response_tokens = content_tokens(response)
        if not response_tokens:
            # A response with no content tokens asserts nothing.
            return 0.0
        covered = response_tokens & content_tokens(knowledge)
        return 1.0 - len(covered) / len(response_tokens)


def _coerce_history(value: object) -> tuple[str, ...]:
    if value is None:
        return ()
    if isinstance(value, str):
        return (value,)
    if isinstance(value, list) and all(isinstance(u, str) for u in value):
        return tuple(value)
    raise ValueError("history must be a list of strings")


def _parse_example(rec: Mapping, fmt: str, lineno: int) -> DialogueExample:
    if fmt == "faithdial_jsonl":
        knowledge = rec.get("knowledge")
        history = _coerce_history(rec.get("history"))
        reference = rec.get("response")
        raw_id = rec.get("id", rec.get("dialog_idx"))
        ex_id = str(raw_id) if raw_id is not None else f"line-{lineno}"
    elif fmt == "generic_jsonl":
        knowledge = rec.get("knowledge")
        history = _coerce_history(rec.get("history"))
        reference = rec.get("reference")
        ex_id = str(rec.get("id", f"line-{lineno}"))
    else:
        raise ConfigError(f"unknown dataset format {fmt!r}")
    if not isinstance(knowledge, str) or not knowledge:
        raise ValueError("missing or empty knowledge field")
    if reference is not None and not isinstance(reference, str):
        raise ValueError("reference must be a string when present")
    return DialogueExample(
        id=ex_id, knowledge=knowledge, history=history, reference=reference
    )


def load_dataset(
    path: str,
    format: str = "faithdial_jsonl",
    max_turns: int = 1,
    strict: bool = True,
) -> Iterator[DialogueExample]:
    """Stream normalized examples from a JSONL dataset file.

    History is truncated to the most recent ``max_turns`` utterances.
    Malformed lines raise a line-numbered error under ``strict``;
    otherwise they are logged and skipped.
    """
    if format not in DATASET_FORMATS:
        raise ConfigError(f"format must be one of {DATASET_FORMATS}, got {format!r}")
    if max_turns < 0:
        raise ValueError("max_turns must be >= 0")
    seen_ids: set[str] = set()
    yielded = False
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                if not isinstance(rec, dict):
                    raise ValueError("record is not an object")
                example = _parse_example(rec, format, lineno)
                if example.id in seen_ids:
                    raise ValueError(f"duplicate example id {example.id!r}")
            except (ValueError, TypeError) as exc:
                msg = f"{path}:{lineno}: {exc}"
                if strict:
                    raise DataError(msg)
                logger.warning("skipping malformed line: %s", msg)
                continue
            seen_ids.add(example.id)
            if len(example.history) > max_turns:
                # history[-0:] would keep everything, so guard the zero case.
                kept = example.history[-max_turns:] if max_turns else ()
                example = DialogueExample(
                    id=example.id,
                    knowledge=example.knowledge,
                    history=kept,
                    reference=example.reference,
                )
            yielded = True
            yield example
    if not yielded:
        logger.warning("dataset %s yielded no examples", path)


def judge_faithfulness(
    knowledge: str,
    response: str,
    critic: FaithfulnessCritic | str = "rule",
    threshold: float = 0.5,
) -> FaithfulnessJudgment:
    """Score one response against its knowledge and attach a label.

    ``critic`` may be the string ``"rule"`` or any object satisfying
    :class:`FaithfulnessCritic`; a remote critic client plugs in here.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    if isinstance(critic, str):
        if critic in ("rule", "rule_based"):
            critic = RuleBasedCritic()
        else:
            raise ConfigError(
                f"critic {critic!r} needs a client object; pass the instance"
            )
    prob = float(critic.hallucination_prob(knowledge, response))
    label = "faithful" if prob < threshold else "hallucinated"
    return FaithfulnessJudgment(
        hallucination_prob=prob, label=label, critic_tag=critic.tag
    )


@dataclass(frozen=True)
class SelectionRecord:
    """One ranked pipeline output: the response chosen for an example."""

    example_id: str
    decode_method: str
    mitigation: str
    n_candidates: int
    text: str

    def __post_init__(self) -> None:
        if self.n_candidates < 1:
            raise ValueError("n_candidates must be >= 1")


GroupKey = tuple[str, str, int]


@dataclass(frozen=True)
class EvalRow:
    faithful_percent: float
    n_examples: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.faithful_percent <= 100.0:
            raise ValueError("faithful_percent must lie in [0, 100]")
        if self.n_examples <= 0:
            raise ValueError("n_examples must be positive")


@dataclass(frozen=True)
class EvalReport:
    """Faithful percentages grouped by decode method, mitigation and n."""

    rows: dict[GroupKey, EvalRow] = field(default_factory=dict)
    critic_tag: str = "rule"
    threshold: float = 0.5

    def to_mapping(self) -> dict:
        return {
            "critic_tag": self.critic_tag,
            "threshold": self.threshold,
            "rows": [
                {
                    "decode_method": k[0],
                    "mitigation": k[1],
                    "n_candidates": k[2],
                    "faithful_percent": row.faithful_percent,
                    "n_examples": row.n_examples,
                }
                for k, row in sorted(self.rows.items())
            ],
        }

    @classmethod
    def from_mapping(cls, data: Mapping) -> "EvalReport":
        try:
            rows = {
                (r["decode_method"], r["mitigation"], int(r["n_candidates"])): EvalRow(
                    faithful_percent=float(r["faithful_percent"]),
                    n_examples=int(r["n_examples"]),
                )
                for r in data["rows"]
            }
            return cls(
                rows=rows,
                critic_tag=data.get("critic_tag", "rule"),
                threshold=float(data.get("threshold", 0.5)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed evaluation report: {exc}")


def evaluate(
    selections: Iterable[SelectionRecord],
    examples: Iterable[DialogueExample],
    critic: FaithfulnessCritic | str = "rule",
    threshold: float = 0.5,
) -> EvalReport:
    """Judge every selected response and aggregate faithful percentages.

    Aggregation is a per-group counter merge, so the result does not
    depend on the order selections arrive in. Selections whose
    example_id has no matching example abort with the full orphan list.
    """
    by_id = {ex.id: ex for ex in examples}
    if isinstance(critic, str):
        judge_critic: FaithfulnessCritic | str = critic
    else:
        judge_critic = critic
    counts: dict[GroupKey, list[int]] = {}
    orphans: list[str] = []
    tag = "rule"
    # The same selected text recurs across sweep cells; judge each
    # (example, text) pair once so remote critics are not re-queried.
    cache: dict[tuple[str, str], FaithfulnessJudgment] = {}
    for sel in selections:
        example = by_id.get(sel.example_id)
        if example is None:
            orphans.append(sel.example_id)
            continue
        if orphans:
            continue
        cache_key = (sel.example_id, sel.text)
        judgment = cache.get(cache_key)
        if judgment is None:
            judgment = judge_faithfulness(
                example.knowledge, sel.text, critic=judge_critic, threshold=threshold
            )
            cache[cache_key] = judgment
        tag = judgment.critic_tag
        key = (sel.decode_method, sel.mitigation, sel.n_candidates)
        faithful_total = counts.setdefault(key, [0, 0])
        faithful_total[0] += int(judgment.label == "faithful")
        faithful_total[1] += 1
    if orphans:
        raise DataError(
            "ranked results reference unknown example ids: "
            + ", ".join(sorted(set(orphans)))
        )
    rows = {
        key: EvalRow(faithful_percent=100.0 * fa / tot, n_examples=tot)
        for key, (fa, tot) in counts.items()
    }
    return EvalReport(rows=rows, critic_tag=tag, threshold=threshold)


def ablation_sweep(
    model,
    examples: Sequence[DialogueExample],
    decode_methods: Sequence[str],
    mitigations: Sequence[str],
    n_list: Sequence[int] = (5, 10, 20),
    base_config=None,
    provider=None,
    critic: FaithfulnessCritic | str = "rule",
    threshold: float = 0.5,
    base_seed: int = 0,
) -> EvalReport:
    """Generate, rank and evaluate over every (decode, mitigation, n) cell.

    Candidate i is reproducible independently of the pool size, so each
    example is decoded once at max(n_list) and smaller pools are
    prefixes of that set. Baseline rows are therefore constant across n
    by construction.
    """
    from dataclasses import replace as _replace

    from .certainty import LexicalEntailmentProvider
    from .corpus_lm import ConditioningContext
    from .decoders import CandidateSet, DecodeConfig, sample_candidate_set
    from .ranking import select_response

    if not n_list:
        raise ValueError("n_list must be non-empty")
    if any(n < 1 for n in n_list):
        raise ValueError("every n in n_list must be >= 1")
    if base_config is None:
        base_config = DecodeConfig()
    if provider is None:
        provider = LexicalEntailmentProvider()
    # Examples are traversed twice (decode, then evaluate), so a one-shot
    # iterator such as the load_dataset stream must be materialized.
    examples = list(examples)
    n_max = max(n_list)
    selections: list[SelectionRecord] = []
    for example in examples:
        context = ConditioningContext(
            knowledge=example.knowledge, history=example.history
        )
        for method in decode_methods:
            config = _replace(base_config, method=method)
            full_set = sample_candidate_set(
                model,
                context,
                config,
                n_candidates=n_max,
                base_seed=base_seed,
                example_id=example.id,
            )
            for n in n_list:
                subset = CandidateSet(
                    example_id=full_set.example_id,
                    candidates=full_set.candidates[:n],
                    context=full_set.context,
                )
                for mitigation in mitigations:
                    chosen = select_response(subset, mitigation, provider=provider)
                    selections.append(
                        SelectionRecord(
                            example_id=example.id,
                            decode_method=method,
                            mitigation=mitigation,
                            n_candidates=n,
                            text=chosen.text,
                        )
                    )
    return evaluate(selections, examples, critic=critic, threshold=threshold)


def render_text_table(report: EvalReport) -> str:
    """Plain-text table: one row per (decode, mitigation), one column per n."""
    n_values = sorted({k[2] for k in report.rows})
    pairs = sorted({(k[0], k[1]) for k in report.rows})
    header = ["decode", "mitigation"] + [f"n={n}" for n in n_values]
    lines = [["-" if c is None else c for c in header]]
    for decode, mitigation in pairs:
        row = [decode, mitigation]
        for n in n_values:
            cell = report.rows.get((decode, mitigation, n))
            row.append(f"{cell.faithful_percent:.1f}" if cell else "-")
        lines.append(row)
    widths = [max(len(line[i]) for line in lines) for i in range(len(header))]
    rendered = []
    for i, line in enumerate(lines):
        rendered.append("  ".join(cell.ljust(w) for cell, w in zip(line, widths)))
        if i == 0:
            rendered.append("  ".join("-" * w for w in widths))
    return "\n".join(rendered) + "\n"


def render_csv(report: EvalReport) -> str:
    import csv
    import io

    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(
        ["decode_method", "mitigation", "n_candidates", "faithful_percent", "n_examples"]
    )
    for key, row in sorted(report.rows.items()):
        writer.writerow([key[0], key[1], key[2], row.faithful_percent, row.n_examples])
    return buf.getvalue()
