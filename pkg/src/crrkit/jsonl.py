"""Versioned JSONL artifacts shared between pipeline stages.

Every artifact file starts with a header line naming its schema kind and
version, e.g. ``{"schema": "crr/candidates", "version": "1.0"}``.
Readers check the kind and reject unknown major versions. Records are
serialized with sorted keys so identical inputs produce bytewise
identical files.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Iterator

from .corpus_lm import ConditioningContext
from .decoders import Candidate, CandidateSet
from .errors import DataError
from .ranking import RankingResult

ARTIFACT_VERSION = "1.0"

CANDIDATES_KIND = "candidates"
SCORED_KIND = "scored"
RANKED_KIND = "ranked"


def _dump(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False)


def schema_name(kind: str) -> str:
    return f"crr/{kind}"


def _major(version: str) -> int:
    try:
        return int(str(version).split(".", 1)[0])
    except ValueError:
        raise DataError(f"unparseable artifact version {version!r}")


def write_artifact(path: str | Path, kind: str, records: Iterable[dict]) -> int:
    """Write a header plus one record per line; returns the record count."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_dump({"schema": schema_name(kind), "version": ARTIFACT_VERSION}))
        fh.write("\n")
        for rec in records:
            fh.write(_dump(rec))
            fh.write("\n")
            n += 1
    return n


def sniff_kind(path: str | Path) -> str:
    """Read just the header and return the artifact kind, e.g. 'scored'."""
    with open(path, "r", encoding="utf-8") as fh:
        header_line = fh.readline()
    try:
        header = json.loads(header_line)
        schema = header["schema"]
    except (json.JSONDecodeError, TypeError, KeyError) as exc:
        raise DataError(f"{path}:1: unreadable artifact header: {exc}")
    prefix = "crr/"
    if not isinstance(schema, str) or not schema.startswith(prefix):
        raise DataError(f"{path}: unrecognized schema {schema!r}")
    return schema[len(prefix) :]


def read_artifact(path: str | Path, kind: str) -> Iterator[dict]:
    """Stream records from an artifact, validating the header first."""
    with open(path, "r", encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise DataError(f"{path}: missing artifact header line")
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:1: unparseable header: {exc}")
        if not isinstance(header, dict) or "schema" not in header:
            raise DataError(f"{path}:1: header lacks a schema field")
        if header["schema"] != schema_name(kind):
            raise DataError(
                f"{path}: expected schema {schema_name(kind)!r}, "
                f"found {header['schema']!r}"
            )
        major = _major(header.get("version", "0"))
        if major != _major(ARTIFACT_VERSION):
            raise DataError(
                f"{path}: unsupported major version {header.get('version')!r}; "
                f"this reader understands {ARTIFACT_VERSION}"
            )
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: unparseable record: {exc}")
            if not isinstance(rec, dict):
                raise DataError(f"{path}:{lineno}: record is not an object")
            yield rec


def candidate_set_to_record(cset: CandidateSet) -> dict:
    return {
        "example_id": cset.example_id,
        "context": {
            "knowledge": cset.context.knowledge,
            "history": list(cset.context.history),
        },
        "candidates": [
            {
                "index": c.index,
                "text": c.text,
                "tokens": list(c.tokens),
                "token_logprobs": list(c.token_logprobs),
                "method": c.method,
                "seed": c.seed,
            }
            for c in cset.candidates
        ],
    }


def candidate_set_from_record(rec: dict) -> CandidateSet:
    try:
        context = ConditioningContext(
            knowledge=rec["context"]["knowledge"],
            history=tuple(rec["context"]["history"]),
        )
        candidates = tuple(
            Candidate(
                tokens=tuple(c["tokens"]),
                token_logprobs=tuple(float(x) for x in c["token_logprobs"]),
                text=c["text"],
                method=c["method"],
                seed=int(c["seed"]),
                index=int(c["index"]),
            )
            for c in rec["candidates"]
        )
        return CandidateSet(
            example_id=rec["example_id"], candidates=candidates, context=context
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed candidate-set record: {exc}")


def scored_set_to_record(
    cset: CandidateSet,
    prob_certainties: Iterable[float],
    sem_certainties: Iterable[float],
    matrix_entries: Iterable[Iterable[float]],
    provider_tag: str,
) -> dict:
    rec = candidate_set_to_record(cset)
    probs = list(prob_certainties)
    sems = list(sem_certainties)
    if len(probs) != len(rec["candidates"]) or len(sems) != len(rec["candidates"]):
        raise ValueError("certainty lists must match the candidate count")
    for cand, p, s in zip(rec["candidates"], probs, sems):
        cand["prob_certainty"] = p
        cand["sem_certainty"] = s
    rec["entailment"] = {
        "provider_tag": provider_tag,
        "entries": [list(row) for row in matrix_entries],
    }
    return rec


def ranking_to_record(
    result: RankingResult,
    selected_text: str,
    decode_method: str,
    n_candidates: int,
) -> dict:
    return {
        "example_id": result.example_id,
        "method": result.method,
        "selected_index": result.selected_index,
        "ranking": list(result.ranking),
        "scores": [
            {"probabilistic": s.probabilistic, "semantic": s.semantic}
            for s in result.scores
        ],
        "selected_text": selected_text,
        "decode_method": decode_method,
        "n_candidates": n_candidates,
    }
