"""End-to-end pipeline: train/load model, generate, score, rank, test, report.

Configuration comes from a TOML or JSON file. Stages run sequentially,
each writing one artifact into the output directory and each readable on
its own, so a partially completed run resumes from the first missing
artifact. Existing artifacts are never rewritten. A manifest records the
config hash and base seed; with those fixed, every artifact is bytewise
reproducible.
"""

from __future__ import annotations

import hashlib
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping

from . import jsonl
from .certainty import (
    LexicalEntailmentProvider,
    agreement_scores,
    entailment_matrix,
    probabilistic_certainty,
)
from .corpus_lm import ConditioningContext, load_model, save_model, train
from .decoders import DecodeConfig, sample_candidate_set
from .errors import ConfigError, DataError
from .harness import (
    EvalReport,
    SelectionRecord,
    evaluate,
    judge_faithfulness,
    load_dataset,
)
from .ranking import rank_from_certainties
from .remote import RemoteEntailmentProvider, RemoteFaithfulnessCritic
from .stats import run_hypothesis_suite

logger = logging.getLogger(__name__)

DECODE_ALIASES = {
    "beam": "beam",
    "topk": "topk",
    "nucleus": "nucleus_topk",
    "nucleus_topk": "nucleus_topk",
    "ubeam": "uncertainty_beam",
    "uncertainty_beam": "uncertainty_beam",
}
MITIGATION_ALIASES = {
    "none": "none",
    "pcrr": "p_crr",
    "p_crr": "p_crr",
    "scrr": "s_crr",
    "s_crr": "s_crr",
}
PROVIDERS = ("lexical", "remote")
CRITICS = ("rule", "remote")
MANIFEST_VERSION = "1.0"


@dataclass(frozen=True)
class PipelineConfig:
    """Everything one experiment needs, loadable from a single file."""

    data: str
    output_dir: str
    model: str | None = None
    corpus: str | None = None
    dataset_format: str = "generic_jsonl"
    max_turns: int = 1
    strict: bool = True
    # model training (used when corpus is given and model is absent)
    order: int = 2
    alpha: float = 0.1
    tokenizer: str = "word"
    # decoding
    method: str = "nucleus"
    n_candidates: int = 5
    base_seed: int = 0
    beam_size: int = 5
    temperature: float = 1.0
    top_k: int = 50
    top_p: float = 0.9
    uncertainty_lambda: float = 0.2
    max_new_tokens: int = 100
    beam_diversity: float = 0.0
    # ranking and judging
    crr_method: str = "pcrr"
    provider: str = "lexical"
    critic: str = "rule"
    threshold: float = 0.5
    # remote service
    endpoint: str | None = None
    timeout_ms: int = 10000
    retries: int = 2
    # execution
    workers: int = 8

    def decode_config(self) -> DecodeConfig:
        return DecodeConfig(
            method=DECODE_ALIASES[self.method],
            beam_size=self.beam_size,
            temperature=self.temperature,
            top_k=self.top_k,
            top_p=self.top_p,
            uncertainty_lambda=self.uncertainty_lambda,
            max_new_tokens=self.max_new_tokens,
            seed=self.base_seed,
            beam_diversity=self.beam_diversity,
        )

    def mitigation(self) -> str:
        return MITIGATION_ALIASES[self.crr_method]


def load_config_mapping(path: str | Path) -> dict:
    """Parse a TOML or JSON config file into a plain mapping."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    raw = p.read_bytes()
    if p.suffix.lower() == ".json":
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: invalid JSON: {exc}")
    else:
        if sys.version_info >= (3, 11):
            import tomllib as toml_reader
        else:
            import tomli as toml_reader
        try:
            data = toml_reader.loads(raw.decode("utf-8"))
        except toml_reader.TOMLDecodeError as exc:
            raise ConfigError(f"{p}: invalid TOML: {exc}")
    if not isinstance(data, dict):
        raise ConfigError(f"{p}: config root must be a table/object")
    return data


def build_config(
    mapping: Mapping, base_dir: str | Path = ".", **overrides
) -> PipelineConfig:
    """Validate a config mapping, reporting every violation at once.

    Relative paths are resolved against ``base_dir`` (the config file's
    directory), so a config behaves the same from any working directory.
    """
    merged = dict(mapping)
    for key, value in overrides.items():
        if value is not None:
            merged[key] = value
    known = {f.name for f in fields(PipelineConfig)}
    problems = []
    for key in sorted(set(merged) - known):
        problems.append(f"unknown config key {key!r}")
    kwargs = {k: v for k, v in merged.items() if k in known}

    base = Path(base_dir)

    def resolve(key: str, must_exist: bool) -> None:
        value = kwargs.get(key)
        if value is None:
            return
        if not isinstance(value, str) or not value:
            problems.append(f"{key} must be a non-empty path string")
            return
        resolved = value if Path(value).is_absolute() else str(base / value)
        if must_exist and not Path(resolved).exists():
            problems.append(f"{key} does not exist: {resolved}")
        kwargs[key] = resolved

    if not kwargs.get("data"):
        problems.append("data is required")
    resolve("data", must_exist=True)
    resolve("model", must_exist=True)
    resolve("corpus", must_exist=True)
    if not kwargs.get("output_dir"):
        problems.append("output_dir is required")
    else:
        resolve("output_dir", must_exist=False)
    if not kwargs.get("model") and not kwargs.get("corpus"):
        problems.append("one of model or corpus is required")

    def check(condition: bool, message: str) -> None:
        if not condition:
            problems.append(message)

    method = kwargs.get("method", "nucleus")
    check(method in DECODE_ALIASES, f"method must be one of {sorted(DECODE_ALIASES)}")
    crr_method = kwargs.get("crr_method", "pcrr")
    check(
        crr_method in MITIGATION_ALIASES,
        f"crr_method must be one of {sorted(MITIGATION_ALIASES)}",
    )
    provider = kwargs.get("provider", "lexical")
    check(provider in PROVIDERS, f"provider must be one of {PROVIDERS}")
    critic = kwargs.get("critic", "rule")
    check(critic in CRITICS, f"critic must be one of {CRITICS}")
    if (provider == "remote" or critic == "remote") and not kwargs.get("endpoint"):
        problems.append("endpoint is required when provider or critic is remote")

    def check_num(key: str, ok, message: str) -> None:
        if key in kwargs:
            value = kwargs[key]
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                problems.append(f"{key} must be a number")
            elif not ok(value):
                problems.append(message)

    check_num("n_candidates", lambda v: v >= 1, "n_candidates must be >= 1")
    check_num("base_seed", lambda v: v >= 0, "base_seed must be >= 0")
    check_num("order", lambda v: v >= 1, "order must be >= 1")
    check_num("alpha", lambda v: v > 0, "alpha must be > 0")
    check_num("beam_size", lambda v: v >= 1, "beam_size must be >= 1")
    check_num("temperature", lambda v: v > 0, "temperature must be > 0")
    check_num("top_k", lambda v: v >= 1, "top_k must be >= 1")
    check_num("top_p", lambda v: 0 < v <= 1, "top_p must lie in (0, 1]")
    check_num(
        "uncertainty_lambda", lambda v: v >= 0, "uncertainty_lambda must be >= 0"
    )
    check_num("max_new_tokens", lambda v: v >= 1, "max_new_tokens must be >= 1")
    check_num("beam_diversity", lambda v: v >= 0, "beam_diversity must be >= 0")
    check_num("threshold", lambda v: 0 < v < 1, "threshold must lie in (0, 1)")
    check_num("timeout_ms", lambda v: v > 0, "timeout_ms must be > 0")
    check_num("retries", lambda v: v >= 0, "retries must be >= 0")
    check_num("workers", lambda v: v >= 1, "workers must be >= 1")
    check_num("max_turns", lambda v: v >= 0, "max_turns must be >= 0")
    if "tokenizer" in kwargs:
        check(
            kwargs["tokenizer"] in ("word", "char"),
            "tokenizer must be 'word' or 'char'",
        )
    if "dataset_format" in kwargs:
        check(
            kwargs["dataset_format"] in ("faithdial_jsonl", "generic_jsonl"),
            "dataset_format must be 'faithdial_jsonl' or 'generic_jsonl'",
        )
    if "strict" in kwargs:
        check(isinstance(kwargs["strict"], bool), "strict must be a boolean")

    if problems:
        raise ConfigError(
            "invalid configuration: " + "; ".join(problems)
        )
    return PipelineConfig(**kwargs)


def load_config(path: str | Path, **overrides) -> PipelineConfig:
    mapping = load_config_mapping(path)
    return build_config(mapping, base_dir=Path(path).parent, **overrides)


def config_hash(config: PipelineConfig) -> str:
    """Hash of everything that affects artifact content.

    The output directory is where results land, not what they are, so it
    is excluded: the same experiment in two directories hashes the same.
    """
    payload = asdict(config)
    payload.pop("output_dir")
    canonical = json.dumps(payload, sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class PipelineResult:
    output_dir: Path
    artifacts: dict[str, Path] = field(default_factory=dict)
    report: EvalReport | None = None


def _file_sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _make_provider(config: PipelineConfig):
    if config.provider == "lexical":
        return LexicalEntailmentProvider()
    return RemoteEntailmentProvider(
        config.endpoint,
        timeout_s=config.timeout_ms / 1000.0,
        retries=config.retries,
    )


def _make_critic(config: PipelineConfig):
    if config.critic == "rule":
        return "rule"
    return RemoteFaithfulnessCritic(
        config.endpoint,
        timeout_s=config.timeout_ms / 1000.0,
        retries=config.retries,
    )


def run_pipeline(config: PipelineConfig) -> PipelineResult:
    """Execute all stages, reusing any artifact that already exists."""
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = PipelineResult(output_dir=out)

    examples = list(
        load_dataset(
            config.data,
            format=config.dataset_format,
            max_turns=config.max_turns,
            strict=config.strict,
        )
    )
    if not examples:
        raise DataError(f"dataset {config.data} contains no usable examples")

    # stage: model
    model_path = out / "model.json"
    if config.model:
        model = load_model(config.model)
        result.artifacts["model"] = Path(config.model)
    elif model_path.exists():
        model = load_model(model_path)
        result.artifacts["model"] = model_path
    else:
        with open(config.corpus, "r", encoding="utf-8") as fh:
            docs = [line.rstrip("\n") for line in fh if line.strip()]
        model = train(
            docs, order=config.order, alpha=config.alpha, tokenizer=config.tokenizer
        )
        save_model(model, model_path)
        result.artifacts["model"] = model_path
        logger.info("trained model -> %s", model_path)

    decode_config = config.decode_config()
    mitigation = config.mitigation()

    # stage: generate
    candidates_path = out / "candidates.jsonl"
    if not candidates_path.exists():
        records = []
        for example in examples:
            context = ConditioningContext(
                knowledge=example.knowledge, history=example.history
            )
            cset = sample_candidate_set(
                model,
                context,
                decode_config,
                n_candidates=config.n_candidates,
                base_seed=config.base_seed,
                example_id=example.id,
            )
            records.append(jsonl.candidate_set_to_record(cset))
        jsonl.write_artifact(candidates_path, jsonl.CANDIDATES_KIND, records)
        logger.info("generated %d candidate sets -> %s", len(records), candidates_path)
    result.artifacts["candidates"] = candidates_path

    # stage: score
    scored_path = out / "scored.jsonl"
    if not scored_path.exists():
        provider = _make_provider(config)
        scored_records = []
        for rec in jsonl.read_artifact(candidates_path, jsonl.CANDIDATES_KIND):
            cset = jsonl.candidate_set_from_record(rec)
            probs = [probabilistic_certainty(c) for c in cset.candidates]
            matrix = entailment_matrix(cset, provider, parallelism=config.workers)
            sems = list(agreement_scores(matrix))
            scored_records.append(
                jsonl.scored_set_to_record(
                    cset, probs, sems, matrix.entries.tolist(), matrix.provider_tag
                )
            )
        jsonl.write_artifact(scored_path, jsonl.SCORED_KIND, scored_records)
        logger.info("scored %d sets -> %s", len(scored_records), scored_path)
    result.artifacts["scored"] = scored_path

    # stage: rank
    ranked_path = out / "ranked.jsonl"
    if not ranked_path.exists():
        ranked_records = []
        for rec in jsonl.read_artifact(scored_path, jsonl.SCORED_KIND):
            cset = jsonl.candidate_set_from_record(rec)
            probs = [c["prob_certainty"] for c in rec["candidates"]]
            sems = [c["sem_certainty"] for c in rec["candidates"]]
            ranking = rank_from_certainties(
                cset.example_id, probs, sems, mitigation
            )
            ranked_records.append(
                jsonl.ranking_to_record(
                    ranking,
                    selected_text=cset.candidates[ranking.selected_index].text,
                    decode_method=decode_config.method,
                    n_candidates=len(cset),
                )
            )
        jsonl.write_artifact(ranked_path, jsonl.RANKED_KIND, ranked_records)
        logger.info("ranked %d sets -> %s", len(ranked_records), ranked_path)
    result.artifacts["ranked"] = ranked_path

    by_id = {ex.id: ex for ex in examples}
    critic = _make_critic(config)

    # stage: stats (certainty vs hallucination across all candidates)
    stats_path = out / "stats.json"
    if not stats_path.exists():
        stat_records = []
        for rec in jsonl.read_artifact(scored_path, jsonl.SCORED_KIND):
            example = by_id.get(rec["example_id"])
            if example is None:
                raise DataError(
                    f"scored artifact references unknown example {rec['example_id']!r}"
                )
            for cand in rec["candidates"]:
                judgment = judge_faithfulness(
                    example.knowledge,
                    cand["text"],
                    critic=critic,
                    threshold=config.threshold,
                )
                stat_records.append(
                    {
                        "prob_certainty": cand["prob_certainty"],
                        "sem_certainty": cand["sem_certainty"],
                        "hallucination_prob": judgment.hallucination_prob,
                    }
                )
        suite = run_hypothesis_suite(stat_records, threshold=config.threshold)
        stats_path.write_text(
            json.dumps(suite, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        logger.info("hypothesis suite -> %s", stats_path)
    result.artifacts["stats"] = stats_path

    # stage: evaluate
    report_path = out / "report.json"
    if not report_path.exists():
        selections = [
            SelectionRecord(
                example_id=rec["example_id"],
                decode_method=rec["decode_method"],
                mitigation=rec["method"],
                n_candidates=rec["n_candidates"],
                text=rec["selected_text"],
            )
            for rec in jsonl.read_artifact(ranked_path, jsonl.RANKED_KIND)
        ]
        report = evaluate(
            selections, examples, critic=critic, threshold=config.threshold
        )
        report_path.write_text(
            json.dumps(report.to_mapping(), sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )
        result.report = report
        logger.info("evaluation report -> %s", report_path)
    else:
        result.report = EvalReport.from_mapping(
            json.loads(report_path.read_text(encoding="utf-8"))
        )
    result.artifacts["report"] = report_path

    # stage: manifest
    manifest_path = out / "manifest.json"
    if not manifest_path.exists():
        manifest = {
            "schema": "crr/manifest",
            "version": MANIFEST_VERSION,
            "config_hash": config_hash(config),
            "base_seed": config.base_seed,
            "artifacts": {
                name: _file_sha256(path)
                for name, path in sorted(result.artifacts.items())
                if path.is_file()
            },
        }
        manifest_path.write_text(
            json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
    result.artifacts["manifest"] = manifest_path
    return result


__all__ = [
    "PipelineConfig",
    "PipelineResult",
    "build_config",
    "config_hash",
    "load_config",
    "load_config_mapping",
    "run_pipeline",
    "DECODE_ALIASES",
    "MITIGATION_ALIASES",
]
