"""Command-line entry point: ``crr <subcommand>``.

Global flags come before the subcommand, e.g.
``crr --log-level DEBUG generate ...``. Environment variables prefixed
``CRR_`` (CRR_CONFIG, CRR_SEED, CRR_WORKERS, CRR_LOG_LEVEL,
CRR_ENDPOINT) act as defaults for the matching flags.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 remote
service error, 5 numerical error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import jsonl
from .certainty import (
    LexicalEntailmentProvider,
    agreement_scores,
    entailment_matrix,
    probabilistic_certainty,
)
from .corpus_lm import ConditioningContext, load_model, save_model, train
from .decoders import DecodeConfig, sample_candidate_set
from .errors import (
    ConfigError,
    DataError,
    NumericalError,
    ProviderContractError,
    RemoteServiceError,
)
from .harness import (
    EvalReport,
    SelectionRecord,
    ablation_sweep,
    evaluate,
    judge_faithfulness,
    load_dataset,
    render_csv,
    render_text_table,
)
from .pipeline import (
    DECODE_ALIASES,
    MITIGATION_ALIASES,
    load_config,
    run_pipeline,
)
from .ranking import rank_from_certainties
from .remote import RemoteEntailmentProvider, RemoteFaithfulnessCritic
from .stats import run_hypothesis_suite

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_REMOTE = 4
EXIT_NUMERICAL = 5


def _env(name: str) -> str | None:
    return os.environ.get(f"CRR_{name}")


def _resolve_seed(args: argparse.Namespace) -> int:
    for value in (getattr(args, "seed", None), args.global_seed, _env("SEED")):
        if value is not None:
            return int(value)
    return 0


def _resolve_workers(args: argparse.Namespace) -> int:
    for value in (getattr(args, "workers", None), args.global_workers, _env("WORKERS")):
        if value is not None:
            return int(value)
    return 8


def _make_provider(name: str, endpoint: str | None):
    if name == "lexical":
        return LexicalEntailmentProvider()
    if not endpoint:
        raise ConfigError("--endpoint is required with --provider remote")
    return RemoteEntailmentProvider(endpoint)


def _make_critic(name: str, endpoint: str | None):
    if name == "rule":
        return "rule"
    if not endpoint:
        raise ConfigError("--endpoint is required with --critic remote")
    return RemoteFaithfulnessCritic(endpoint)


def _read_corpus(path: str) -> list[str]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return [line.rstrip("\n") for line in fh if line.strip()]
    except OSError as exc:
        raise DataError(f"cannot read corpus {path}: {exc}")


def _load_examples(args: argparse.Namespace) -> list:
    return list(
        load_dataset(
            args.data,
            format=args.format,
            max_turns=args.max_turns,
            strict=not args.no_strict,
        )
    )


def cmd_lm_train(args: argparse.Namespace) -> int:
    docs = _read_corpus(args.corpus)
    model = train(docs, order=args.order, alpha=args.alpha, tokenizer=args.tokenizer)
    save_model(model, args.out)
    logger.info(
        "trained order-%d model (%d token types) -> %s",
        model.order,
        len(model.vocab.tokens),
        args.out,
    )
    return EXIT_OK


def cmd_generate(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    seed = _resolve_seed(args)
    config = DecodeConfig(
        method=DECODE_ALIASES[args.method],
        beam_size=args.beam_size,
        temperature=args.temperature,
        top_k=args.top_k,
        top_p=args.top_p,
        uncertainty_lambda=args.uncertainty_lambda,
        max_new_tokens=args.max_new_tokens,
        seed=seed,
        beam_diversity=args.beam_diversity,
    )
    records = []
    for example in _load_examples(args):
        context = ConditioningContext(
            knowledge=example.knowledge, history=example.history
        )
        cset = sample_candidate_set(
            model,
            context,
            config,
            n_candidates=args.num_candidates,
            base_seed=seed,
            example_id=example.id,
        )
        records.append(jsonl.candidate_set_to_record(cset))
    n = jsonl.write_artifact(args.out, jsonl.CANDIDATES_KIND, records)
    logger.info("wrote %d candidate sets -> %s", n, args.out)
    return EXIT_OK


def cmd_score(args: argparse.Namespace) -> int:
    provider = _make_provider(args.provider, args.endpoint)
    workers = _resolve_workers(args)
    records = []
    for rec in jsonl.read_artifact(args.candidates, jsonl.CANDIDATES_KIND):
        cset = jsonl.candidate_set_from_record(rec)
        probs = [probabilistic_certainty(c) for c in cset.candidates]
        matrix = entailment_matrix(cset, provider, parallelism=workers)
        sems = list(agreement_scores(matrix))
        records.append(
            jsonl.scored_set_to_record(
                cset, probs, sems, matrix.entries.tolist(), matrix.provider_tag
            )
        )
    n = jsonl.write_artifact(args.out, jsonl.SCORED_KIND, records)
    logger.info("scored %d sets -> %s", n, args.out)
    return EXIT_OK


def cmd_rank(args: argparse.Namespace) -> int:
    method = MITIGATION_ALIASES[args.method]
    kind = jsonl.sniff_kind(args.candidates)
    records = []
    if kind == jsonl.SCORED_KIND:
        for rec in jsonl.read_artifact(args.candidates, jsonl.SCORED_KIND):
            cset = jsonl.candidate_set_from_record(rec)
            probs = [c["prob_certainty"] for c in rec["candidates"]]
            sems = [c["sem_certainty"] for c in rec["candidates"]]
            result = rank_from_certainties(cset.example_id, probs, sems, method)
            records.append(
                jsonl.ranking_to_record(
                    result,
                    selected_text=cset.candidates[result.selected_index].text,
                    decode_method=cset.candidates[0].method,
                    n_candidates=len(cset),
                )
            )
    elif kind == jsonl.CANDIDATES_KIND:
        provider = _make_provider(args.provider, args.endpoint)
        workers = _resolve_workers(args)
        for rec in jsonl.read_artifact(args.candidates, jsonl.CANDIDATES_KIND):
            cset = jsonl.candidate_set_from_record(rec)
            probs = [probabilistic_certainty(c) for c in cset.candidates]
            if method == "s_crr":
                matrix = entailment_matrix(cset, provider, parallelism=workers)
                sems = list(agreement_scores(matrix))
            else:
                sems = None
            result = rank_from_certainties(cset.example_id, probs, sems, method)
            records.append(
                jsonl.ranking_to_record(
                    result,
                    selected_text=cset.candidates[result.selected_index].text,
                    decode_method=cset.candidates[0].method,
                    n_candidates=len(cset),
                )
            )
    else:
        raise DataError(
            f"{args.candidates}: expected a candidates or scored artifact, "
            f"found {kind!r}"
        )
    n = jsonl.write_artifact(args.out, jsonl.RANKED_KIND, records)
    logger.info("ranked %d sets with %s -> %s", n, method, args.out)
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    critic = _make_critic(args.critic, args.endpoint)
    by_id = {ex.id: ex for ex in _load_examples(args)}
    stat_records = []
    for rec in jsonl.read_artifact(args.scored, jsonl.SCORED_KIND):
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
                threshold=args.threshold,
            )
            stat_records.append(
                {
                    "prob_certainty": cand["prob_certainty"],
                    "sem_certainty": cand["sem_certainty"],
                    "hallucination_prob": judgment.hallucination_prob,
                }
            )
    suite = run_hypothesis_suite(stat_records, threshold=args.threshold)
    Path(args.out).write_text(
        json.dumps(suite, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    logger.info("hypothesis suite over %d candidates -> %s", len(stat_records), args.out)
    return EXIT_OK


def _selections_from_ranked(path: str) -> list[SelectionRecord]:
    selections = []
    for rec in jsonl.read_artifact(path, jsonl.RANKED_KIND):
        try:
            selections.append(
                SelectionRecord(
                    example_id=rec["example_id"],
                    decode_method=rec["decode_method"],
                    mitigation=rec["method"],
                    n_candidates=int(rec["n_candidates"]),
                    text=rec["selected_text"],
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}: malformed ranked record: {exc}")
    return selections


def cmd_evaluate(args: argparse.Namespace) -> int:
    critic = _make_critic(args.critic, args.endpoint)
    examples = _load_examples(args)
    selections = _selections_from_ranked(args.ranked)
    report = evaluate(selections, examples, critic=critic, threshold=args.threshold)
    Path(args.out).write_text(
        json.dumps(report.to_mapping(), sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    sys.stdout.write(render_text_table(report))
    logger.info("evaluation report -> %s", args.out)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    examples = _load_examples(args)
    seed = _resolve_seed(args)
    try:
        n_list = [int(part) for part in args.n.split(",") if part]
    except ValueError:
        raise ConfigError(f"--n must be a comma-separated integer list, got {args.n!r}")
    decode_methods = [DECODE_ALIASES[m] for m in args.methods.split(",") if m]
    mitigations = [MITIGATION_ALIASES[m] for m in args.mitigations.split(",") if m]
    provider = _make_provider(args.provider, args.endpoint)
    critic = _make_critic(args.critic, args.endpoint)
    base_config = DecodeConfig(
        max_new_tokens=args.max_new_tokens, seed=seed
    )
    report = ablation_sweep(
        model,
        examples,
        decode_methods=decode_methods,
        mitigations=mitigations,
        n_list=n_list,
        base_config=base_config,
        provider=provider,
        critic=critic,
        threshold=args.threshold,
        base_seed=seed,
    )
    Path(args.out).write_text(
        json.dumps(report.to_mapping(), sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    if args.csv:
        Path(args.csv).write_text(render_csv(report), encoding="utf-8")
    sys.stdout.write(render_text_table(report))
    logger.info("sweep report -> %s", args.out)
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    try:
        data = json.loads(Path(args.report).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read report {args.report}: {exc}")
    except json.JSONDecodeError as exc:
        raise DataError(f"{args.report}: invalid JSON: {exc}")
    report = EvalReport.from_mapping(data)
    rendered = render_csv(report) if args.format == "csv" else render_text_table(report)
    if args.out:
        Path(args.out).write_text(rendered, encoding="utf-8")
    else:
        sys.stdout.write(rendered)
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    config_path = args.config or args.global_config or _env("CONFIG")
    if not config_path:
        raise ConfigError("run requires --config")
    overrides = {}
    if args.output_dir:
        overrides["output_dir"] = args.output_dir
    seed = getattr(args, "seed", None)
    if seed is None:
        seed = args.global_seed or _env("SEED")
    if seed is not None:
        overrides["base_seed"] = int(seed)
    workers = getattr(args, "workers", None) or args.global_workers or _env("WORKERS")
    if workers is not None:
        overrides["workers"] = int(workers)
    config = load_config(config_path, **overrides)
    result = run_pipeline(config)
    for name, path in sorted(result.artifacts.items()):
        sys.stdout.write(f"{name}\t{path}\n")
    if result.report is not None:
        sys.stdout.write(render_text_table(result.report))
    return EXIT_OK


def _add_dataset_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--data", required=True, help="dataset JSONL file")
    sub.add_argument(
        "--format",
        choices=("faithdial_jsonl", "generic_jsonl"),
        default="generic_jsonl",
        help="dataset record layout",
    )
    sub.add_argument(
        "--max-turns", type=int, default=1, help="history turns to keep (most recent)"
    )
    sub.add_argument(
        "--no-strict",
        action="store_true",
        help="skip malformed dataset lines instead of aborting",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crr",
        description="Sample, score, rank and evaluate response candidates "
        "by sequence-level certainty.",
    )
    parser.add_argument("--config", dest="global_config", help="pipeline config file")
    parser.add_argument(
        "--seed", dest="global_seed", type=int, help="base seed override"
    )
    parser.add_argument(
        "--workers", dest="global_workers", type=int, help="worker pool size"
    )
    parser.add_argument(
        "--log-level",
        default=_env("LOG_LEVEL") or "WARNING",
        help="logging level (DEBUG, INFO, WARNING, ERROR)",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("lm-train", help="train an n-gram model from a text corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--tokenizer", choices=("word", "char"), default="word")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_lm_train)

    p = subs.add_parser("generate", help="sample candidate sets for each example")
    p.add_argument("--model", required=True)
    _add_dataset_flags(p)
    p.add_argument("--method", choices=sorted(DECODE_ALIASES), default="nucleus")
    p.add_argument("--num-candidates", type=int, default=5)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--beam-size", type=int, default=5)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--top-k", type=int, default=50)
    p.add_argument("--top-p", type=float, default=0.9)
    p.add_argument(
        "--uncertainty-lambda", type=float, default=0.2, dest="uncertainty_lambda"
    )
    p.add_argument("--max-new-tokens", type=int, default=100)
    p.add_argument("--beam-diversity", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = subs.add_parser("score", help="attach certainty scores to candidate sets")
    p.add_argument("--candidates", required=True)
    p.add_argument("--provider", choices=("lexical", "remote"), default="lexical")
    p.add_argument("--endpoint", default=_env("ENDPOINT"))
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = subs.add_parser("rank", help="rank candidates and select one response")
    p.add_argument("--candidates", required=True, help="candidates or scored JSONL")
    p.add_argument("--method", choices=sorted(MITIGATION_ALIASES), default="pcrr")
    p.add_argument("--provider", choices=("lexical", "remote"), default="lexical")
    p.add_argument("--endpoint", default=_env("ENDPOINT"))
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rank)

    p = subs.add_parser("stats", help="run the certainty-hallucination hypothesis suite")
    p.add_argument("--scored", required=True)
    _add_dataset_flags(p)
    p.add_argument("--critic", choices=("rule", "remote"), default="rule")
    p.add_argument("--endpoint", default=_env("ENDPOINT"))
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stats)

    p = subs.add_parser("evaluate", help="judge selected responses, report faithful%%")
    p.add_argument("--ranked", required=True)
    _add_dataset_flags(p)
    p.add_argument("--critic", choices=("rule", "remote"), default="rule")
    p.add_argument("--endpoint", default=_env("ENDPOINT"))
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = subs.add_parser("sweep", help="candidate-count ablation over methods")
    p.add_argument("--model", required=True)
    _add_dataset_flags(p)
    p.add_argument("--n", default="5,10,20", help="comma-separated candidate counts")
    p.add_argument("--methods", default="nucleus", help="comma-separated decode methods")
    p.add_argument(
        "--mitigations", default="none,pcrr,scrr", help="comma-separated mitigations"
    )
    p.add_argument("--provider", choices=("lexical", "remote"), default="lexical")
    p.add_argument("--critic", choices=("rule", "remote"), default="rule")
    p.add_argument("--endpoint", default=_env("ENDPOINT"))
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--max-new-tokens", type=int, default=100)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--csv", default=None, help="also write the report as CSV")
    p.set_defaults(func=cmd_sweep)

    p = subs.add_parser("report", help="render a saved report as text or CSV")
    p.add_argument("--report", required=True)
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)

    p = subs.add_parser("run", help="run the full pipeline from a config file")
    p.add_argument("--config", default=None)
    p.add_argument("--output-dir", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_run)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except DataError as exc:
        logger.error("data error: %s", exc)
        return EXIT_DATA
    except FileNotFoundError as exc:
        logger.error("missing file: %s", exc)
        return EXIT_DATA
    except (RemoteServiceError, ProviderContractError) as exc:
        logger.error("remote service error: %s", exc)
        return EXIT_REMOTE
    except NumericalError as exc:
        logger.error("numerical error: %s", exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
