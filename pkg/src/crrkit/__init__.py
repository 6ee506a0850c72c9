"""Certainty-based response ranking over sampled candidates.

The toolkit decodes N response candidates per dialogue context from a
small n-gram language model, measures each candidate's sequence-level
certainty two ways (probabilistic: mean token log-probability; semantic:
agreement score over pairwise entailment), and emits the
highest-certainty candidate. Around that core sit the statistics used to
test how certainty relates to hallucination, a faithfulness evaluation
harness, JSONL artifact plumbing, and the ``crr`` command-line pipeline.

Typical library use::

    from crrkit import (
        ConditioningContext, DecodeConfig, train,
        sample_candidate_set, select_response,
    )

    model = train(["the cat sat", "the cat slept"], order=2, alpha=0.1)
    context = ConditioningContext(knowledge="the cat sat on the mat")
    config = DecodeConfig(method="nucleus_topk", max_new_tokens=8)
    cset = sample_candidate_set(model, context, config,
                                n_candidates=5, base_seed=42,
                                example_id="demo-1")
    best = select_response(cset, "p_crr")
"""

from .certainty import (
    CertaintyScores,
    EntailmentMatrix,
    EntailmentProvider,
    LexicalEntailmentProvider,
    agreement_scores,
    entailment_matrix,
    lexical_entailment_proxy,
    probabilistic_certainty,
)
from .corpus_lm import (
    BOS,
    EOS,
    SEP,
    UNK,
    ConditioningContext,
    NgramModel,
    Vocabulary,
    load_model,
    next_token_distribution,
    save_model,
    sequence_logprob,
    train,
)
from .decoders import (
    Candidate,
    CandidateSet,
    DecodeConfig,
    beam_search,
    make_rng,
    mix_seed,
    nucleus_topk_sample,
    sample_candidate_set,
    topk_sample,
    uncertainty_aware_beam_search,
)
from .errors import (
    ConfigError,
    CrrError,
    DataError,
    NumericalError,
    ProviderContractError,
    RemoteServiceError,
    TrainingError,
)
from .harness import (
    DialogueExample,
    EvalReport,
    EvalRow,
    FaithfulnessJudgment,
    RuleBasedCritic,
    SelectionRecord,
    ablation_sweep,
    evaluate,
    judge_faithfulness,
    load_dataset,
    render_csv,
    render_text_table,
)
from .pipeline import PipelineConfig, build_config, load_config, run_pipeline
from .ranking import (
    MITIGATION_METHODS,
    RankingResult,
    rank,
    rank_from_certainties,
    rank_none,
    rank_p_crr,
    rank_s_crr,
    select_response,
)
from .remote import RemoteEntailmentProvider, RemoteFaithfulnessCritic, check_health
from .stats import (
    PbccResult,
    TTestResult,
    point_biserial,
    regularized_incomplete_beta,
    run_hypothesis_suite,
    student_t_cdf,
    welch_t_test_greater,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # language model
    "BOS", "EOS", "SEP", "UNK",
    "ConditioningContext", "NgramModel", "Vocabulary",
    "train", "next_token_distribution", "sequence_logprob",
    "load_model", "save_model",
    # decoding
    "Candidate", "CandidateSet", "DecodeConfig",
    "beam_search", "topk_sample", "nucleus_topk_sample",
    "uncertainty_aware_beam_search", "sample_candidate_set",
    "mix_seed", "make_rng",
    # certainty
    "CertaintyScores", "EntailmentMatrix", "EntailmentProvider",
    "LexicalEntailmentProvider", "probabilistic_certainty",
    "entailment_matrix", "agreement_scores", "lexical_entailment_proxy",
    # ranking
    "MITIGATION_METHODS", "RankingResult", "rank", "rank_p_crr",
    "rank_s_crr", "rank_none", "rank_from_certainties", "select_response",
    # statistics
    "TTestResult", "PbccResult", "student_t_cdf",
    "regularized_incomplete_beta", "welch_t_test_greater",
    "point_biserial", "run_hypothesis_suite",
    # harness
    "DialogueExample", "FaithfulnessJudgment", "RuleBasedCritic",
    "SelectionRecord", "EvalReport", "EvalRow", "load_dataset",
    "judge_faithfulness", "evaluate", "ablation_sweep",
    "render_text_table", "render_csv",
    # remote clients
    "RemoteEntailmentProvider", "RemoteFaithfulnessCritic", "check_health",
    # pipeline
    "PipelineConfig", "build_config", "load_config", "run_pipeline",
    # errors
    "CrrError", "ConfigError", "DataError", "TrainingError",
    "RemoteServiceError", "ProviderContractError", "NumericalError",
]
