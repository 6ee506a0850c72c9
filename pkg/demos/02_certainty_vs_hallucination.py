"""
Measuring the certainty-hallucination relationship
==================================================

Construct candidate pools where faithful responses genuinely carry more
sequence-level certainty, score them both ways, judge them with the
rule-based critic, and let the hypothesis suite recover the
relationship: a one-sided Welch t-test (faithful candidates are more
certain) and a point-biserial correlation (hallucination labels
anti-correlate with certainty).
"""

import numpy as np

from crrkit import (
    Candidate,
    CandidateSet,
    ConditioningContext,
    LexicalEntailmentProvider,
    RuleBasedCritic,
    agreement_scores,
    entailment_matrix,
    probabilistic_certainty,
    run_hypothesis_suite,
)

rng = np.random.default_rng(13)
provider = LexicalEntailmentProvider()
critic = RuleBasedCritic()

# Twelve examples, ten candidates each. Faithful candidates restate the
# knowledge and sit around -0.6 mean log-prob; hallucinated ones invent
# unsupported tokens and sit around -1.1. The 0.5 gap is the effect the
# suite should detect.
records = []
for e in range(12):
    knowledge = f"landmark{e} stands beside harbor{e} since DateTuple{e}"
    candidates = []
    n_faithful = int(rng.integers(3, 8))
    for i in range(10):
        if i < n_faithful:
            text, mu = knowledge.lower(), -0.6
        else:
            text, mu = f"rumor{e}x{i} beside myth{e}x{i}", -1.1
        logprobs = rng.normal(mu, 0.08, size=len(text.split()))
        candidates.append(
            Candidate(
                tokens=tuple(text.split()),
                token_logprobs=tuple(float(v) for v in logprobs),
                text=text,
                method="constructed",
                seed=0,
                index=i,
            )
        )
    pool = CandidateSet(
        example_id=f"ex{e}",
        candidates=tuple(candidates),
        context=ConditioningContext(knowledge=knowledge),
    )
    # Semantic certainty: how much the rest of the pool entails each
    # candidate, using the offline lexical stand-in for an NLI model.
    sem_scores = agreement_scores(entailment_matrix(pool, provider))
    for cand, sem in zip(pool.candidates, sem_scores):
        records.append(
            {
                "prob_certainty": probabilistic_certainty(cand),
                "sem_certainty": sem,
                "hallucination_prob": critic.hallucination_prob(knowledge, cand.text),
            }
        )

print(f"scored {len(records)} candidates over 12 constructed examples")

# Dichotomize at 0.5 hallucination probability and test both directions.
suite = run_hypothesis_suite(records, threshold=0.5, alpha=0.01)
for certainty_type in ("probabilistic", "semantic"):
    t_test = suite[certainty_type]["t_test"]
    pbcc = suite[certainty_type]["pbcc"]
    print(f"\n{certainty_type} certainty:")
    print(
        f"  welch t = {t_test['t_statistic']:+.2f}  (one-sided p = {t_test['p_value_one_sided']:.2e}, "
        f"{t_test['n_faithful']} faithful vs {t_test['n_hallucinated']} hallucinated)"
    )
    print(f"  point-biserial r = {pbcc['r']:+.3f}  (two-sided p = {pbcc['p_value_two_sided']:.2e})")
    verdict = "supported" if t_test["significant"] and pbcc["r"] < 0 else "not supported"
    print(f"  higher certainty tracks faithfulness: {verdict}")
