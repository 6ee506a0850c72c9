"""
Sampling response candidates and ranking them by certainty
===========================================================

Train a small n-gram model on a ten-sentence corpus, sample a pool of
response candidates for one knowledge-grounded prompt, and compare what
the probabilistic and semantic certainty rankings each pick.
"""

from pathlib import Path

from crrkit import (
    ConditioningContext,
    DecodeConfig,
    LexicalEntailmentProvider,
    probabilistic_certainty,
    rank,
    sample_candidate_set,
    train,
)

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

# Train an order-2 add-alpha model on the toy corpus.
corpus = FIXTURES.joinpath("corpus.txt").read_text(encoding="utf-8").splitlines()
model = train(corpus, order=2, alpha=0.1)
print(f"trained on {len(corpus)} sentences, vocabulary size {len(model.vocab)}")

# The generation prompt: a knowledge snippet plus one history turn.
context = ConditioningContext(
    knowledge="the lighthouse keeper lit the lamp at dusk",
    history=("what does the keeper do",),
)

# Sample ten candidates with nucleus-limited top-k sampling. Candidate i
# depends only on (base_seed, example_id, i), so pools are reproducible.
config = DecodeConfig(method="nucleus_topk", top_k=20, top_p=0.9, max_new_tokens=12)
pool = sample_candidate_set(model, context, config, n_candidates=10, base_seed=7, example_id="demo-1")

print("\ncandidate pool (mean token log-prob in parentheses):")
for cand in pool.candidates:
    print(f"  [{cand.index}] ({probabilistic_certainty(cand):+.3f}) {cand.text!r}")

# Probabilistic ranking: most certain candidate by mean log-probability.
p_result = rank(pool, "p_crr")
print(f"\np_crr pick:  [{p_result.selected_index}] {pool.candidates[p_result.selected_index].text!r}")

# Semantic ranking: the candidate most entailed-by-agreement with the rest
# of the pool, scored here by the offline lexical entailment stand-in.
s_result = rank(pool, "s_crr", provider=LexicalEntailmentProvider())
print(f"s_crr pick:  [{s_result.selected_index}] {pool.candidates[s_result.selected_index].text!r}")
print(f"s_crr order: {s_result.ranking}")
