"""Scoring backends: a deterministic offline stub and the real models.

A backend owns two scorers: a three-class NLI entailment head and a
binary hallucination critic. Both must be deterministic for a fixed
model version and return exact probability simplexes.
"""

import math
import re
from dataclasses import dataclass
from typing import Protocol, Sequence

from .config import ModelPin, ServiceConfig

_WORD = re.compile(r"[a-z0-9']+")
_NEGATORS = frozenset({"no", "not", "never", "none", "nothing", "n't"})


@dataclass(frozen=True)
class EntailScores:
    entail: float
    neutral: float
    contradict: float

    def __post_init__(self) -> None:
        total = self.entail + self.neutral + self.contradict
        if not math.isclose(total, 1.0, abs_tol=1e-6):
            raise ValueError(f"class probabilities must sum to 1, got {total}")
        for value in (self.entail, self.neutral, self.contradict):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"class probability out of [0, 1]: {value}")


class ScoringBackend(Protocol):
    nli_version: str
    critic_version: str

    @property
    def loaded(self) -> bool: ...

    def load(self) -> None: ...

    def entail(self, pairs: Sequence[tuple[str, str]]) -> list[EntailScores]: ...

    def hallucination_prob(self, knowledge: str, response: str) -> float: ...


def _tokens(text: str) -> list[str]:
    return _WORD.findall(text.lower())


class StubBackend:
    """Deterministic lexical heuristic with real-model response shapes.

    Entailment follows hypothesis coverage by the premise; an unmatched
    negator between the two texts flips the mass toward contradiction.
    The critic scores one minus knowledge coverage of the response.
    Useful for development and contract tests; it makes no claim to NLI
    accuracy.
    """

    nli_version = "stub-nli-1"
    critic_version = "stub-critic-1"

    def __init__(self) -> None:
        self._loaded = False

    @property
    def loaded(self) -> bool:
        return self._loaded

    def load(self) -> None:
        self._loaded = True

    def _pair_scores(self, premise: str, hypothesis: str) -> EntailScores:
        prem = set(_tokens(premise))
        hyp = _tokens(hypothesis)
        prem_core = prem - _NEGATORS
        hyp_core = [t for t in hyp if t not in _NEGATORS]
        if hyp_core:
            coverage = sum(1 for t in hyp_core if t in prem_core) / len(hyp_core)
        else:
            coverage = 1.0
        negation_mismatch = bool(prem & _NEGATORS) != bool(set(hyp) & _NEGATORS)
        if negation_mismatch and coverage >= 0.5:
            # Same statement with opposite polarity reads as contradiction.
            contradict = 0.55 + 0.35 * coverage
            entail = 0.2 * (1.0 - contradict)
        else:
            entail = 0.05 + 0.9 * coverage
            contradict = 0.05 * (1.0 - coverage)
        neutral = 1.0 - entail - contradict
        return EntailScores(entail=entail, neutral=neutral, contradict=contradict)

    def entail(self, pairs: Sequence[tuple[str, str]]) -> list[EntailScores]:
        return [self._pair_scores(p, h) for p, h in pairs]

    def hallucination_prob(self, knowledge: str, response: str) -> float:
        know = set(_tokens(knowledge))
        resp = _tokens(response)
        if not resp:
            return 0.0
        coverage = sum(1 for t in resp if t in know) / len(resp)
        return 1.0 - coverage


class TransformersBackend:
    """Pinned HuggingFace sequence-classification models on CPU or GPU.

    Imports are deferred to load() so the service module stays importable
    without torch installed.
    """

    def __init__(self, nli_model: ModelPin, critic_model: ModelPin, device: str = "cpu",
                 max_batch: int = 64) -> None:
        self._nli_pin = nli_model
        self._critic_pin = critic_model
        self._device = device
        self._max_batch = max_batch
        self._nli = None
        self._critic = None
        self.nli_version = f"{nli_model.name}@{nli_model.revision}"
        self.critic_version = f"{critic_model.name}@{critic_model.revision}"

    @property
    def loaded(self) -> bool:
        return self._nli is not None and self._critic is not None

    def load(self) -> None:
        from transformers import AutoModelForSequenceClassification, AutoTokenizer

        def load_one(pin: ModelPin):
            tokenizer = AutoTokenizer.from_pretrained(pin.name, revision=pin.revision)
            model = AutoModelForSequenceClassification.from_pretrained(
                pin.name, revision=pin.revision
            )
            model.to(self._device)
            model.eval()
            return tokenizer, model

        self._nli = load_one(self._nli_pin)
        self._critic = load_one(self._critic_pin)

    def _require_loaded(self) -> None:
        if not self.loaded:
            raise RuntimeError("models are not loaded")

    @staticmethod
    def _label_index(model, needle: str, fallback: int) -> int:
        for idx, label in model.config.id2label.items():
            if needle in str(label).lower():
                return int(idx)
        return fallback

    def entail(self, pairs: Sequence[tuple[str, str]]) -> list[EntailScores]:
        self._require_loaded()
        import torch

        tokenizer, model = self._nli
        i_ent = self._label_index(model, "entail", 0)
        i_con = self._label_index(model, "contradict", 2)
        out: list[EntailScores] = []
        for start in range(0, len(pairs), self._max_batch):
            chunk = pairs[start : start + self._max_batch]
            enc = tokenizer(
                [p for p, _ in chunk],
                [h for _, h in chunk],
                padding=True,
                truncation=True,
                return_tensors="pt",
            ).to(self._device)
            with torch.no_grad():
                probs = torch.softmax(model(**enc).logits, dim=-1).cpu()
            for row in probs:
                entail = float(row[i_ent])
                contradict = float(row[i_con])
                neutral = max(0.0, 1.0 - entail - contradict)
                out.append(EntailScores(entail=entail, neutral=neutral, contradict=contradict))
        return out

    def hallucination_prob(self, knowledge: str, response: str) -> float:
        self._require_loaded()
        import torch

        tokenizer, model = self._critic
        idx = self._label_index(model, "hallucin", 1)
        enc = tokenizer(knowledge, response, truncation=True, return_tensors="pt").to(
            self._device
        )
        with torch.no_grad():
            probs = torch.softmax(model(**enc).logits, dim=-1).cpu()[0]
        return float(probs[idx])


def make_backend(config: ServiceConfig) -> ScoringBackend:
    if config.backend == "stub":
        return StubBackend()
    return TransformersBackend(
        nli_model=config.nli_model,
        critic_model=config.critic_model,
        device=config.device,
        max_batch=config.max_batch,
    )
