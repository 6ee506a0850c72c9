"""HTTP clients for the entailment and faithfulness scoring service.

The service exposes POST /entail (one premise/hypothesis pair),
POST /entail_batch (a bounded list of pairs, results in request order)
and POST /faithful (knowledge/response). Every response carries a
model_version string; clients surface it in their provider tag so
scored artifacts record exactly which model produced them.

Transport failures and 5xx responses are retried with exponential
backoff and then raised as retriable errors. A remote failure is never
hidden behind a local fallback score.
"""

from __future__ import annotations

import time
from typing import Sequence

import requests

from .errors import ProviderContractError, RemoteServiceError

DEFAULT_TIMEOUT_S = 10.0
DEFAULT_RETRIES = 2
DEFAULT_BATCH_SIZE = 64
_BACKOFF_BASE_S = 0.1


class _ServiceClient:
    def __init__(
        self,
        endpoint: str,
        timeout_s: float = DEFAULT_TIMEOUT_S,
        retries: int = DEFAULT_RETRIES,
        backoff_s: float = _BACKOFF_BASE_S,
        session: requests.Session | None = None,
    ) -> None:
        if not endpoint:
            raise ValueError("endpoint must be non-empty")
        self.endpoint = endpoint.rstrip("/")
        self.timeout_s = timeout_s
        self.retries = retries
        self.backoff_s = backoff_s
        self.session = session or requests.Session()
        self.model_version: str | None = None

    def _post(self, path: str, payload: dict, pairs=None) -> dict:
        url = f"{self.endpoint}{path}"
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                resp = self.session.post(url, json=payload, timeout=self.timeout_s)
            except requests.RequestException as exc:
                last_error = exc
            else:
                if resp.status_code >= 500:
                    last_error = RemoteServiceError(
                        f"{url} returned {resp.status_code}", pairs=pairs
                    )
                elif resp.status_code >= 400:
                    # Client errors will not succeed on retry.
                    raise RemoteServiceError(
                        f"{url} rejected the request with {resp.status_code}: "
                        f"{resp.text[:200]}",
                        pairs=pairs,
                        retriable=False,
                    )
                else:
                    try:
                        body = resp.json()
                    except ValueError as exc:
                        raise ProviderContractError(
                            f"{url} returned non-JSON body: {exc}"
                        )
                    if not isinstance(body, dict):
                        raise ProviderContractError(f"{url} returned a non-object body")
                    version = body.get("model_version")
                    if isinstance(version, str):
                        self.model_version = version
                    return body
            if attempt < self.retries:
                time.sleep(self.backoff_s * (2**attempt))
        raise RemoteServiceError(
            f"{url} unreachable after {self.retries + 1} attempts: {last_error}",
            pairs=pairs,
        )


def _check_probability(value: object, what: str) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ProviderContractError(f"{what} is not a number: {value!r}")
    p = float(value)
    if not 0.0 <= p <= 1.0:
        raise ProviderContractError(f"{what} out of [0, 1]: {p}")
    return p


class RemoteEntailmentProvider(_ServiceClient):
    """Entailment scores from the HTTP service; plugs into scoring.

    ``score`` returns the entailment-class probability only. Batches
    larger than ``batch_size`` are split into chunks; result order
    matches pair order.
    """

    def __init__(
        self,
        endpoint: str,
        timeout_s: float = DEFAULT_TIMEOUT_S,
        retries: int = DEFAULT_RETRIES,
        batch_size: int = DEFAULT_BATCH_SIZE,
        backoff_s: float = _BACKOFF_BASE_S,
        session: requests.Session | None = None,
    ) -> None:
        super().__init__(
            endpoint,
            timeout_s=timeout_s,
            retries=retries,
            backoff_s=backoff_s,
            session=session,
        )
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.batch_size = batch_size

    @property
    def tag(self) -> str:
        if self.model_version:
            return f"remote:{self.model_version}"
        return "remote"

    def score(self, premise: str, hypothesis: str) -> float:
        body = self._post(
            "/entail",
            {"premise": premise, "hypothesis": hypothesis},
            pairs=[(premise, hypothesis)],
        )
        return _check_probability(body.get("entail"), "/entail entail probability")

    def score_batch(self, pairs: Sequence[tuple[str, str]]) -> list[float]:
        scores: list[float] = []
        for start in range(0, len(pairs), self.batch_size):
            chunk = pairs[start : start + self.batch_size]
            body = self._post(
                "/entail_batch",
                {
                    "pairs": [
                        {"premise": p, "hypothesis": h} for p, h in chunk
                    ]
                },
                pairs=list(chunk),
            )
            results = body.get("results")
            if not isinstance(results, list) or len(results) != len(chunk):
                raise ProviderContractError(
                    f"/entail_batch returned {len(results) if isinstance(results, list) else 'no'} "
                    f"results for {len(chunk)} pairs"
                )
            for i, item in enumerate(results):
                if not isinstance(item, dict):
                    raise ProviderContractError(
                        f"/entail_batch result {start + i} is not an object"
                    )
                scores.append(
                    _check_probability(
                        item.get("entail"),
                        f"/entail_batch result {start + i} entail probability",
                    )
                )
        return scores


class RemoteFaithfulnessCritic(_ServiceClient):
    """Hallucination probabilities from the HTTP service's critic model."""

    @property
    def tag(self) -> str:
        if self.model_version:
            return f"remote:{self.model_version}"
        return "remote"

    def hallucination_prob(self, knowledge: str, response: str) -> float:
        body = self._post(
            "/faithful",
            {"knowledge": knowledge, "response": response},
            pairs=[(knowledge, response)],
        )
        return _check_probability(
            body.get("hallucination_prob"), "/faithful hallucination probability"
        )


def check_health(
    endpoint: str, timeout_s: float = DEFAULT_TIMEOUT_S
) -> dict:
    """GET /health; raises a retriable error unless the service is ready."""
    url = f"{endpoint.rstrip('/')}/health"
    try:
        resp = requests.get(url, timeout=timeout_s)
    except requests.RequestException as exc:
        raise RemoteServiceError(f"{url} unreachable: {exc}")
    if resp.status_code != 200:
        raise RemoteServiceError(f"{url} not ready: status {resp.status_code}")
    try:
        return resp.json()
    except ValueError as exc:
        raise ProviderContractError(f"{url} returned non-JSON body: {exc}")
