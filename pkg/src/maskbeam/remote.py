"""HTTP adapters for remote model backends.

Wire protocol (UTF-8 JSON over HTTP, shared with the inference server):

  POST /classify    {"texts": [[[tok, ...], ...], ...]}
                    -> {"labels": [...], "probs": [[...], ...]}
                    each text is an array of segments, each segment an array
                    of word tokens; an empty texts list just reports labels
  POST /infill      {"tokens": [...], "mask_index": j, "min_prob": a, "top_n": n}
                    -> {"proposals": [{"token": t, "prob": p}, ...]}
                    the mask sentinel on the wire is the literal "<mask>"
  POST /similarity  {"pairs": [[[tok, ...], [tok, ...]], ...]}
                    -> {"scores": [s, ...]}
  POST /perplexity  {"sentences": [...]} -> {"perplexities": [...]}
  POST /grammar     {"sentences": [...]} -> {"error_counts": [...]}
  GET  /healthz     -> {"status": "ok"}

Errors come back as {"error": "..."} with a non-200 status. Network and
timeout failures retry with exponential backoff before giving up.
"""

from __future__ import annotations

import logging
import time
from typing import Sequence

import requests
from requests.adapters import HTTPAdapter

from .core import (
    BackendError,
    LabelSet,
    MASK_TOKEN,
    MaskedSequence,
    ProbDist,
    ProtocolError,
    TextSequence,
)

log = logging.getLogger(__name__)

RENORM_TOLERANCE = 1e-4
DEFAULT_TIMEOUT = 30.0
DEFAULT_RETRIES = 3
DEFAULT_BACKOFF = 0.5
DEFAULT_TOP_N = 50


class HttpClient:
    """Shared POST-with-retry plumbing for one endpoint base URL."""

    def __init__(
        self,
        base_url: str,
        timeout: float = DEFAULT_TIMEOUT,
        retries: int = DEFAULT_RETRIES,
        backoff: float = DEFAULT_BACKOFF,
        connection_limit: int = 8,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self._session = requests.Session()
        adapter = HTTPAdapter(pool_connections=connection_limit, pool_maxsize=connection_limit)
        self._session.mount("http://", adapter)
        self._session.mount("https://", adapter)

    def post(self, route: str, payload: dict) -> dict:
        url = f"{self.base_url}{route}"
        delay = self.backoff
        last: Exception | None = None
        for attempt in range(self.retries):
            try:
                resp = self._session.post(url, json=payload, timeout=self.timeout)
            except (requests.ConnectionError, requests.Timeout) as exc:
                last = exc
                if attempt + 1 < self.retries:
                    time.sleep(delay)
                    delay *= 2
                continue
            if resp.status_code != 200:
                try:
                    detail = resp.json().get("error", resp.text)
                except ValueError:
                    detail = resp.text
                raise BackendError(f"{url} returned {resp.status_code}: {detail}")
            try:
                body = resp.json()
            except ValueError:
                raise ProtocolError(f"{url} returned non-JSON body") from None
            if not isinstance(body, dict):
                raise ProtocolError(f"{url} returned a non-object body")
            return body
        raise BackendError(f"{url} unreachable after {self.retries} attempts: {last}")

    def healthy(self) -> bool:
        try:
            resp = self._session.get(f"{self.base_url}/healthz", timeout=self.timeout)
            return resp.status_code == 200 and resp.json().get("status") == "ok"
        except (requests.RequestException, ValueError):
            return False


def text_to_wire(text: TextSequence) -> list[list[str]]:
    return [list(seg) for seg in text.segments]


def _parse_dist(raw, size: int, context: str) -> ProbDist:
    if not isinstance(raw, list) or len(raw) != size:
        raise ProtocolError(f"{context}: expected a {size}-class distribution, got {raw!r}")
    try:
        probs = [float(p) for p in raw]
    except (TypeError, ValueError):
        raise ProtocolError(f"{context}: non-numeric probability in {raw!r}") from None
    total = sum(probs)
    if abs(total - 1.0) > RENORM_TOLERANCE:
        raise ProtocolError(f"{context}: probabilities sum to {total}")
    if abs(total - 1.0) > 1e-9:  # real drift: renormalize; float dust: keep verbatim
        probs = [p / total for p in probs]
    return ProbDist(tuple(probs))


class HttpTargetModel:
    """Remote classifier speaking the /classify protocol."""

    def __init__(self, client: HttpClient) -> None:
        self._client = client
        self._labels: LabelSet | None = None

    def label_set(self) -> LabelSet:
        if self._labels is None:
            body = self._client.post("/classify", {"texts": []})
            self._labels = LabelSet(tuple(body["labels"]))
        return self._labels

    def classify(self, texts: Sequence[TextSequence]) -> list[ProbDist]:
        body = self._client.post("/classify", {"texts": [text_to_wire(t) for t in texts]})
        try:
            labels = tuple(body["labels"])
            raw_probs = body["probs"]
        except (KeyError, TypeError):
            raise ProtocolError(f"{self._client.base_url}/classify: missing fields") from None
        if self._labels is None:
            self._labels = LabelSet(labels)
        elif labels != self._labels.labels:
            raise ProtocolError(
                f"label set changed mid-run: {labels} vs {self._labels.labels}"
            )
        if not isinstance(raw_probs, list) or len(raw_probs) != len(texts):
            raise ProtocolError(
                f"expected {len(texts)} distributions, got {len(raw_probs) if isinstance(raw_probs, list) else raw_probs!r}"
            )
        return [
            _parse_dist(raw, self._labels.size, f"classify[{i}]")
            for i, raw in enumerate(raw_probs)
        ]


class HttpInfiller:
    """Remote masked-LM speaking the /infill protocol.

    Multi-word, non-alphabetic, and sentinel tokens are filtered client-side
    regardless of what the server sends; the min-prob contract is enforced
    here too since a substitute below alpha would poison the filter chain.
    """

    def __init__(self, client: HttpClient, top_n: int = DEFAULT_TOP_N) -> None:
        self._client = client
        self.top_n = top_n

    def propose(self, masked: MaskedSequence, min_prob: float) -> list[tuple[str, float]]:
        body = self._client.post(
            "/infill",
            {
                "tokens": list(masked.tokens),
                "mask_index": masked.mask_index,
                "min_prob": min_prob,
                "top_n": self.top_n,
            },
        )
        try:
            proposals = body["proposals"]
        except KeyError:
            raise ProtocolError(f"{self._client.base_url}/infill: missing proposals") from None
        out: list[tuple[str, float]] = []
        for item in proposals:
            try:
                token, prob = str(item["token"]), float(item["prob"])
            except (KeyError, TypeError, ValueError):
                raise ProtocolError(f"bad infill proposal {item!r}") from None
            if token == MASK_TOKEN or not token.isalpha():
                continue
            if prob <= min_prob:
                continue
            out.append((token, prob))
        return out


class HttpSimilarity:
    """Remote sentence-similarity encoder; compares perturbable segments."""

    def __init__(self, client: HttpClient) -> None:
        self._client = client

    def score(self, a: TextSequence, b: TextSequence) -> float:
        scores = self.score_pairs([(a, b)])
        return scores[0]

    def score_pairs(self, pairs: Sequence[tuple[TextSequence, TextSequence]]) -> list[float]:
        body = self._client.post(
            "/similarity",
            {"pairs": [[list(a.tokens), list(b.tokens)] for a, b in pairs]},
        )
        try:
            scores = [float(s) for s in body["scores"]]
        except (KeyError, TypeError, ValueError):
            raise ProtocolError(f"{self._client.base_url}/similarity: bad scores") from None
        if len(scores) != len(pairs):
            raise ProtocolError(f"expected {len(pairs)} scores, got {len(scores)}")
        return [max(0.0, min(1.0, s)) for s in scores]


class HttpQualityClient:
    """Optional perplexity / grammar endpoints used by the metrics module."""

    def __init__(self, client: HttpClient) -> None:
        self._client = client

    def perplexity(self, sentences: Sequence[str]) -> list[float]:
        body = self._client.post("/perplexity", {"sentences": list(sentences)})
        return [float(v) for v in body["perplexities"]]

    def grammar_errors(self, sentences: Sequence[str]) -> list[int]:
        body = self._client.post("/grammar", {"sentences": list(sentences)})
        return [int(v) for v in body["error_counts"]]
