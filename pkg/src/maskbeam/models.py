"""Model interfaces at the black-box boundary, plus builtin offline backends.

The engine only ever sees three protocols: a target classifier, a masked
infiller, and a similarity scorer. The builtins here are pure functions of
their inputs, so fixture-driven runs are exactly reproducible; the HTTP
adapters in :mod:`maskbeam.remote` satisfy the same protocols.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .core import (
    LabelSet,
    MaskedSequence,
    ProbDist,
    ProtocolError,
    TextSequence,
)

log = logging.getLogger(__name__)

START_KEY = "<s>"  # TableInfiller key for a mask with nothing to its left


@runtime_checkable
class TargetModel(Protocol):
    """The classifier under attack: probability outputs only."""

    def classify(self, texts: Sequence[TextSequence]) -> list[ProbDist]: ...

    def label_set(self) -> LabelSet: ...


@runtime_checkable
class Infiller(Protocol):
    """Proposes tokens for the mask position of a masked sequence."""

    def propose(self, masked: MaskedSequence, min_prob: float) -> list[tuple[str, float]]: ...


@runtime_checkable
class Similarity(Protocol):
    """Scores closeness of two texts in [0, 1]."""

    def score(self, a: TextSequence, b: TextSequence) -> float: ...


def sequence_key(text: TextSequence) -> str:
    """Canonical key of a text for scripted lookups and memoization."""
    return " ".join(text.classification_tokens())


class ScriptedOracle:
    """Target backed by an exact sequence -> distribution table.

    Unmapped sequences get the default distribution, so fixtures only need
    to spell out the sequences whose scores matter.
    """

    def __init__(
        self,
        labels: LabelSet,
        sequences: dict[str, ProbDist],
        default: ProbDist,
    ) -> None:
        if len(default) != labels.size:
            raise ValueError("default distribution length does not match labels")
        for key, dist in sequences.items():
            if len(dist) != labels.size:
                raise ValueError(f"distribution for {key!r} does not match labels")
        self._labels = labels
        self._sequences = dict(sequences)
        self._default = default

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedOracle":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        labels = LabelSet(tuple(data["labels"]))
        sequences = {k: ProbDist(tuple(v)) for k, v in data["sequences"].items()}
        default = ProbDist(tuple(data["default"]))
        return cls(labels, sequences, default)

    def classify(self, texts: Sequence[TextSequence]) -> list[ProbDist]:
        return [self._sequences.get(sequence_key(t), self._default) for t in texts]

    def label_set(self) -> LabelSet:
        return self._labels


class KeywordSoftmaxClassifier:
    """Toy target: per-label keyword weights, summed and softmaxed.

    score(label) = sum of that label's weights over the classified tokens
    (counting multiplicity), divided by the temperature. Pure and cheap,
    which makes it usable as a 200-instance benchmark target.
    """

    def __init__(
        self,
        labels: LabelSet,
        weights: dict[str, dict[str, float]],
        temperature: float = 1.0,
    ) -> None:
        if temperature <= 0:
            raise ValueError(f"temperature must be positive, got {temperature}")
        unknown = set(weights) - set(labels.labels)
        if unknown:
            raise ValueError(f"weights for unknown labels: {sorted(unknown)}")
        self._labels = labels
        self._weights = [dict(weights.get(name, {})) for name in labels.labels]
        self._temperature = temperature

    @classmethod
    def from_file(cls, path: str | Path) -> "KeywordSoftmaxClassifier":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            LabelSet(tuple(data["labels"])),
            data["weights"],
            float(data.get("temperature", 1.0)),
        )

    def classify(self, texts: Sequence[TextSequence]) -> list[ProbDist]:
        out = []
        for text in texts:
            tokens = text.classification_tokens()
            scores = np.array(
                [sum(table.get(tok, 0.0) for tok in tokens) for table in self._weights]
            )
            scores = scores / self._temperature
            scores -= scores.max()  # stable softmax
            exp = np.exp(scores)
            probs = exp / exp.sum()
            out.append(ProbDist(tuple(float(p) for p in probs)))
        return out

    def label_set(self) -> LabelSet:
        return self._labels


class TableInfiller:
    """Deterministic infiller: proposals keyed by the token left of the mask.

    A mask at the start of the sequence looks up the ``<s>`` key. Proposal
    probabilities are taken verbatim from the table; `propose` applies the
    min-probability filter.
    """

    def __init__(self, table: dict[str, list[tuple[str, float]]]) -> None:
        for key, proposals in table.items():
            for token, prob in proposals:
                if not 0.0 < prob <= 1.0:
                    raise ValueError(f"proposal prob for {key!r}/{token!r} outside (0, 1]")
        self._table = {k: list(v) for k, v in table.items()}

    @classmethod
    def from_file(cls, path: str | Path) -> "TableInfiller":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        table = {
            key: [(str(tok), float(prob)) for tok, prob in proposals]
            for key, proposals in data["table"].items()
        }
        return cls(table)

    def propose(self, masked: MaskedSequence, min_prob: float) -> list[tuple[str, float]]:
        j = masked.mask_index
        key = masked.tokens[j - 1] if j > 0 else START_KEY
        return [(tok, p) for tok, p in self._table.get(key, []) if p > min_prob]


class JaccardSimilarity:
    """Token-set Jaccard overlap of the perturbable segments."""

    def score(self, a: TextSequence, b: TextSequence) -> float:
        sa, sb = set(a.tokens), set(b.tokens)
        union = sa | sb
        if not union:
            return 1.0
        return len(sa & sb) / len(union)


class EmbeddingSimilarity:
    """Cosine similarity of mean-pooled token embeddings.

    Out-of-vocabulary tokens map to the zero vector; negative cosines clamp
    to 0. Two entirely-OOV texts score 0 with a logged warning. Pair tasks
    compare the perturbable segment only, so the constant segment cannot
    mask real drift.
    """

    def __init__(self, vectors: dict[str, Sequence[float]]) -> None:
        if not vectors:
            raise ValueError("empty embedding table")
        dims = {len(v) for v in vectors.values()}
        if len(dims) != 1:
            raise ValueError(f"inconsistent embedding dimensions: {sorted(dims)}")
        self._dim = dims.pop()
        self._vectors = {tok: np.asarray(v, dtype=float) for tok, v in vectors.items()}

    @classmethod
    def from_file(cls, path: str | Path) -> "EmbeddingSimilarity":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(data)

    def _pool(self, tokens: Sequence[str]) -> tuple[np.ndarray, bool]:
        zero = np.zeros(self._dim)
        vecs = [self._vectors.get(tok, zero) for tok in tokens]
        any_known = any(tok in self._vectors for tok in tokens)
        return np.mean(vecs, axis=0), any_known

    def score(self, a: TextSequence, b: TextSequence) -> float:
        va, known_a = self._pool(a.tokens)
        vb, known_b = self._pool(b.tokens)
        if not known_a and not known_b:
            log.warning("both texts entirely out of embedding vocabulary; similarity 0")
            return 0.0
        na, nb = np.linalg.norm(va), np.linalg.norm(vb)
        if na == 0.0 or nb == 0.0:
            return 0.0
        cos = float(np.dot(va, vb) / (na * nb))
        return max(0.0, min(1.0, cos))


def embedding_cosine_similarity(
    a: TextSequence, b: TextSequence, vectors: dict[str, Sequence[float]]
) -> float:
    """One-shot helper over :class:`EmbeddingSimilarity` for a loaded table."""
    return EmbeddingSimilarity(vectors).score(a, b)


class CountingTarget:
    """Memoizing wrapper around a target model.

    The engine treats the target as deterministic, so repeated sequences are
    served from cache. ``unique_queries`` counts distinct sequences sent to
    the backend (the black-box cost); ``raw_calls`` counts every classify
    request the engine issued, cache hits included.
    """

    def __init__(self, target: TargetModel) -> None:
        self._target = target
        self._cache: dict[str, ProbDist] = {}
        self.unique_queries = 0
        self.raw_calls = 0

    def classify(self, texts: Sequence[TextSequence]) -> list[ProbDist]:
        self.raw_calls += len(texts)
        missing = []
        missing_keys = []
        seen = set()
        for text in texts:
            key = sequence_key(text)
            if key not in self._cache and key not in seen:
                seen.add(key)
                missing.append(text)
                missing_keys.append(key)
        if missing:
            dists = self._target.classify(missing)
            if len(dists) != len(missing):
                raise ProtocolError(
                    f"target returned {len(dists)} distributions for {len(missing)} texts"
                )
            size = self._target.label_set().size
            for key, dist in zip(missing_keys, dists):
                if len(dist) != size:
                    raise ProtocolError(
                        f"target returned a {len(dist)}-class distribution for a "
                        f"{size}-label task"
                    )
                self._cache[key] = dist
            self.unique_queries += len(missing)
        return [self._cache[sequence_key(t)] for t in texts]

    def label_set(self) -> LabelSet:
        return self._target.label_set()


@dataclass
class ModelBundle:
    """The three backends an attack needs, plus the classify batch size."""

    target: TargetModel
    infiller: Infiller
    similarity: Similarity
    batch_size: int = 64

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")

    def classify_batched(self, target: TargetModel, texts: Sequence[TextSequence]) -> list[ProbDist]:
        """Classify in chunks of at most ``batch_size`` texts per call."""
        out: list[ProbDist] = []
        for i in range(0, len(texts), self.batch_size):
            out.extend(target.classify(texts[i : i + self.batch_size]))
        return out
