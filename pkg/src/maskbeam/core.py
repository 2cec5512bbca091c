"""Core domain types shared by the whole engine.

Everything here is an immutable value object: label sets, probability
distributions, token sequences, perturbation actions and their records.
Instances are safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Sequence

MASK_TOKEN = "<mask>"
SEP_TOKEN = "[SEP]"

SUM_TOLERANCE = 1e-6


class EngineError(Exception):
    """Base class for all engine errors."""


class ConfigError(EngineError):
    """Invalid attack or run configuration."""


class InvalidLabelSetError(EngineError):
    """A label set with fewer than two labels (or duplicates)."""


class DatasetError(EngineError):
    """Malformed dataset, corpus, or config file."""


class BackendError(EngineError):
    """A model backend failed (network, timeout, server error)."""


class ProtocolError(BackendError):
    """A model backend answered, but with a malformed or inconsistent payload."""


class MetricUndefinedError(EngineError):
    """A metric was requested over an empty denominator."""


class GuardError(EngineError):
    """A brute-force oracle was invoked outside its size guard."""


@dataclass(frozen=True)
class LabelSet:
    """Ordered class labels of the target task. Indices are stable for a run."""

    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.labels) < 2:
            raise InvalidLabelSetError(f"need at least 2 labels, got {len(self.labels)}")
        if len(set(self.labels)) != len(self.labels):
            raise InvalidLabelSetError(f"duplicate label names in {self.labels}")

    @property
    def size(self) -> int:
        return len(self.labels)

    def index(self, name: str) -> int:
        try:
            return self.labels.index(name)
        except ValueError:
            raise InvalidLabelSetError(f"unknown label {name!r}, have {self.labels}") from None


@dataclass(frozen=True)
class ProbDist:
    """A class-probability vector as returned by the target model."""

    probs: tuple[float, ...]

    def __post_init__(self) -> None:
        if any(p < -1e-9 or p > 1 + 1e-9 for p in self.probs):
            raise ValueError(f"probabilities outside [0, 1]: {self.probs}")
        total = sum(self.probs)
        if abs(total - 1.0) > SUM_TOLERANCE:
            raise ValueError(f"probabilities sum to {total}, not 1")

    def __len__(self) -> int:
        return len(self.probs)

    def __getitem__(self, i: int) -> float:
        return self.probs[i]

    def argmax(self) -> int:
        """Index of the largest probability; ties break to the lowest index."""
        best = 0
        for i in range(1, len(self.probs)):
            if self.probs[i] > self.probs[best]:
                best = i
        return best


@dataclass(frozen=True)
class TextSequence:
    """Tokenized text: one segment, or two for premise/hypothesis tasks.

    Only the segment at ``perturbable`` ever receives attack actions; the
    other segment (if any) is carried along unchanged for classification.
    """

    segments: tuple[tuple[str, ...], ...]
    perturbable: int = 0

    def __post_init__(self) -> None:
        if not 1 <= len(self.segments) <= 2:
            raise ValueError(f"expected 1 or 2 segments, got {len(self.segments)}")
        if any(len(seg) == 0 for seg in self.segments):
            raise ValueError("empty segment")
        if not 0 <= self.perturbable < len(self.segments):
            raise ValueError(f"perturbable index {self.perturbable} out of range")

    @classmethod
    def from_text(cls, text: str) -> "TextSequence":
        return cls(segments=(tuple(text.split()),))

    @classmethod
    def from_pair(cls, first: str, second: str, perturbable: int = 0) -> "TextSequence":
        return cls(segments=(tuple(first.split()), tuple(second.split())), perturbable=perturbable)

    @property
    def tokens(self) -> tuple[str, ...]:
        """Tokens of the perturbable segment."""
        return self.segments[self.perturbable]

    @property
    def n(self) -> int:
        """Length of the perturbable segment."""
        return len(self.segments[self.perturbable])

    def with_perturbable(self, tokens: Iterable[str]) -> "TextSequence":
        new = tuple(tuple(seg) for seg in self.segments)
        new = new[: self.perturbable] + (tuple(tokens),) + new[self.perturbable + 1 :]
        return TextSequence(segments=new, perturbable=self.perturbable)

    def classification_tokens(self) -> tuple[str, ...]:
        """All tokens as seen by a classifier: segments joined with [SEP]."""
        if len(self.segments) == 1:
            return self.segments[0]
        return self.segments[0] + (SEP_TOKEN,) + self.segments[1]

    def text(self) -> str:
        return " ".join(self.classification_tokens())


@dataclass(frozen=True)
class Instance:
    """A dataset item: an input text with its gold label index."""

    id: str
    text: TextSequence
    gold: int

    def __post_init__(self) -> None:
        if self.gold < 0:
            raise ValueError(f"negative gold label index {self.gold}")


class ActionKind(IntEnum):
    """Perturbation kinds, ordered for deterministic tie-breaking."""

    REPLACE = 0
    INSERT = 1
    MERGE = 2

    @property
    def wire(self) -> str:
        return self.name.lower()

    @classmethod
    def from_wire(cls, name: str) -> "ActionKind":
        try:
            return cls[name.upper()]
        except KeyError:
            raise ValueError(f"unknown action kind {name!r}") from None


@dataclass(frozen=True)
class MaskedSequence:
    """A perturbable segment with exactly one mask sentinel.

    ``origin_pos`` is a 1-based position in the source segment; ``replaced``
    holds the tokens the mask displaced (empty for Insert, one for Replace,
    two for a mid-sequence Merge).
    """

    tokens: tuple[str, ...]
    kind: ActionKind
    origin_pos: int
    replaced: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.tokens.count(MASK_TOKEN) != 1:
            raise ValueError(f"expected exactly one {MASK_TOKEN}, got {self.tokens}")
        if self.origin_pos < 1:
            raise ValueError(f"origin_pos must be 1-based, got {self.origin_pos}")

    @property
    def mask_index(self) -> int:
        """0-based index of the mask sentinel."""
        return self.tokens.index(MASK_TOKEN)


@dataclass(frozen=True)
class Substitute:
    """An infiller proposal that survived the probability and similarity filters.

    ``dist`` and ``score`` are attached once the infilled candidate has been
    classified; they are None straight out of the filter.
    """

    token: str
    mlm_prob: float
    similarity: float
    candidate: "TextSequence"
    dist: ProbDist | None = None
    score: float | None = None


@dataclass(frozen=True)
class ScoredAction:
    """A concrete perturbation with its score under the active scoring mode."""

    kind: ActionKind
    position: int
    substitute: Substitute
    score: float
    candidate: TextSequence
    dist: ProbDist
    rank: int = 0  # rank within the per-mask substitute selection; tie-break only

    @property
    def token(self) -> str:
        return self.substitute.token

    def sort_key(self) -> tuple:
        return (self.score, self.position, int(self.kind), self.rank)


@dataclass(frozen=True)
class PathStep:
    """Persistable summary of one applied action."""

    kind: ActionKind
    position: int
    token: str
    score: float


SCORING_MODES = ("prob_diff", "gold_prob")
SEARCH_MODES = ("beam", "greedy")


@dataclass(frozen=True)
class AttackConfig:
    """Knobs of a single attack run.

    ``epsilon`` defaults to ``beta`` so one similarity bar governs both the
    substitute filter and the final success check; it can be raised
    independently but never below ``beta``.
    """

    beam_size: int = 10
    max_iters: int = 10
    alpha: float = 5e-3
    beta: float = 0.7
    epsilon: float | None = None
    scoring: str = "prob_diff"
    search: str = "beam"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epsilon is None:
            object.__setattr__(self, "epsilon", self.beta)
        if self.beam_size < 1:
            raise ConfigError(f"beam_size must be >= 1, got {self.beam_size}")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must be in (0, 1), got {self.alpha}")
        if not 0.0 < self.beta <= 1.0:
            raise ConfigError(f"beta must be in (0, 1], got {self.beta}")
        if self.epsilon < self.beta:
            raise ConfigError(f"epsilon ({self.epsilon}) must be >= beta ({self.beta})")
        if self.scoring not in SCORING_MODES:
            raise ConfigError(f"scoring must be one of {SCORING_MODES}, got {self.scoring!r}")
        if self.search not in SEARCH_MODES:
            raise ConfigError(f"search must be one of {SEARCH_MODES}, got {self.search!r}")
        if self.search == "greedy" and self.beam_size != 1:
            raise ConfigError("greedy search requires beam_size == 1")


STATUS_SUCCESS = "success"
STATUS_FAILED = "failed"
STATUS_SKIPPED = "skipped_misclassified"
STATUS_EXHAUSTED = "search_exhausted"
STATUS_BACKEND_ERROR = "backend_error"

STATUSES = (
    STATUS_SUCCESS,
    STATUS_FAILED,
    STATUS_SKIPPED,
    STATUS_EXHAUSTED,
    STATUS_BACKEND_ERROR,
)


@dataclass(frozen=True)
class AttackRecord:
    """Outcome of attacking one instance."""

    instance_id: str
    status: str
    original: TextSequence
    gold: int
    path: tuple[PathStep, ...] = ()
    adversarial: TextSequence | None = None
    iterations: int = 0
    query_count: int = 0
    raw_queries: int = 0
    sim: float | None = None
    final_dist: ProbDist | None = None

    def __post_init__(self) -> None:
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")

    @property
    def success(self) -> bool:
        return self.status == STATUS_SUCCESS


def probability_difference(dist: ProbDist | Sequence[float], gold: int) -> float:
    """Gold-label probability minus the best probability among the other labels.

    Negative iff the model is fooled (up to exact ties); range [-1, 1].
    """
    probs = dist.probs if isinstance(dist, ProbDist) else tuple(dist)
    if len(probs) < 2:
        raise InvalidLabelSetError(f"need at least 2 classes, got {len(probs)}")
    if not 0 <= gold < len(probs):
        raise ValueError(f"gold index {gold} out of range for {len(probs)} classes")
    best_other = max(p for j, p in enumerate(probs) if j != gold)
    return probs[gold] - best_other


def is_fooled(dist: ProbDist, gold: int) -> bool:
    """True iff the predicted label differs from gold (argmax ties -> lowest index)."""
    return dist.argmax() != gold


def action_score(dist: ProbDist, gold: int, scoring: str) -> float:
    """Score of a candidate under the active mode; lower is better."""
    if scoring == "prob_diff":
        return probability_difference(dist, gold)
    if scoring == "gold_prob":
        return dist[gold]
    raise ConfigError(f"unknown scoring mode {scoring!r}")
