"""Seeded toy-world generators for benchmarks and verification suites.

These build fully offline attack setups: hash-based oracles whose output is
a pure function of the token sequence, random infiller tables, and a
three-class keyword benchmark hard enough that search quality matters. All
randomness flows from explicit seeds through ``random.Random``; nothing here
touches global RNG state.
"""

from __future__ import annotations

import hashlib
import math
import random
from typing import Sequence

from .core import Instance, LabelSet, ProbDist, TextSequence
from .models import (
    EmbeddingSimilarity,
    KeywordSoftmaxClassifier,
    ModelBundle,
    START_KEY,
    TableInfiller,
    sequence_key,
)


class HashedDirichletTarget:
    """Target whose distribution is a seeded hash of the exact token sequence.

    Total over all possible sequences and deterministic across processes.
    ``tilt`` mixes every distribution toward one anchor label, which controls
    how hard the oracle is to fool: at 0 the landscape is uniform random, at
    0.7 most candidates still predict the anchor.
    """

    def __init__(self, labels: LabelSet, seed: int, anchor: int = 0, tilt: float = 0.0) -> None:
        if not 0.0 <= tilt < 1.0:
            raise ValueError(f"tilt must be in [0, 1), got {tilt}")
        self._labels = labels
        self._seed = seed
        self._anchor = anchor
        self._tilt = tilt

    def _dist(self, key: str) -> ProbDist:
        digest = hashlib.md5(f"{self._seed}|{key}".encode("utf-8")).digest()
        rng = random.Random(int.from_bytes(digest, "big"))
        draws = [rng.expovariate(1.0) for _ in range(self._labels.size)]
        total = sum(draws)
        probs = [
            (1.0 - self._tilt) * d / total + (self._tilt if i == self._anchor else 0.0)
            for i, d in enumerate(draws)
        ]
        return ProbDist(tuple(probs))

    def classify(self, texts: Sequence[TextSequence]) -> list[ProbDist]:
        return [self._dist(sequence_key(t)) for t in texts]

    def label_set(self) -> LabelSet:
        return self._labels


class ConstantSimilarity:
    """Similarity stub returning a fixed score for any pair."""

    def __init__(self, value: float = 1.0) -> None:
        self.value = value

    def score(self, a: TextSequence, b: TextSequence) -> float:
        return self.value


def make_toy_case(seed: int, n_labels: int = 3) -> tuple[Instance, ModelBundle]:
    """One tiny random attack setup, within the exhaustive oracle's guards.

    2-4 tokens, at most 3 infiller proposals per mask, constant similarity.
    The gold label usually matches the oracle's prediction so most cases get
    attacked rather than skipped.
    """
    rng = random.Random(seed)
    labels = LabelSet(tuple(f"L{i}" for i in range(n_labels)))
    vocab = [f"w{i}" for i in range(8)]

    table: dict[str, list[tuple[str, float]]] = {}
    for key in vocab + [START_KEY]:
        if rng.random() < 0.75:
            count = rng.randint(1, 3)
            tokens = rng.sample(vocab, count)
            table[key] = [(tok, round(rng.uniform(0.05, 0.4), 6)) for tok in tokens]

    n = rng.randint(2, 4)
    tokens = tuple(rng.choice(vocab) for _ in range(n))
    text = TextSequence((tokens,))

    anchor = rng.randrange(n_labels)
    tilt = rng.uniform(0.1, 0.75)
    target = HashedDirichletTarget(labels, seed, anchor=anchor, tilt=tilt)
    if rng.random() < 0.75:
        gold = target.classify([text])[0].argmax()
    else:
        gold = rng.randrange(n_labels)

    bundle = ModelBundle(
        target=target,
        infiller=TableInfiller(table),
        similarity=ConstantSimilarity(1.0),
    )
    return Instance(id=f"toy-{seed}", text=text, gold=gold), bundle


BENCH_LABELS = ("red", "green", "blue")


def make_keyword_benchmark(seed: int, size: int = 200) -> tuple[list[Instance], ModelBundle]:
    """A 3-class keyword-classifier benchmark with a rugged search landscape.

    Each label owns eight "focused" indicative words plus six "diffuse" decoy
    words that carry weight under both OTHER labels: replacing a gold word
    with a gold-homed decoy drains the gold probability quickly (seductive
    when scoring by gold probability alone) but splits the gain across both
    challengers, so the decision boundary stays distant. Sentences are six
    or seven gold words plus neutral filler, proposals are scarce and keyed
    on the left neighbor, and a slice of the vocabulary carries outlier
    embeddings the similarity filter rejects. Greedy search does not
    saturate this benchmark and wider beams measurably help.
    """
    rng = random.Random(seed)
    labels = LabelSet(BENCH_LABELS)
    focused = {name: [f"{name[0]}{i}" for i in range(8)] for name in BENCH_LABELS}
    diffuse = {name: [f"{name[0]}x{i}" for i in range(6)] for name in BENCH_LABELS}
    neutral = [f"n{i}" for i in range(8)]
    vocab = (
        [w for name in BENCH_LABELS for w in focused[name]]
        + [w for name in BENCH_LABELS for w in diffuse[name]]
        + neutral
    )

    weights: dict[str, dict[str, float]] = {name: {} for name in BENCH_LABELS}
    for name in BENCH_LABELS:
        for w in focused[name]:
            weights[name][w] = round(rng.uniform(1.1, 1.7), 4)
    for home in BENCH_LABELS:
        for w in diffuse[home]:
            val = round(rng.uniform(0.45, 0.7), 4)
            for other in BENCH_LABELS:
                if other != home:
                    weights[other][w] = val
    target = KeywordSoftmaxClassifier(labels, weights, temperature=2.0)

    dim = 16
    vectors: dict[str, list[float]] = {}
    for w in vocab:
        sigma = 4.0 if rng.random() < 0.15 else 1.0
        noise = [rng.gauss(0.0, 1.0) for _ in range(dim)]
        norm = math.sqrt(sum(x * x for x in noise))
        vec = [sigma * x / norm for x in noise]
        vec[0] += 1.0  # shared base direction keeps in-cluster words close
        vectors[w] = vec
    similarity = EmbeddingSimilarity(vectors)

    table: dict[str, list[tuple[str, float]]] = {}
    for key in vocab + [START_KEY]:
        if rng.random() < 0.5:
            count = rng.randint(1, 3)
            proposals = []
            for _ in range(count):
                roll = rng.random()
                if roll < 0.45:
                    tok = rng.choice(diffuse[rng.choice(BENCH_LABELS)])
                elif roll < 0.75:
                    tok = rng.choice(focused[rng.choice(BENCH_LABELS)])
                elif roll < 0.90:
                    tok = rng.choice(neutral)
                else:
                    tok = rng.choice(vocab)
                proposals.append((tok, round(rng.uniform(0.05, 0.35), 4)))
            # collapse duplicate tokens, keeping the first probability
            seen: dict[str, float] = {}
            for tok, p in proposals:
                seen.setdefault(tok, p)
            table[key] = list(seen.items())
    infiller = TableInfiller(table)

    instances = []
    for i in range(size):
        gold_name = rng.choice(BENCH_LABELS)
        n = rng.randint(8, 10)
        n_gold = rng.randint(6, 7)
        toks = rng.sample(focused[gold_name], n_gold)
        toks += [rng.choice(neutral) for _ in range(n - n_gold)]
        rng.shuffle(toks)
        instances.append(
            Instance(
                id=f"bench-{i:03d}",
                text=TextSequence((tuple(toks),)),
                gold=labels.index(gold_name),
            )
        )

    return instances, ModelBundle(target=target, infiller=infiller, similarity=similarity)
