"""Mask-then-infill machinery.

Three masking operations (Replace, Insert, Merge) turn a sequence of n
tokens into 3n masked sequences. The infiller proposes tokens for each mask;
proposals survive only if the infiller probability clears ``alpha`` and the
infilled candidate stays within ``beta`` similarity of the original input.
Each surviving candidate is classified and scored, and the best actions are
pooled across all masks.
"""

from __future__ import annotations

from dataclasses import dataclass, replace as dc_replace

from .core import (
    MASK_TOKEN,
    ActionKind,
    AttackConfig,
    MaskedSequence,
    ScoredAction,
    Substitute,
    TextSequence,
    action_score,
)
from .models import Infiller, ModelBundle, Similarity, TargetModel


def _check_position(x: TextSequence, i: int) -> None:
    if not 1 <= i <= x.n:
        raise ValueError(f"position {i} out of range 1..{x.n}")


def mask_replace(x: TextSequence, i: int) -> MaskedSequence:
    """Mask the token at position i (1-based). Length stays n."""
    _check_position(x, i)
    toks = x.tokens
    return MaskedSequence(
        tokens=toks[: i - 1] + (MASK_TOKEN,) + toks[i:],
        kind=ActionKind.REPLACE,
        origin_pos=i,
        replaced=(toks[i - 1],),
    )


def mask_insert(x: TextSequence, i: int) -> MaskedSequence:
    """Insert a mask after the token at position i. Length grows to n+1.

    i = n appends the mask at the end of the sequence.
    """
    _check_position(x, i)
    toks = x.tokens
    return MaskedSequence(
        tokens=toks[:i] + (MASK_TOKEN,) + toks[i:],
        kind=ActionKind.INSERT,
        origin_pos=i,
        replaced=(),
    )


def mask_merge(x: TextSequence, i: int) -> MaskedSequence:
    """Mask the bigram starting at position i. Length shrinks to n-1.

    At the last position there is no bigram; the mask displaces just the
    final token and the length stays n.
    """
    _check_position(x, i)
    toks = x.tokens
    if i == x.n:
        return MaskedSequence(
            tokens=toks[: i - 1] + (MASK_TOKEN,),
            kind=ActionKind.MERGE,
            origin_pos=i,
            replaced=(toks[i - 1],),
        )
    return MaskedSequence(
        tokens=toks[: i - 1] + (MASK_TOKEN,) + toks[i + 1 :],
        kind=ActionKind.MERGE,
        origin_pos=i,
        replaced=(toks[i - 1], toks[i]),
    )


_MASKERS = (
    (ActionKind.REPLACE, mask_replace),
    (ActionKind.INSERT, mask_insert),
    (ActionKind.MERGE, mask_merge),
)


def enumerate_masks(x: TextSequence) -> list[MaskedSequence]:
    """All 3n masked sequences, position-major, Replace/Insert/Merge within a position."""
    out = []
    for i in range(1, x.n + 1):
        for _, masker in _MASKERS:
            out.append(masker(x, i))
    return out


def infill(masked: MaskedSequence, token: str) -> tuple[str, ...]:
    """Fill the mask sentinel with a token, yielding a complete segment."""
    j = masked.mask_index
    return masked.tokens[:j] + (token,) + masked.tokens[j + 1 :]


def apply_action(x: TextSequence, kind: ActionKind, i: int, token: str) -> TextSequence:
    """Apply one (kind, position, token) perturbation to a sequence."""
    masker = dict(_MASKERS)[kind]
    masked = masker(x, i)
    return x.with_perturbable(infill(masked, token))


def substitute_set(
    masked: MaskedSequence,
    original: TextSequence,
    cfg: AttackConfig,
    infiller: Infiller,
    similarity: Similarity,
) -> list[Substitute]:
    """Infiller proposals that clear both the alpha and beta thresholds.

    Similarity is measured between the infilled candidate and the attack's
    original input (not the current beam sequence), which keeps cumulative
    drift bounded across iterations. A Replace proposal equal to the token
    it would replace is dropped: it would be a no-op action.
    """
    subs: list[Substitute] = []
    for token, prob in infiller.propose(masked, cfg.alpha):
        if prob <= cfg.alpha or token == MASK_TOKEN:
            continue
        if masked.kind is ActionKind.REPLACE and token == masked.replaced[0]:
            continue
        candidate = original.with_perturbable(infill(masked, token))
        sim = similarity.score(candidate, original)
        if sim <= cfg.beta:
            continue
        subs.append(Substitute(token=token, mlm_prob=prob, similarity=sim, candidate=candidate))
    return subs


def select_substitutes(
    subs: list[Substitute], gold: int, k: int, scoring: str
) -> list[Substitute]:
    """The k substitutes whose candidates score lowest under the active mode.

    Equivalent to the iterated argmin-with-exclusion selection, but computed
    as a single k-smallest sort. Ties break by token lexicographic order.
    Every substitute must already carry its classified distribution.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    scored = [
        dc_replace(s, score=action_score(s.dist, gold, scoring)) for s in subs
    ]
    scored.sort(key=lambda s: (s.score, s.token))
    return scored[:k]


@dataclass(frozen=True)
class ActionBatch:
    """Best actions available from one source sequence, sorted ascending."""

    source: TextSequence
    actions: tuple[ScoredAction, ...]


def get_best_actions(
    x: TextSequence,
    gold: int,
    cfg: AttackConfig,
    models: ModelBundle,
    target: TargetModel | None = None,
    original: TextSequence | None = None,
) -> ActionBatch:
    """Top beam_size actions for a sequence, pooled over all 3n masks.

    Per mask, every surviving substitute is classified in one batched call
    and the beam_size best are kept; the per-mask winners are then pooled
    (at most 3*n*beam_size actions) and the overall beam_size best returned.
    The sort is a total order, so identical inputs give identical output.

    ``target`` lets the caller supply a per-attack counting wrapper;
    ``original`` is the similarity anchor (defaults to ``x`` itself).
    """
    target = target if target is not None else models.target
    original = original if original is not None else x
    pool: list[ScoredAction] = []
    for masked in enumerate_masks(x):
        subs = substitute_set(masked, original, cfg, models.infiller, models.similarity)
        if not subs:
            continue
        dists = models.classify_batched(target, [s.candidate for s in subs])
        subs = [dc_replace(s, dist=d) for s, d in zip(subs, dists)]
        chosen = select_substitutes(subs, gold, cfg.beam_size, cfg.scoring)
        for rank, sub in enumerate(chosen):
            pool.append(
                ScoredAction(
                    kind=masked.kind,
                    position=masked.origin_pos,
                    substitute=sub,
                    score=sub.score,
                    candidate=sub.candidate,
                    dist=sub.dist,
                    rank=rank,
                )
            )
    pool.sort(key=ScoredAction.sort_key)
    return ActionBatch(source=x, actions=tuple(pool[: cfg.beam_size]))
