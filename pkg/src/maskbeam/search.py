"""Attack-path search: probability-difference-guided beam search.

One attack iterates up to ``max_iters`` times. The first iteration expands
only the original input; later iterations pool the best actions of every
beam entry (at most beam_size^2 candidates), keep the overall best
beam_size, and apply them in ascending score order. The first applied
candidate that flips the prediction while staying within the epsilon
similarity bound wins. Greedy search is the beam_size = 1 special case.

``exhaustive_attack`` is a brute-force oracle over the same action space,
guarded to tiny instances; it exists to certify the beam's soundness in
tests, never to attack real inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace as dc_replace

from .actions import enumerate_masks, get_best_actions, substitute_set
from .core import (
    AttackConfig,
    AttackRecord,
    BackendError,
    GuardError,
    Instance,
    PathStep,
    ProbDist,
    ScoredAction,
    STATUS_BACKEND_ERROR,
    STATUS_EXHAUSTED,
    STATUS_FAILED,
    STATUS_SKIPPED,
    STATUS_SUCCESS,
    TextSequence,
    action_score,
    is_fooled,
)
from .models import CountingTarget, ModelBundle, sequence_key


@dataclass(frozen=True)
class BeamEntry:
    """One beam slot: a perturbed sequence with its cumulative action path."""

    seq: TextSequence
    path: tuple[PathStep, ...]
    score: float
    dist: ProbDist
    sim: float


@dataclass(frozen=True)
class BeamState:
    """The beam after iteration ``iteration``; entries sorted ascending by score."""

    iteration: int
    entries: tuple[BeamEntry, ...]


def _step(action: ScoredAction) -> PathStep:
    return PathStep(
        kind=action.kind,
        position=action.position,
        token=action.token,
        score=action.score,
    )


def _record(instance: Instance, status: str, counter: CountingTarget, **kw) -> AttackRecord:
    return AttackRecord(
        instance_id=instance.id,
        status=status,
        original=instance.text,
        gold=instance.gold,
        query_count=counter.unique_queries,
        raw_queries=counter.raw_calls,
        **kw,
    )


def attack(instance: Instance, cfg: AttackConfig, models: ModelBundle) -> AttackRecord:
    """Run the beam-search attack on one instance.

    Originally misclassified instances are not attacked; they come back with
    status ``skipped_misclassified``. A failure record carries the path of
    the best-scoring final beam entry for diagnostics.
    """
    counter = CountingTarget(models.target)
    x0 = instance.text
    try:
        d0 = counter.classify([x0])[0]
        if is_fooled(d0, instance.gold):
            return _record(instance, STATUS_SKIPPED, counter, final_dist=d0)

        beam = BeamState(
            iteration=0,
            entries=(
                BeamEntry(
                    seq=x0,
                    path=(),
                    score=action_score(d0, instance.gold, cfg.scoring),
                    dist=d0,
                    sim=1.0,
                ),
            ),
        )

        for t in range(1, cfg.max_iters + 1):
            pool: list[tuple[ScoredAction, int]] = []
            for parent_idx, entry in enumerate(beam.entries):
                batch = get_best_actions(
                    entry.seq, instance.gold, cfg, models, target=counter, original=x0
                )
                pool.extend((action, parent_idx) for action in batch.actions)
            if not pool:
                best = beam.entries[0]
                return _record(
                    instance,
                    STATUS_EXHAUSTED,
                    counter,
                    path=best.path,
                    iterations=t - 1,
                    sim=best.sim,
                    final_dist=best.dist,
                )

            pool.sort(key=lambda item: (item[0].score, item[1], *item[0].sort_key()[1:]))

            # Apply the top beam_size DISTINCT candidates. Skipping duplicate
            # sequences while filling the slots never loses a success (the
            # duplicate's check would repeat its twin's) and widens the beam.
            new_entries: list[BeamEntry] = []
            seen: set[str] = set()
            for action, parent_idx in pool:
                if len(new_entries) >= cfg.beam_size:
                    break
                key = sequence_key(action.candidate)
                if key in seen:
                    continue
                seen.add(key)
                parent = beam.entries[parent_idx]
                path = parent.path + (_step(action),)
                sim = action.substitute.similarity
                if is_fooled(action.dist, instance.gold) and sim >= cfg.epsilon:
                    return _record(
                        instance,
                        STATUS_SUCCESS,
                        counter,
                        path=path,
                        adversarial=action.candidate,
                        iterations=t,
                        sim=sim,
                        final_dist=action.dist,
                    )
                new_entries.append(
                    BeamEntry(
                        seq=action.candidate,
                        path=path,
                        score=action.score,
                        dist=action.dist,
                        sim=sim,
                    )
                )
            beam = BeamState(iteration=t, entries=tuple(new_entries))

        best = beam.entries[0]
        return _record(
            instance,
            STATUS_FAILED,
            counter,
            path=best.path,
            iterations=cfg.max_iters,
            sim=best.sim,
            final_dist=best.dist,
        )
    except BackendError:
        return _record(instance, STATUS_BACKEND_ERROR, counter)


def attack_greedy(instance: Instance, cfg: AttackConfig, models: ModelBundle) -> AttackRecord:
    """The beam_size = 1 special case of :func:`attack`."""
    return attack(instance, dc_replace(cfg, beam_size=1, search="greedy"), models)


EXHAUSTIVE_MAX_TOKENS = 6
EXHAUSTIVE_MAX_SUBS = 4
EXHAUSTIVE_MAX_ITERS = 3


def exhaustive_attack(instance: Instance, cfg: AttackConfig, models: ModelBundle) -> AttackRecord:
    """Brute-force oracle: explore every action sequence up to max_iters deep.

    Applies the same alpha/beta/epsilon filters as the beam but no top-k
    truncation anywhere, so its reachable set is a superset of any beam's.
    Returns a success of minimal path length if one exists. Refuses to run
    outside its size guard.
    """
    x0 = instance.text
    if x0.n > EXHAUSTIVE_MAX_TOKENS:
        raise GuardError(f"exhaustive oracle limited to n <= {EXHAUSTIVE_MAX_TOKENS}, got {x0.n}")
    if cfg.max_iters > EXHAUSTIVE_MAX_ITERS:
        raise GuardError(
            f"exhaustive oracle limited to max_iters <= {EXHAUSTIVE_MAX_ITERS}, "
            f"got {cfg.max_iters}"
        )

    counter = CountingTarget(models.target)
    d0 = counter.classify([x0])[0]
    if is_fooled(d0, instance.gold):
        return _record(instance, STATUS_SKIPPED, counter, final_dist=d0)

    frontier: list[tuple[TextSequence, tuple[PathStep, ...]]] = [(x0, ())]
    visited = {sequence_key(x0)}
    for depth in range(1, cfg.max_iters + 1):
        next_frontier: list[tuple[TextSequence, tuple[PathStep, ...]]] = []
        for seq, path in frontier:
            for masked in enumerate_masks(seq):
                subs = substitute_set(masked, x0, cfg, models.infiller, models.similarity)
                if len(subs) > EXHAUSTIVE_MAX_SUBS:
                    raise GuardError(
                        f"exhaustive oracle limited to {EXHAUSTIVE_MAX_SUBS} substitutes "
                        f"per mask, got {len(subs)}"
                    )
                if not subs:
                    continue
                dists = counter.classify([s.candidate for s in subs])
                for sub, dist in zip(subs, dists):
                    step = PathStep(
                        kind=masked.kind,
                        position=masked.origin_pos,
                        token=sub.token,
                        score=action_score(dist, instance.gold, cfg.scoring),
                    )
                    if is_fooled(dist, instance.gold) and sub.similarity >= cfg.epsilon:
                        return _record(
                            instance,
                            STATUS_SUCCESS,
                            counter,
                            path=path + (step,),
                            adversarial=sub.candidate,
                            iterations=depth,
                            sim=sub.similarity,
                            final_dist=dist,
                        )
                    key = sequence_key(sub.candidate)
                    if key not in visited:
                        visited.add(key)
                        next_frontier.append((sub.candidate, path + (step,)))
        frontier = next_frontier
        if not frontier:
            break

    return _record(instance, STATUS_FAILED, counter, iterations=cfg.max_iters, final_dist=d0)
