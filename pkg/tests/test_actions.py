from __future__ import annotations

import dataclasses as dc
import random

import pytest

from maskbeam.actions import (
    ActionBatch,
    apply_action,
    enumerate_masks,
    get_best_actions,
    infill,
    mask_insert,
    mask_merge,
    mask_replace,
    select_substitutes,
    substitute_set,
)
from maskbeam.core import (
    MASK_TOKEN,
    ActionKind,
    AttackConfig,
    LabelSet,
    ProbDist,
    Substitute,
    TextSequence,
    action_score,
)
from maskbeam.models import (
    EmbeddingSimilarity,
    ModelBundle,
    ScriptedOracle,
    TableInfiller,
)
from maskbeam.toys import ConstantSimilarity, make_toy_case

ABC = TextSequence.from_text("a b c")


class TestMaskReplace:
    def test_middle(self):
        m = mask_replace(ABC, 2)
        assert m.tokens == ("a", MASK_TOKEN, "c")
        assert m.kind is ActionKind.REPLACE and m.origin_pos == 2
        assert m.replaced == ("b",)

    def test_single_token(self):
        assert mask_replace(TextSequence.from_text("a"), 1).tokens == (MASK_TOKEN,)

    def test_last(self):
        assert mask_replace(ABC, 3).tokens == ("a", "b", MASK_TOKEN)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            mask_replace(ABC, 0)
        with pytest.raises(ValueError):
            mask_replace(ABC, 4)


class TestMaskInsert:
    def test_after_first(self):
        m = mask_insert(ABC, 1)
        assert m.tokens == ("a", MASK_TOKEN, "b", "c")
        assert m.mask_index == 1  # sentinel sits at position i+1

    def test_append_at_end(self):
        assert mask_insert(ABC, 3).tokens == ("a", "b", "c", MASK_TOKEN)

    def test_single_token(self):
        assert mask_insert(TextSequence.from_text("a"), 1).tokens == ("a", MASK_TOKEN)


class TestMaskMerge:
    def test_bigram(self):
        m = mask_merge(ABC, 1)
        assert m.tokens == (MASK_TOKEN, "c")
        assert m.replaced == ("a", "b")

    def test_last_position_degenerates_to_replace(self):
        m = mask_merge(ABC, 3)
        assert m.tokens == mask_replace(ABC, 3).tokens
        assert m.kind is ActionKind.MERGE
        assert m.replaced == ("c",)

    def test_two_tokens(self):
        assert mask_merge(TextSequence.from_text("a b"), 1).tokens == (MASK_TOKEN,)


class TestEnumerateMasks:
    @pytest.mark.parametrize("n,expected", [(1, 3), (3, 9), (5, 15)])
    def test_count_is_three_per_position(self, n, expected):
        x = TextSequence.from_text(" ".join(f"w{i}" for i in range(n)))
        assert len(enumerate_masks(x)) == expected

    def test_order_position_major(self):
        masks = enumerate_masks(ABC)
        assert [(m.origin_pos, m.kind) for m in masks] == [
            (i, k) for i in (1, 2, 3) for k in (ActionKind.REPLACE, ActionKind.INSERT, ActionKind.MERGE)
        ]

    def test_every_position_appears_three_times(self):
        x = TextSequence.from_text("v w x y z")
        masks = enumerate_masks(x)
        for i in range(1, 6):
            assert sum(1 for m in masks if m.origin_pos == i) == 3


class TestInfillAndApply:
    def test_infill_fills_the_sentinel(self):
        assert infill(mask_replace(ABC, 2), "z") == ("a", "z", "c")

    def test_apply_action_matches_mask_plus_infill(self):
        assert apply_action(ABC, ActionKind.INSERT, 3, "z").tokens == ("a", "b", "c", "z")
        assert apply_action(ABC, ActionKind.MERGE, 1, "z").tokens == ("z", "c")

    def test_apply_preserves_other_segment(self):
        pair = TextSequence.from_pair("p q", "a b c", perturbable=1)
        out = apply_action(pair, ActionKind.REPLACE, 2, "z")
        assert out.segments == (("p", "q"), ("a", "z", "c"))


def _cfg(**kw):
    return AttackConfig(max_iters=2, **kw)


class TestSubstituteSet:
    def test_alpha_filter(self):
        infiller = TableInfiller({"the": [("good", 0.4), ("rare", 1e-4)]})
        x = TextSequence.from_text("the movie")
        masked = mask_replace(x, 2)
        subs = substitute_set(masked, x, _cfg(alpha=5e-3), infiller, ConstantSimilarity())
        assert [s.token for s in subs] == ["good"]

    def test_beta_filter(self):
        infiller = TableInfiller({"the": [("good", 0.4)]})
        x = TextSequence.from_text("the movie")
        masked = mask_replace(x, 2)
        subs = substitute_set(masked, x, _cfg(beta=0.7), infiller, ConstantSimilarity(0.65))
        assert subs == []

    def test_menu_fixture_by_hand(self):
        # alpha alone decides here: 0.3 and 0.2 survive, 0.001 does not
        infiller = TableInfiller({"is": [("tasty", 0.3), ("awful", 0.2), ("xq", 0.001)]})
        x = TextSequence.from_text("the food is good")
        masked = mask_replace(x, 4)
        subs = substitute_set(masked, x, _cfg(alpha=5e-3), infiller, ConstantSimilarity())
        assert [s.token for s in subs] == ["tasty", "awful"]

    def test_replace_rejects_noop_token(self):
        infiller = TableInfiller({"a": [("b", 0.3), ("z", 0.3)]})
        subs = substitute_set(mask_replace(ABC, 2), ABC, _cfg(), infiller, ConstantSimilarity())
        assert [s.token for s in subs] == ["z"]

    def test_insert_may_duplicate_neighbor_token(self):
        infiller = TableInfiller({"a": [("b", 0.3)]})
        subs = substitute_set(mask_insert(ABC, 1), ABC, _cfg(), infiller, ConstantSimilarity())
        assert [s.token for s in subs] == ["b"]

    def test_mask_sentinel_never_survives(self):
        infiller = TableInfiller({"a": [(MASK_TOKEN, 0.9), ("z", 0.3)]})
        subs = substitute_set(mask_replace(ABC, 2), ABC, _cfg(), infiller, ConstantSimilarity())
        assert [s.token for s in subs] == ["z"]

    def test_similarity_measured_against_original(self):
        # embedding table: swapping "b"->"z" keeps candidates near the anchor
        sim = EmbeddingSimilarity({"a": [1, 0], "b": [1, 0.1], "c": [1, 0], "z": [1, -0.1]})
        infiller = TableInfiller({"a": [("z", 0.3)]})
        subs = substitute_set(mask_replace(ABC, 2), ABC, _cfg(), infiller, sim)
        assert len(subs) == 1
        assert subs[0].similarity == pytest.approx(
            sim.score(TextSequence.from_text("a z c"), ABC)
        )


def _sub(token: str, probs: tuple[float, ...]) -> Substitute:
    return Substitute(
        token=token,
        mlm_prob=0.3,
        similarity=1.0,
        candidate=TextSequence.from_text(token),
        dist=ProbDist(probs),
    )


class TestSelectSubstitutes:
    A = _sub("alef", (0.2, 0.5, 0.3))
    B = _sub("bet", (0.4, 0.4, 0.2))
    C = _sub("gimel", (0.1, 0.8, 0.1))

    def test_prob_diff_mode(self):
        out = select_substitutes([self.A, self.B, self.C], gold=1, k=2, scoring="prob_diff")
        assert [s.token for s in out] == ["bet", "alef"]
        assert [s.score for s in out] == pytest.approx([0.0, 0.2])

    def test_gold_prob_mode(self):
        out = select_substitutes([self.A, self.B, self.C], gold=1, k=2, scoring="gold_prob")
        assert [s.token for s in out] == ["bet", "alef"]
        assert [s.score for s in out] == pytest.approx([0.4, 0.5])

    def test_k_exceeds_pool(self):
        out = select_substitutes([self.A, self.B], gold=1, k=5, scoring="prob_diff")
        assert len(out) == 2

    def test_empty_pool(self):
        assert select_substitutes([], gold=1, k=3, scoring="prob_diff") == []

    def test_tie_breaks_lexicographically(self):
        x = _sub("zed", (0.4, 0.4, 0.2))
        y = _sub("ack", (0.4, 0.4, 0.2))
        out = select_substitutes([x, y], gold=1, k=2, scoring="prob_diff")
        assert [s.token for s in out] == ["ack", "zed"]

    def test_matches_iterated_argmin_with_exclusion(self):
        rng = random.Random(5)
        for _ in range(50):
            pool = []
            for i in range(rng.randint(1, 8)):
                raw = [rng.random() + 1e-9 for _ in range(3)]
                total = sum(raw)
                pool.append(_sub(f"t{i}", tuple(v / total for v in raw)))
            k = rng.randint(1, 5)
            fast = select_substitutes(pool, gold=0, k=k, scoring="prob_diff")

            remaining = list(pool)
            slow = []
            while remaining and len(slow) < k:
                best = min(
                    remaining,
                    key=lambda s: (action_score(s.dist, 0, "prob_diff"), s.token),
                )
                slow.append(best)
                remaining.remove(best)
            assert [s.token for s in fast] == [s.token for s in slow]


class TestGetBestActions:
    def test_figure_tree_top_two(self, fig1_bundle, fig1_instance, fig1_config):
        cfg = dc.replace(fig1_config, beam_size=2)
        batch = get_best_actions(fig1_instance.text, 1, cfg, fig1_bundle)
        assert [a.token for a in batch.actions] == ["beta", "gamma"]
        assert [a.score for a in batch.actions] == pytest.approx([0.09, 0.14])

    def test_single_surviving_substitute(self):
        oracle = ScriptedOracle(
            LabelSet(("n", "p")), {}, ProbDist((0.4, 0.6))
        )
        infiller = TableInfiller({"a": [("z", 0.3)]})
        bundle = ModelBundle(oracle, infiller, ConstantSimilarity())
        batch = get_best_actions(TextSequence.from_text("a"), 1, _cfg(beam_size=4), bundle)
        assert len(batch.actions) == 1
        assert batch.actions[0].token == "z"

    def test_all_filtered_gives_empty_batch(self):
        oracle = ScriptedOracle(LabelSet(("n", "p")), {}, ProbDist((0.4, 0.6)))
        infiller = TableInfiller({"a": [("z", 0.3)]})
        bundle = ModelBundle(oracle, infiller, ConstantSimilarity(0.1))
        batch = get_best_actions(TextSequence.from_text("a"), 1, _cfg(), bundle)
        assert batch.actions == ()

    def test_scores_recompute_from_dists(self, fig1_bundle, fig1_instance):
        cfg = _cfg(beam_size=10)
        batch = get_best_actions(fig1_instance.text, 1, cfg, fig1_bundle)
        for action in batch.actions:
            assert action.score == pytest.approx(
                action_score(action.dist, 1, cfg.scoring), abs=1e-9
            )

    def test_candidates_reproduce_from_action_fields(self, fig1_bundle):
        x = TextSequence.from_text("start gamma")
        batch = get_best_actions(x, 1, _cfg(beam_size=10), fig1_bundle)
        assert batch.actions
        for action in batch.actions:
            assert apply_action(x, action.kind, action.position, action.token) == action.candidate

    def test_deterministic(self, fig1_bundle):
        x = TextSequence.from_text("start beta")
        first = get_best_actions(x, 1, _cfg(beam_size=6), fig1_bundle)
        second = get_best_actions(x, 1, _cfg(beam_size=6), fig1_bundle)
        assert first == second

    def test_binary_modes_agree_on_selection(self):
        for seed in range(20):
            inst, bundle = make_toy_case(seed, n_labels=2)
            a = get_best_actions(inst.text, inst.gold, _cfg(beam_size=8, scoring="prob_diff"), bundle)
            b = get_best_actions(inst.text, inst.gold, _cfg(beam_size=8, scoring="gold_prob"), bundle)
            keys_a = [(x.kind, x.position, x.token) for x in a.actions]
            keys_b = [(x.kind, x.position, x.token) for x in b.actions]
            assert set(keys_a) == set(keys_b)

    def test_pool_bounded_by_three_n_k(self):
        inst, bundle = make_toy_case(3)
        cfg = _cfg(beam_size=2)
        batch = get_best_actions(inst.text, inst.gold, cfg, bundle)
        assert len(batch.actions) <= cfg.beam_size
        assert isinstance(batch, ActionBatch)
