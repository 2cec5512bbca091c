"""Protocol contract: the server must be indistinguishable from the engine's
builtin backends when serving the same fixtures, and every endpoint must
satisfy the wire schema the engine's own client enforces.
"""

from __future__ import annotations

import dataclasses as dc
import json
import random

import pytest
import requests

from maskbeam.cli import main as engine_main
from maskbeam.core import AttackConfig, Instance, TextSequence
from maskbeam.dataio import corpus_record_to_json, read_corpus, record_to_corpus
from maskbeam.metrics import delegated_quality
from maskbeam.models import (
    EmbeddingSimilarity,
    ModelBundle,
    ScriptedOracle,
    TableInfiller,
)
from maskbeam.remote import (
    HttpClient,
    HttpInfiller,
    HttpQualityClient,
    HttpSimilarity,
    HttpTargetModel,
)
from maskbeam.search import attack

from maskbeam_server.app import create_app
from maskbeam_server.config import BackendSpec, ServerConfig
from serving import FIXTURES, LiveServer, scripted_config

FIXTURES_DEMO_TARGET = FIXTURES / "demo_target.json"
FIXTURES_DEMO_EMB = FIXTURES / "demo_embeddings.json"

FAST = dict(timeout=10.0, retries=2, backoff=0.05)


def engine_client(server) -> HttpClient:
    return HttpClient(server.url, **FAST)


def remote_bundle(server) -> ModelBundle:
    client = engine_client(server)
    return ModelBundle(
        target=HttpTargetModel(client),
        infiller=HttpInfiller(client),
        similarity=HttpSimilarity(client),
    )


class TestLoopbackPipeline:
    """[ACCEPTANCE] full pipeline through the server == in-process run."""

    def test_attack_records_match_in_process(self, scripted_server, fixtures_dir):
        local = ModelBundle(
            target=ScriptedOracle.from_file(fixtures_dir / "fig1_oracle.json"),
            infiller=TableInfiller.from_file(fixtures_dir / "fig1_infiller.json"),
            similarity=EmbeddingSimilarity.from_file(fixtures_dir / "fig1_embeddings.json"),
        )
        remote = remote_bundle(scripted_server)
        inst = Instance("fig1", TextSequence.from_text("start"), gold=1)
        base = AttackConfig(max_iters=2)
        mismatches = []
        for beam, scoring in ((1, "prob_diff"), (1, "gold_prob"), (2, "prob_diff"), (2, "gold_prob")):
            cfg = dc.replace(base, beam_size=beam, scoring=scoring)
            labels = local.target.label_set()
            line_local = json.dumps(
                corpus_record_to_json(record_to_corpus(attack(inst, cfg, local), labels))
            )
            line_remote = json.dumps(
                corpus_record_to_json(record_to_corpus(attack(inst, cfg, remote), labels))
            )
            if line_local != line_remote:
                mismatches.append((beam, scoring))
        assert mismatches == []
        print("\n[ACCEPTANCE] loopback pipeline record-for-record: PASS")

    def test_engine_cli_attack_against_live_server(self, keyword_server, fixtures_dir, tmp_path):
        rc = engine_main(
            [
                "attack",
                "--dataset", str(fixtures_dir / "demo_dataset.jsonl"),
                "--out", str(tmp_path / "run"),
                "--target", keyword_server.url,
                "--infiller", keyword_server.url,
                "--sim", keyword_server.url,
                "--quiet",
            ]
        )
        assert rc == 0
        records = read_corpus(tmp_path / "run/corpus.jsonl")
        assert len(records) == 10
        assert any(r.success for r in records)

    def test_engine_serve_check_passes(self, scripted_server):
        rc = engine_main(
            ["serve-check", "--target", scripted_server.url, "--infiller", scripted_server.url]
        )
        assert rc == 0


class TestInfillContract:
    def test_min_prob_honored_over_thousand_proposals(self, tmp_path):
        """[ACCEPTANCE] /infill never returns a proposal at or below min_prob."""
        rng = random.Random(13)
        letters = "abcdefgh"
        table = {}
        keys = [f"key{letters[i % 8]}{letters[i // 8]}" for i in range(50)]
        for key in keys:
            proposals = []
            for j in range(6):
                # straddle the threshold: some proposals must be filtered
                prob = rng.choice([1e-3, 4e-3, 6e-3, 0.05, 0.2, 0.4])
                proposals.append([f"word{letters[j]}", prob])
            table[key] = proposals
        table_path = tmp_path / "table.json"
        table_path.write_text(json.dumps({"table": table}), encoding="utf-8")

        config = ServerConfig(
            classifier=BackendSpec("keyword", str(FIXTURES_DEMO_TARGET)),
            infiller=BackendSpec("table", str(table_path)),
            similarity=BackendSpec("embedding", str(FIXTURES_DEMO_EMB)),
        )
        total = 0
        violations = 0
        with LiveServer(create_app(config)) as server:
            infiller = HttpInfiller(engine_client(server))
            from maskbeam.actions import mask_replace

            for sweep in range(20):
                for key in keys:
                    masked = mask_replace(TextSequence.from_text(f"{key} tail"), 2)
                    for token, prob in infiller.propose(masked, 5e-3):
                        total += 1
                        if prob <= 5e-3:
                            violations += 1
                if total >= 1000:
                    break
        assert total >= 1000
        assert violations == 0
        print(f"\n[ACCEPTANCE] /infill min_prob over {total} proposals, violations=0: PASS")

    def test_two_sentinels_rejected(self, scripted_server):
        resp = requests.post(
            f"{scripted_server.url}/infill",
            json={"tokens": ["<mask>", "x", "<mask>"], "mask_index": 0, "min_prob": 0.0, "top_n": 5},
            timeout=10,
        )
        assert resp.status_code == 400
        assert "error" in resp.json()

    def test_zero_sentinels_rejected(self, scripted_server):
        resp = requests.post(
            f"{scripted_server.url}/infill",
            json={"tokens": ["x", "y"], "mask_index": 0, "min_prob": 0.0, "top_n": 5},
            timeout=10,
        )
        assert resp.status_code == 400

    def test_mask_index_must_point_at_sentinel(self, scripted_server):
        resp = requests.post(
            f"{scripted_server.url}/infill",
            json={"tokens": ["start", "<mask>"], "mask_index": 0, "min_prob": 0.0, "top_n": 5},
            timeout=10,
        )
        assert resp.status_code == 400


class TestClassifyContract:
    def test_distributions_sum_to_one(self, scripted_server, keyword_server):
        """[ACCEPTANCE] /classify distributions sum to 1 within 1e-4."""
        checked = 0
        for server, texts in (
            (scripted_server, ["start", "start alpha", "start gamma ga", "unmapped words"]),
            (keyword_server, ["the food is tasty", "the staff was rude", "plain okay average"]),
        ):
            target = HttpTargetModel(engine_client(server))
            dists = target.classify([TextSequence.from_text(t) for t in texts])
            for dist in dists:
                assert abs(sum(dist.probs) - 1.0) <= 1e-4
                checked += 1
        assert checked == 7
        print("\n[ACCEPTANCE] /classify sums within 1e-4: PASS")

    def test_labels_from_empty_batch(self, scripted_server):
        target = HttpTargetModel(engine_client(scripted_server))
        assert target.label_set().labels == ("y1", "y2", "y3")

    def test_oversize_batch_is_413(self, fixtures_dir):
        with LiveServer(create_app(scripted_config(max_batch=8))) as server:
            wire = [[["w"]]] * 9
            resp = requests.post(f"{server.url}/classify", json={"texts": wire}, timeout=10)
            assert resp.status_code == 413
            # at the limit, responses align with request order
            mixed = [[["start"]], [["start", "alpha"]], [["unmapped"]], [["start", "beta"]]]
            mixed = mixed + mixed  # 8 texts
            resp = requests.post(f"{server.url}/classify", json={"texts": mixed}, timeout=10)
            assert resp.status_code == 200
            probs = resp.json()["probs"]
            assert len(probs) == 8
            assert probs[0] == probs[4] == [0.16, 0.64, 0.2]
            assert probs[1] == probs[5] == [0.26, 0.48, 0.26]
            assert probs[2] == probs[6] == [0.05, 0.9, 0.05]
            assert probs[3] == probs[7] == [0.43, 0.52, 0.05]

    def test_empty_segment_is_400(self, scripted_server):
        resp = requests.post(
            f"{scripted_server.url}/classify", json={"texts": [[[]]]}, timeout=10
        )
        assert resp.status_code == 400


class TestSimilarityAndQuality:
    def test_identical_pair_scores_one(self, scripted_server):
        sim = HttpSimilarity(engine_client(scripted_server))
        t = TextSequence.from_text("start alpha")
        assert sim.score(t, t) == pytest.approx(1.0, abs=1e-3)

    def test_unconfigured_perplexity_is_501_and_engine_omits_it(self, keyword_server):
        resp = requests.post(
            f"{keyword_server.url}/perplexity", json={"sentences": ["a b"]}, timeout=10
        )
        assert resp.status_code == 501
        quality = HttpQualityClient(engine_client(keyword_server))
        from maskbeam.dataio import CorpusRecord, CorpusStep
        from maskbeam.core import ActionKind

        rec = CorpusRecord(
            id="r", status="success", gold_label="positive",
            original=TextSequence.from_text("the food is tasty"),
            path=(CorpusStep(ActionKind.REPLACE, 4, "bland"),),
            iterations=1, queries=1, raw_queries=1,
            adversarial=TextSequence.from_text("the food is bland"),
            sim=1.0, final_probs=(0.8, 0.1, 0.1),
        )
        ppl, gerr = delegated_quality([rec], perplexity_client=quality, grammar_client=None)
        assert ppl is None and gerr is None

    def test_toy_grammar_counts_duplicated_word(self, scripted_server):
        quality = HttpQualityClient(engine_client(scripted_server))
        clean, broken = quality.grammar_errors(
            ["the food was good", "the food food was good"]
        )
        assert broken >= clean + 1

    def test_empty_sentence_list(self, scripted_server):
        quality = HttpQualityClient(engine_client(scripted_server))
        assert quality.grammar_errors([]) == []


class TestDeterminism:
    def test_identical_requests_identical_payloads(self, scripted_server):
        classify = {"texts": [[["start"]], [["start", "alpha"]]]}
        infill = {"tokens": ["start", "<mask>"], "mask_index": 1, "min_prob": 5e-3, "top_n": 10}
        for route, body in (("/classify", classify), ("/infill", infill)):
            first = requests.post(f"{scripted_server.url}{route}", json=body, timeout=10)
            second = requests.post(f"{scripted_server.url}{route}", json=body, timeout=10)
            assert first.content == second.content


class TestHealth:
    def test_healthz(self, scripted_server):
        resp = requests.get(f"{scripted_server.url}/healthz", timeout=10)
        assert resp.status_code == 200
        assert resp.json() == {"status": "ok"}
