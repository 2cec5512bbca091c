"""Live smoke: train tiny checkpoints, serve them, attack through the engine.

This sandbox has no model-hub access, so the masked-LM and the sentiment
classifier are trained here from scratch (word-level vocabulary, 2-layer
BERTs, seconds on CPU) and saved as ordinary checkpoints; the server then
loads them through its regular transformers path.
"""

from __future__ import annotations

import random
import time

import pytest

torch = pytest.importorskip("torch")
transformers = pytest.importorskip("transformers")

from maskbeam.core import AttackConfig, Instance, TextSequence
from maskbeam.dataio import record_to_corpus, write_corpus, read_corpus
from maskbeam.metrics import compute_report, delegated_quality, verify_success
from maskbeam.models import ModelBundle
from maskbeam.remote import (
    HttpClient,
    HttpInfiller,
    HttpQualityClient,
    HttpSimilarity,
    HttpTargetModel,
)
from maskbeam.runner import attack_dataset

from maskbeam_server.app import create_app
from maskbeam_server.config import BackendSpec, ServerConfig
from serving import LiveServer

POSITIVE = ["tasty", "delicious", "great", "lovely", "wonderful",
            "friendly", "charming", "superb", "pleasant", "fine"]
NEGATIVE = ["awful", "bland", "rude", "dirty", "horrible",
            "nasty", "gross", "stale", "noisy", "poor"]
NOUNS = ["food", "soup", "staff", "room", "service",
         "place", "menu", "coffee", "bread", "fish"]
GLUE = ["the", "was", "is", "very", "and", "really", "quite"]


def build_checkpoints(root) -> tuple[str, str]:
    """Train and save a tiny sentiment classifier and masked LM."""
    from tokenizers import Tokenizer, models, normalizers, pre_tokenizers
    from tokenizers.processors import TemplateProcessing
    from transformers import (
        BertConfig,
        BertForMaskedLM,
        BertForSequenceClassification,
        PreTrainedTokenizerFast,
    )

    specials = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    vocab = {tok: i for i, tok in enumerate(specials + POSITIVE + NEGATIVE + NOUNS + GLUE)}
    core = Tokenizer(models.WordLevel(vocab=vocab, unk_token="[UNK]"))
    core.normalizer = normalizers.Lowercase()
    core.pre_tokenizer = pre_tokenizers.WhitespaceSplit()
    core.post_processor = TemplateProcessing(
        single="[CLS] $A [SEP]",
        pair="[CLS] $A [SEP] $B [SEP]",
        special_tokens=[("[CLS]", vocab["[CLS]"]), ("[SEP]", vocab["[SEP]"])],
    )
    tokenizer = PreTrainedTokenizerFast(
        tokenizer_object=core, unk_token="[UNK]", pad_token="[PAD]", cls_token="[CLS]",
        sep_token="[SEP]", mask_token="[MASK]",
    )

    rng = random.Random(202)

    def sentence(label: int) -> str:
        words = POSITIVE if label == 1 else NEGATIVE
        noun, adj = rng.choice(NOUNS), rng.choice(words)
        form = rng.randrange(4)
        if form == 0:
            return f"the {noun} was {adj}"
        if form == 1:
            return f"the {noun} was very {adj}"
        if form == 2:
            return f"the {noun} was {adj} and {rng.choice(words)}"
        return f"the {noun} is really {adj}"

    train = [(sentence(label), label) for label in [0, 1] * 150]
    rng.shuffle(train)
    texts = [t for t, _ in train]
    labels = torch.tensor([l for _, l in train])
    enc = tokenizer(texts, return_tensors="pt", padding=True)

    config = BertConfig(
        vocab_size=tokenizer.vocab_size, hidden_size=32, num_hidden_layers=2,
        num_attention_heads=2, intermediate_size=64, max_position_embeddings=32,
        num_labels=2, pad_token_id=vocab["[PAD]"],
    )

    torch.manual_seed(0)
    clf = BertForSequenceClassification(config)
    opt = torch.optim.Adam(clf.parameters(), lr=2e-3)
    clf.train()
    for _ in range(80):
        opt.zero_grad()
        out = clf(**enc, labels=labels)
        out.loss.backward()
        opt.step()
    clf.eval()
    with torch.no_grad():
        accuracy = float((clf(**enc).logits.argmax(-1) == labels).float().mean())
    assert accuracy > 0.95, f"classifier failed to fit its toy corpus ({accuracy:.2f})"

    torch.manual_seed(1)
    mlm = BertForMaskedLM(config)
    opt = torch.optim.Adam(mlm.parameters(), lr=2e-3)
    mlm.train()
    ids = enc["input_ids"]
    gen = torch.Generator().manual_seed(3)
    special_ids = set(tokenizer.all_special_ids)
    for _ in range(150):
        masked = ids.clone()
        target = torch.full_like(ids, -100)
        for row in range(masked.shape[0]):
            valid = [i for i, t in enumerate(masked[row].tolist()) if t not in special_ids]
            pos = valid[int(torch.randint(len(valid), (1,), generator=gen))]
            target[row, pos] = masked[row, pos]
            masked[row, pos] = tokenizer.mask_token_id
        opt.zero_grad()
        out = mlm(input_ids=masked, attention_mask=enc["attention_mask"], labels=target)
        out.loss.backward()
        opt.step()

    clf_dir, mlm_dir = root / "clf", root / "mlm"
    clf.save_pretrained(clf_dir)
    tokenizer.save_pretrained(clf_dir)
    mlm.save_pretrained(mlm_dir)
    tokenizer.save_pretrained(mlm_dir)
    return str(clf_dir), str(mlm_dir)


def smoke_instances() -> list[Instance]:
    rng = random.Random(99)
    out = []
    for i in range(20):
        label = i % 2
        words = POSITIVE if label == 1 else NEGATIVE
        noun, adj = rng.choice(NOUNS), rng.choice(words)
        text = f"the {noun} was {adj}" if i % 3 else f"the {noun} was very {adj}"
        out.append(Instance(f"smoke-{i:02d}", TextSequence.from_text(text), gold=label))
    return out


def test_live_smoke_end_to_end(tmp_path_factory):
    start = time.monotonic()
    root = tmp_path_factory.mktemp("checkpoints")
    clf_dir, mlm_dir = build_checkpoints(root)

    config = ServerConfig(
        classifier=BackendSpec("transformers", clf_dir, labels=("negative", "positive")),
        infiller=BackendSpec("transformers", mlm_dir),
        similarity=BackendSpec("transformers", mlm_dir),
        perplexity=BackendSpec("transformers_mlm", mlm_dir),
        grammar=BackendSpec("toy"),
    )
    cfg = AttackConfig(beam_size=3, max_iters=3, alpha=5e-3, beta=0.7)
    instances = smoke_instances()

    with LiveServer(create_app(config)) as server:
        client = HttpClient(server.url, timeout=60, retries=3, backoff=0.2)
        bundle = ModelBundle(
            target=HttpTargetModel(client),
            infiller=HttpInfiller(client, top_n=8),
            similarity=HttpSimilarity(client),
        )
        labels = bundle.target.label_set()
        assert labels.labels == ("negative", "positive")

        records = attack_dataset(instances, cfg, bundle, workers=4)
        corpus = [record_to_corpus(r, labels) for r in records]

        corpus_path = tmp_path_factory.mktemp("out") / "corpus.jsonl"
        write_corpus(corpus, corpus_path)
        assert read_corpus(corpus_path) == corpus

        successes = [r for r in corpus if r.success]
        assert len(corpus) == 20
        assert successes, "smoke attack produced no successful adversarial example"
        for rec in successes:
            assert verify_success(rec, bundle.target, bundle.similarity, cfg) == []

        quality = HttpQualityClient(client)
        ppl_mean, gerr_mean = delegated_quality(corpus, quality, quality)
        report = compute_report(corpus, ppl_mean=ppl_mean, gerr_mean=gerr_mean)
        assert report.ppl_mean is not None and report.ppl_mean > 0
        assert report.gerr_mean is not None

    elapsed = time.monotonic() - start
    print(
        f"\n[ACCEPTANCE] live smoke: {len(successes)}/20 successes, all checker-clean, "
        f"PPL={report.ppl_mean:.1f}, {elapsed:.0f}s: PASS"
    )
