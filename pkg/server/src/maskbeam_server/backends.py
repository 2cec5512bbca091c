"""Inference backends behind the serving endpoints.

Fixture-driven backends (scripted table, keyword softmax, proposal table,
embedding table) make the server fully testable offline; transformers-backed
ones serve real checkpoints. Heavy models guard their forward passes with a
lock so concurrent requests serialize per model and memory stays bounded.

The wire mask sentinel is the literal string "<mask>"; transformers
backends map it to their own tokenizer's mask token.
"""

from __future__ import annotations

import json
import math
import threading
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import BackendSpec, ServerConfigError

MASK = "<mask>"
SEP = "[SEP]"

Segments = Sequence[Sequence[str]]


def join_segments(segments: Segments, separator: str = SEP) -> list[str]:
    """Flatten a wire text (list of segments) into one token list."""
    out: list[str] = []
    for i, seg in enumerate(segments):
        if i:
            out.append(separator)
        out.extend(seg)
    return out


class ScriptedClassifier:
    """Exact token-sequence lookup with a default distribution."""

    def __init__(self, path: str) -> None:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        self.labels: list[str] = list(data["labels"])
        self._sequences: dict[str, list[float]] = {
            k: list(v) for k, v in data["sequences"].items()
        }
        self._default: list[float] = list(data["default"])

    def classify(self, texts: Sequence[Segments]) -> list[list[float]]:
        out = []
        for segments in texts:
            key = " ".join(join_segments(segments))
            out.append(list(self._sequences.get(key, self._default)))
        return out


class KeywordClassifier:
    """Per-label keyword weights, summed over tokens and softmaxed."""

    def __init__(self, path: str) -> None:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        self.labels: list[str] = list(data["labels"])
        self._weights = [data["weights"].get(name, {}) for name in self.labels]
        self._temperature = float(data.get("temperature", 1.0))

    def classify(self, texts: Sequence[Segments]) -> list[list[float]]:
        out = []
        for segments in texts:
            tokens = join_segments(segments)
            scores = np.array(
                [sum(table.get(tok, 0.0) for tok in tokens) for table in self._weights]
            )
            scores = scores / self._temperature
            scores -= scores.max()
            exp = np.exp(scores)
            out.append([float(p) for p in exp / exp.sum()])
        return out


class TableInfillerBackend:
    """Proposals keyed by the token left of the mask ("<s>" at the start)."""

    def __init__(self, path: str) -> None:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        self._table = {k: [(str(t), float(p)) for t, p in v] for k, v in data["table"].items()}

    def infill(self, tokens: list[str], mask_index: int, min_prob: float, top_n: int):
        key = tokens[mask_index - 1] if mask_index > 0 else "<s>"
        proposals = [(t, p) for t, p in self._table.get(key, []) if p > min_prob]
        return proposals[:top_n]


class EmbeddingSimilarityBackend:
    """Cosine of mean-pooled token vectors; OOV tokens pool as zero."""

    def __init__(self, path: str) -> None:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        self._vectors = {tok: np.asarray(v, dtype=float) for tok, v in data.items()}
        self._dim = len(next(iter(self._vectors.values())))

    def _pool(self, tokens: Sequence[str]) -> np.ndarray:
        zero = np.zeros(self._dim)
        vecs = [self._vectors.get(tok, zero) for tok in tokens]
        return np.mean(vecs, axis=0)

    def similarity(self, pairs: Sequence[tuple[Sequence[str], Sequence[str]]]) -> list[float]:
        out = []
        for a, b in pairs:
            va, vb = self._pool(a), self._pool(b)
            na, nb = np.linalg.norm(va), np.linalg.norm(vb)
            if na == 0.0 or nb == 0.0:
                out.append(0.0)
                continue
            cos = float(np.dot(va, vb) / (na * nb))
            out.append(max(0.0, min(1.0, cos)))
        return out


class ToyGrammar:
    """Rule-based error count: immediately repeated words."""

    def grammar_errors(self, sentences: Sequence[str]) -> list[int]:
        counts = []
        for sentence in sentences:
            tokens = sentence.split()
            counts.append(
                sum(1 for a, b in zip(tokens, tokens[1:]) if a.lower() == b.lower())
            )
        return counts


class _HFBase:
    """Shared checkpoint loading; forward passes serialize behind a lock."""

    def __init__(self, path: str) -> None:
        import torch  # noqa: F401 - fail fast if the extra is missing
        from transformers import AutoTokenizer

        self.path = path
        self.tokenizer = AutoTokenizer.from_pretrained(path)
        self.lock = threading.Lock()


class TransformersClassifier(_HFBase):
    def __init__(self, path: str, labels: Sequence[str] | None) -> None:
        super().__init__(path)
        import torch
        from transformers import AutoModelForSequenceClassification

        self.model = AutoModelForSequenceClassification.from_pretrained(path)
        self.model.eval()
        head = self.model.config.num_labels
        if labels:
            if len(labels) != head:
                raise ServerConfigError(
                    f"classifier head has {head} labels, config names {len(labels)}"
                )
            self.labels = list(labels)
        else:
            self.labels = [self.model.config.id2label[i] for i in range(head)]
        self._torch = torch

    def classify(self, texts: Sequence[Segments]) -> list[list[float]]:
        torch = self._torch
        sep = self.tokenizer.sep_token or SEP
        joined = [" ".join(join_segments(t, separator=sep)) for t in texts]
        with self.lock, torch.no_grad():
            enc = self.tokenizer(joined, return_tensors="pt", padding=True, truncation=True)
            logits = self.model(**enc).logits
            probs = torch.softmax(logits, dim=-1)
        return [[float(p) for p in row] for row in probs]


class TransformersInfiller(_HFBase):
    """Masked-LM proposals for one mask position.

    Only standalone single-token words survive: continuation pieces and
    non-alphabetic vocabulary entries are filtered server-side because the
    server knows its own tokenizer conventions.
    """

    def __init__(self, path: str) -> None:
        super().__init__(path)
        import torch
        from transformers import AutoModelForMaskedLM

        self.model = AutoModelForMaskedLM.from_pretrained(path)
        self.model.eval()
        self._torch = torch

    def _standalone_word(self, piece: str) -> str | None:
        if piece.startswith("##"):  # wordpiece continuation
            return None
        word = piece[1:] if piece.startswith("Ġ") else piece  # BPE space marker
        if not word.isalpha():
            return None
        return word

    def infill(self, tokens: list[str], mask_index: int, min_prob: float, top_n: int):
        torch = self._torch
        words = list(tokens)
        words[mask_index] = self.tokenizer.mask_token
        text = " ".join(words)
        with self.lock, torch.no_grad():
            enc = self.tokenizer(text, return_tensors="pt")
            mask_positions = (enc["input_ids"][0] == self.tokenizer.mask_token_id).nonzero()
            if len(mask_positions) != 1:
                raise ValueError("mask token did not survive tokenization")
            logits = self.model(**enc).logits[0, int(mask_positions[0])]
            probs = torch.softmax(logits, dim=-1)
            values, indices = torch.sort(probs, descending=True)
        proposals = []
        for value, index in zip(values.tolist(), indices.tolist()):
            if value <= min_prob or len(proposals) >= top_n:
                break
            piece = self.tokenizer.convert_ids_to_tokens(index)
            word = self._standalone_word(piece)
            if word is not None:
                proposals.append((word, float(value)))
        return proposals


class TransformersSimilarity(_HFBase):
    """Cosine of mean-pooled static input embeddings (special tokens excluded)."""

    def __init__(self, path: str) -> None:
        super().__init__(path)
        import torch
        from transformers import AutoModel

        model = AutoModel.from_pretrained(path)
        model.eval()
        self._embeddings = model.get_input_embeddings().weight.detach()
        self._torch = torch

    def _pool(self, tokens: Sequence[str]):
        torch = self._torch
        enc = self.tokenizer(" ".join(tokens), return_tensors="pt", add_special_tokens=False)
        ids = enc["input_ids"][0]
        if len(ids) == 0:
            return torch.zeros(self._embeddings.shape[1])
        return self._embeddings[ids].mean(dim=0)

    def similarity(self, pairs) -> list[float]:
        torch = self._torch
        out = []
        with self.lock:
            for a, b in pairs:
                va, vb = self._pool(a), self._pool(b)
                na, nb = float(torch.norm(va)), float(torch.norm(vb))
                if na == 0.0 or nb == 0.0:
                    out.append(0.0)
                    continue
                cos = float(torch.dot(va, vb) / (na * nb))
                out.append(max(0.0, min(1.0, cos)))
        return out


class TransformersPerplexity(_HFBase):
    """Masked-LM pseudo-perplexity: mask each position, score the true token."""

    def __init__(self, path: str) -> None:
        super().__init__(path)
        import torch
        from transformers import AutoModelForMaskedLM

        self.model = AutoModelForMaskedLM.from_pretrained(path)
        self.model.eval()
        self._torch = torch

    def perplexity(self, sentences: Sequence[str]) -> list[float]:
        torch = self._torch
        out = []
        with self.lock, torch.no_grad():
            for sentence in sentences:
                enc = self.tokenizer(sentence, return_tensors="pt")
                ids = enc["input_ids"][0]
                positions = [
                    i
                    for i, tok in enumerate(ids.tolist())
                    if tok not in self.tokenizer.all_special_ids
                ]
                if not positions:
                    out.append(float("inf"))
                    continue
                log_probs = []
                for pos in positions:
                    masked = ids.clone()
                    true_id = int(masked[pos])
                    masked[pos] = self.tokenizer.mask_token_id
                    logits = self.model(input_ids=masked.unsqueeze(0)).logits[0, pos]
                    log_probs.append(
                        float(torch.log_softmax(logits, dim=-1)[true_id])
                    )
                out.append(math.exp(-sum(log_probs) / len(log_probs)))
        return out


def build_classifier(spec: BackendSpec):
    if spec.kind == "scripted":
        return ScriptedClassifier(spec.path)
    if spec.kind == "keyword":
        return KeywordClassifier(spec.path)
    if spec.kind == "transformers":
        return TransformersClassifier(spec.path, spec.labels)
    raise ServerConfigError(f"unknown classifier kind {spec.kind!r}")


def build_infiller(spec: BackendSpec):
    if spec.kind == "table":
        return TableInfillerBackend(spec.path)
    if spec.kind == "transformers":
        return TransformersInfiller(spec.path)
    raise ServerConfigError(f"unknown infiller kind {spec.kind!r}")


def build_similarity(spec: BackendSpec):
    if spec.kind == "embedding":
        return EmbeddingSimilarityBackend(spec.path)
    if spec.kind == "transformers":
        return TransformersSimilarity(spec.path)
    raise ServerConfigError(f"unknown similarity kind {spec.kind!r}")


def build_perplexity(spec: BackendSpec | None):
    if spec is None:
        return None
    if spec.kind == "transformers_mlm":
        return TransformersPerplexity(spec.path)
    raise ServerConfigError(f"unknown perplexity kind {spec.kind!r}")


def build_grammar(spec: BackendSpec | None):
    if spec is None:
        return None
    if spec.kind == "toy":
        return ToyGrammar()
    raise ServerConfigError(f"unknown grammar kind {spec.kind!r}")
