"""Dataset ingestion, corpus persistence, config files, training-set export.

Everything on disk is JSONL (one record per line, UTF-8): free text quotes
unambiguously and files stream. Writes build each record dict in a fixed
key order so identical runs produce byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .core import (
    ActionKind,
    AttackRecord,
    ConfigError,
    DatasetError,
    Instance,
    LabelSet,
    STATUS_SUCCESS,
    TextSequence,
)

SEGMENT_POLICIES = ("first", "second", "longest")

CONFIG_KEYS = {
    "beam_size",
    "max_iters",
    "alpha",
    "beta",
    "epsilon",
    "scoring",
    "search",
    "seed",
    "target",
    "infiller",
    "similarity",
    "segment_policy",
    "batch_size",
    "connection_limit",
}


def _pick_segment(premise: str, hypothesis: str, policy: str) -> int:
    if policy == "first":
        return 0
    if policy == "second":
        return 1
    if policy == "longest":
        return 1 if len(hypothesis.split()) > len(premise.split()) else 0
    raise ConfigError(f"segment_policy must be one of {SEGMENT_POLICIES}, got {policy!r}")


def load_dataset(
    path: str | Path, label_set: LabelSet, segment_policy: str = "first"
) -> list[Instance]:
    """Read a JSONL dataset into Instances, tokenizing on whitespace.

    Records look like {"id", "text", "label"} where text is either a string
    or {"premise", "hypothesis"}; the segment policy decides which side of a
    pair the attack may perturb.
    """
    instances: list[Instance] = []
    seen_ids: set[str] = set()
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: invalid JSON: {exc}") from None
            try:
                rid = str(rec["id"])
                raw_text = rec["text"]
                label = rec["label"]
            except (KeyError, TypeError) as exc:
                raise DatasetError(f"{path}:{lineno}: missing field {exc}") from None
            if rid in seen_ids:
                raise DatasetError(f"{path}:{lineno}: duplicate id {rid!r}")
            seen_ids.add(rid)
            if label not in label_set.labels:
                raise DatasetError(
                    f"record {rid!r}: label {label!r} not in label set {label_set.labels}"
                )
            try:
                if isinstance(raw_text, str):
                    text = TextSequence.from_text(raw_text)
                else:
                    text = TextSequence.from_pair(
                        raw_text["premise"],
                        raw_text["hypothesis"],
                        perturbable=_pick_segment(
                            raw_text["premise"], raw_text["hypothesis"], segment_policy
                        ),
                    )
            except (KeyError, ValueError, TypeError) as exc:
                raise DatasetError(f"{path}:{lineno}: bad text for {rid!r}: {exc}") from None
            instances.append(Instance(id=rid, text=text, gold=label_set.index(label)))
    return instances


def _text_to_json(text: TextSequence) -> dict:
    return {"segments": [list(seg) for seg in text.segments], "perturbable": text.perturbable}


def _text_from_json(data: dict) -> TextSequence:
    return TextSequence(
        segments=tuple(tuple(seg) for seg in data["segments"]),
        perturbable=int(data["perturbable"]),
    )


@dataclass(frozen=True)
class CorpusStep:
    """Persisted view of one applied action."""

    kind: ActionKind
    pos: int
    token: str


@dataclass(frozen=True)
class CorpusRecord:
    """Persisted view of one attack outcome; gold is stored by label name."""

    id: str
    status: str
    gold_label: str
    original: TextSequence
    path: tuple[CorpusStep, ...]
    iterations: int
    queries: int
    raw_queries: int
    adversarial: TextSequence | None = None
    sim: float | None = None
    final_probs: tuple[float, ...] | None = None

    @property
    def success(self) -> bool:
        return self.status == STATUS_SUCCESS


def record_to_corpus(record: AttackRecord, label_set: LabelSet) -> CorpusRecord:
    return CorpusRecord(
        id=record.instance_id,
        status=record.status,
        gold_label=label_set.labels[record.gold],
        original=record.original,
        path=tuple(CorpusStep(s.kind, s.position, s.token) for s in record.path),
        iterations=record.iterations,
        queries=record.query_count,
        raw_queries=record.raw_queries,
        adversarial=record.adversarial,
        sim=record.sim,
        final_probs=tuple(record.final_dist.probs) if record.final_dist else None,
    )


def corpus_record_to_json(rec: CorpusRecord) -> dict:
    out: dict = {
        "id": rec.id,
        "status": rec.status,
        "gold": rec.gold_label,
        "original": _text_to_json(rec.original),
    }
    if rec.adversarial is not None:
        out["adversarial"] = _text_to_json(rec.adversarial)
    out["path"] = [{"kind": s.kind.wire, "pos": s.pos, "token": s.token} for s in rec.path]
    out["iterations"] = rec.iterations
    out["queries"] = rec.queries
    out["raw_queries"] = rec.raw_queries
    if rec.sim is not None:
        out["sim"] = rec.sim
    if rec.final_probs is not None:
        out["final_probs"] = list(rec.final_probs)
    return out


def corpus_record_from_json(data: dict) -> CorpusRecord:
    return CorpusRecord(
        id=str(data["id"]),
        status=str(data["status"]),
        gold_label=str(data["gold"]),
        original=_text_from_json(data["original"]),
        path=tuple(
            CorpusStep(ActionKind.from_wire(s["kind"]), int(s["pos"]), str(s["token"]))
            for s in data["path"]
        ),
        iterations=int(data["iterations"]),
        queries=int(data["queries"]),
        raw_queries=int(data["raw_queries"]),
        adversarial=_text_from_json(data["adversarial"]) if "adversarial" in data else None,
        sim=data.get("sim"),
        final_probs=tuple(data["final_probs"]) if "final_probs" in data else None,
    )


def write_corpus(records: Iterable[CorpusRecord], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(corpus_record_to_json(rec), ensure_ascii=False) + "\n")


def read_corpus(path: str | Path) -> list[CorpusRecord]:
    path = Path(path)
    out = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(corpus_record_from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise DatasetError(f"{path}:{lineno}: bad corpus record: {exc}") from None
    return out


def load_config(path: str | Path) -> dict:
    """Read a flat JSON config; keys mirror AttackConfig plus backend specs."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    unknown = set(data) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    return data


def load_dataset_records(path: str | Path) -> list[dict]:
    """Raw JSONL rows of a dataset file, for re-export."""
    rows = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: invalid JSON: {exc}") from None
    return rows


def _text_to_dataset_field(text: TextSequence) -> str | dict:
    if len(text.segments) == 1:
        return " ".join(text.segments[0])
    return {
        "premise": " ".join(text.segments[0]),
        "hypothesis": " ".join(text.segments[1]),
    }


def export_adversarial_training_set(
    dataset_rows: Sequence[dict], corpus: Sequence[CorpusRecord]
) -> list[dict]:
    """Originals plus successful adversarials re-labeled with their gold labels.

    Adversarial rows reuse the source id with an ``-adv`` suffix; any id
    collision is an error, as is a corpus id missing from the dataset.
    """
    ids = {str(row["id"]) for row in dataset_rows}
    out = list(dataset_rows)
    for rec in corpus:
        if not rec.success:
            continue
        if rec.id not in ids:
            raise DatasetError(f"corpus record {rec.id!r} not found in the training dataset")
        adv_id = f"{rec.id}-adv"
        if adv_id in ids:
            raise DatasetError(f"id collision exporting {adv_id!r}")
        ids.add(adv_id)
        assert rec.adversarial is not None
        out.append(
            {
                "id": adv_id,
                "text": _text_to_dataset_field(rec.adversarial),
                "label": rec.gold_label,
            }
        )
    return out


def write_dataset_rows(rows: Iterable[dict], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
