"""Attack-quality evaluation over a corpus of attack records.

A-rate counts successes among attacked (originally correctly classified)
instances. Mod counts modified tokens along the action path against the
original length: Replace and Insert touch one token; a Merge touches one
token when its substitute preserves one of the merged pair, two otherwise,
and an end-of-sequence Merge touches one. Sim, PPL and GErr aggregate over
successful attacks only.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

from .actions import apply_action
from .core import (
    ActionKind,
    AttackConfig,
    MetricUndefinedError,
    STATUS_SKIPPED,
    TextSequence,
    is_fooled,
)
from .dataio import CorpusRecord, CorpusStep
from .models import Similarity, TargetModel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetricsReport:
    """Aggregate metrics of one attack run."""

    attacked_count: int
    skipped_count: int
    success_count: int
    a_rate: float
    mod_rate: float
    sim_mean: float
    query_mean: float
    ppl_mean: float | None = None
    gerr_mean: float | None = None

    def to_json(self) -> dict:
        out: dict = {
            "attacked_count": self.attacked_count,
            "skipped_count": self.skipped_count,
            "success_count": self.success_count,
            "a_rate": self.a_rate,
            "mod_rate": self.mod_rate,
            "sim_mean": self.sim_mean,
            "query_mean": self.query_mean,
        }
        if self.ppl_mean is not None:
            out["ppl_mean"] = self.ppl_mean
        if self.gerr_mean is not None:
            out["gerr_mean"] = self.gerr_mean
        return out

    @classmethod
    def from_json(cls, data: dict) -> "MetricsReport":
        return cls(
            attacked_count=int(data["attacked_count"]),
            skipped_count=int(data["skipped_count"]),
            success_count=int(data["success_count"]),
            a_rate=float(data["a_rate"]),
            mod_rate=float(data["mod_rate"]),
            sim_mean=float(data["sim_mean"]),
            query_mean=float(data["query_mean"]),
            ppl_mean=data.get("ppl_mean"),
            gerr_mean=data.get("gerr_mean"),
        )


def attack_success_rate(records: list[CorpusRecord]) -> float:
    """Successes over attacked; skipped records count in neither side."""
    attacked = [r for r in records if r.status != STATUS_SKIPPED]
    if not attacked:
        raise MetricUndefinedError("attack success rate over zero attacked instances")
    return sum(r.success for r in attacked) / len(attacked)


def replay_path(original: TextSequence, path: tuple[CorpusStep, ...]) -> TextSequence:
    """Re-apply a recorded action path to its original text."""
    seq = original
    for step in path:
        seq = apply_action(seq, step.kind, step.pos, step.token)
    return seq


def modification_rate(record: CorpusRecord) -> float:
    """Modified-token count along the path over the original length."""
    if not record.success:
        raise MetricUndefinedError(f"modification rate of non-success record {record.id!r}")
    seq = record.original
    modified = 0
    for step in record.path:
        if step.kind in (ActionKind.REPLACE, ActionKind.INSERT):
            modified += 1
        elif step.pos == seq.n:  # end-of-sequence Merge displaces one token
            modified += 1
        else:
            merged = (seq.tokens[step.pos - 1], seq.tokens[step.pos])
            modified += 1 if step.token in merged else 2
        seq = apply_action(seq, step.kind, step.pos, step.token)
    return modified / record.original.n


def transfer_accuracy(records: list[CorpusRecord], target: TargetModel) -> float:
    """Fraction of successful adversarials the given target still gets right.

    0.0 means full transfer (every adversarial fools this target too); the
    generating target scores exactly 0.0 by construction.
    """
    successes = [r for r in records if r.success]
    if not successes:
        raise MetricUndefinedError("transfer accuracy over zero successful attacks")
    labels = target.label_set()
    dists = target.classify([r.adversarial for r in successes])
    correct = sum(
        1
        for rec, dist in zip(successes, dists)
        if dist.argmax() == labels.index(rec.gold_label)
    )
    return correct / len(successes)


def delegated_quality(
    records: list[CorpusRecord],
    perplexity_client=None,
    grammar_client=None,
) -> tuple[float | None, float | None]:
    """Mean PPL of adversarials and mean grammar-error increase, if delegable.

    Either client may be None (endpoint unconfigured) and either may fail;
    the corresponding mean simply comes back None.
    """
    successes = [r for r in records if r.success]
    ppl_mean = None
    gerr_mean = None
    if not successes:
        return None, None
    adv_texts = [r.adversarial.text() for r in successes]
    orig_texts = [r.original.text() for r in successes]
    if perplexity_client is not None:
        try:
            vals = perplexity_client.perplexity(adv_texts)
            ppl_mean = sum(vals) / len(vals)
        except Exception as exc:  # noqa: BLE001 - metric is best-effort by contract
            log.warning("perplexity endpoint failed, omitting PPL: %s", exc)
    if grammar_client is not None:
        try:
            adv_errs = grammar_client.grammar_errors(adv_texts)
            orig_errs = grammar_client.grammar_errors(orig_texts)
            deltas = [a - o for a, o in zip(adv_errs, orig_errs)]
            gerr_mean = sum(deltas) / len(deltas)
        except Exception as exc:  # noqa: BLE001
            log.warning("grammar endpoint failed, omitting GErr: %s", exc)
    return ppl_mean, gerr_mean


def compute_report(
    records: list[CorpusRecord],
    ppl_mean: float | None = None,
    gerr_mean: float | None = None,
) -> MetricsReport:
    attacked = [r for r in records if r.status != STATUS_SKIPPED]
    skipped = len(records) - len(attacked)
    successes = [r for r in records if r.success]
    a_rate = attack_success_rate(records) if attacked else 0.0
    mods = [modification_rate(r) for r in successes]
    sims = [r.sim for r in successes if r.sim is not None]
    return MetricsReport(
        attacked_count=len(attacked),
        skipped_count=skipped,
        success_count=len(successes),
        a_rate=a_rate,
        mod_rate=sum(mods) / len(mods) if mods else 0.0,
        sim_mean=sum(sims) / len(sims) if sims else 0.0,
        query_mean=sum(r.queries for r in attacked) / len(attacked) if attacked else 0.0,
        ppl_mean=ppl_mean,
        gerr_mean=gerr_mean,
    )


def render_table(report: MetricsReport) -> str:
    """The report as one aligned plain-text table."""
    headers = ["A-rate", "Mod", "Sim", "PPL", "GErr", "Queries"]
    values = [
        f"{report.a_rate:.4f}",
        f"{report.mod_rate:.4f}",
        f"{report.sim_mean:.4f}",
        f"{report.ppl_mean:.2f}" if report.ppl_mean is not None else "-",
        f"{report.gerr_mean:.3f}" if report.gerr_mean is not None else "-",
        f"{report.query_mean:.1f}",
    ]
    widths = [max(len(h), len(v)) for h, v in zip(headers, values)]
    head = "  ".join(h.rjust(w) for h, w in zip(headers, widths))
    body = "  ".join(v.rjust(w) for v, w in zip(values, widths))
    return head + "\n" + body + "\n"


def verify_success(
    record: CorpusRecord,
    target: TargetModel,
    similarity: Similarity,
    cfg: AttackConfig,
) -> list[str]:
    """Independent post-hoc check of a success record; empty list means clean.

    Replays the path, re-classifies the adversarial with a fresh backend
    call, and re-checks the similarity bound and path-length budget. Trusts
    nothing the search wrote down beyond the path itself.
    """
    problems = []
    if not record.success:
        return [f"{record.id}: not a success record"]
    if record.adversarial is None:
        return [f"{record.id}: success without adversarial text"]
    replayed = replay_path(record.original, record.path)
    if replayed != record.adversarial:
        problems.append(f"{record.id}: path does not replay to the recorded adversarial")
    labels = target.label_set()
    dist = target.classify([record.adversarial])[0]
    if not is_fooled(dist, labels.index(record.gold_label)):
        problems.append(f"{record.id}: adversarial does not fool the target on re-query")
    sim = similarity.score(record.adversarial, record.original)
    if sim < cfg.epsilon:
        problems.append(f"{record.id}: similarity {sim:.4f} below epsilon {cfg.epsilon}")
    if len(record.path) > cfg.max_iters:
        problems.append(f"{record.id}: path length {len(record.path)} exceeds budget")
    return problems


def report_json_text(report: MetricsReport) -> str:
    return json.dumps(report.to_json(), ensure_ascii=False, indent=2) + "\n"
