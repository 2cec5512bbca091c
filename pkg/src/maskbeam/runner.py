"""Dataset-level orchestration: worker pools and ablation sweeps.

Attacks over a dataset are independent, so they fan out over a thread pool
(the backends are either pure or I/O bound); results always come back in
input order regardless of completion order.
"""

from __future__ import annotations

import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace as dc_replace
from typing import Sequence

from .core import AttackConfig, AttackRecord, Instance
from .dataio import CorpusRecord, record_to_corpus
from .metrics import MetricsReport, compute_report
from .models import ModelBundle
from .search import attack, attack_greedy


def attack_dataset(
    instances: Sequence[Instance],
    cfg: AttackConfig,
    models: ModelBundle,
    workers: int = 1,
    progress: bool = False,
) -> list[AttackRecord]:
    """Attack every instance; records come back in dataset order."""
    run = attack_greedy if cfg.search == "greedy" else attack

    def one(item: tuple[int, Instance]) -> AttackRecord:
        idx, inst = item
        rec = run(inst, cfg, models)
        if progress:
            print(f"[{idx + 1}/{len(instances)}] {inst.id}: {rec.status}", file=sys.stderr)
        return rec

    if workers <= 1:
        return [one(item) for item in enumerate(instances)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, enumerate(instances)))


def attack_corpus(
    instances: Sequence[Instance],
    cfg: AttackConfig,
    models: ModelBundle,
    workers: int = 1,
    progress: bool = False,
) -> list[CorpusRecord]:
    """attack_dataset, persisted-form output."""
    labels = models.target.label_set()
    records = attack_dataset(instances, cfg, models, workers=workers, progress=progress)
    return [record_to_corpus(r, labels) for r in records]


@dataclass(frozen=True)
class AblationCell:
    """Metrics of one (beam size, scoring mode) sweep point."""

    beam_size: int
    scoring: str
    report: MetricsReport


def ablation_sweep(
    instances: Sequence[Instance],
    base_cfg: AttackConfig,
    models: ModelBundle,
    sizes: Sequence[int],
    modes: Sequence[str],
    workers: int = 1,
    progress: bool = False,
) -> list[AblationCell]:
    """Run the attack once per (beam size, scoring mode) combination."""
    if not sizes:
        raise ValueError("ablation sweep needs at least one beam size")
    cells = []
    for mode in modes:
        for k in sizes:
            cfg = dc_replace(base_cfg, beam_size=k, scoring=mode, search="beam")
            if progress:
                print(f"ablation: beam_size={k} scoring={mode}", file=sys.stderr)
            corpus = attack_corpus(instances, cfg, models, workers=workers)
            cells.append(AblationCell(beam_size=k, scoring=mode, report=compute_report(corpus)))
    return cells


METRIC_FIELDS = ("a_rate", "mod_rate", "sim_mean")


def ablation_summary(cells: Sequence[AblationCell]) -> dict:
    """Per-mode mean and half-range of each metric across beam sizes."""
    out: dict = {}
    for mode in sorted({c.scoring for c in cells}):
        mode_cells = [c for c in cells if c.scoring == mode]
        stats = {}
        for field in METRIC_FIELDS:
            vals = [getattr(c.report, field) for c in mode_cells]
            stats[field] = {
                "mean": sum(vals) / len(vals),
                "half_range": (max(vals) - min(vals)) / 2,
            }
        out[mode] = stats
    return out


def render_ablation_table(cells: Sequence[AblationCell]) -> str:
    """Sweep cells plus the mean +/- half-range row, tab-delimited."""
    lines = ["scoring\tbeam_size\ta_rate\tmod_rate\tsim_mean"]
    for cell in cells:
        r = cell.report
        lines.append(
            f"{cell.scoring}\t{cell.beam_size}\t{r.a_rate:.4f}\t{r.mod_rate:.4f}\t{r.sim_mean:.4f}"
        )
    summary = ablation_summary(cells)
    for mode, stats in summary.items():
        cols = "\t".join(
            f"{stats[f]['mean']:.4f}±{stats[f]['half_range']:.4f}" for f in METRIC_FIELDS
        )
        lines.append(f"{mode}\tmean±range\t{cols}")
    return "\n".join(lines) + "\n"
