"""Figure rendering for reports and ablation sweeps (always to files)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import MetricsReport
from .runner import AblationCell


def save_report_figure(report: MetricsReport, path: str | Path) -> None:
    """Outcome counts and headline rates of one run, side by side."""
    fig, (ax_counts, ax_rates) = plt.subplots(1, 2, figsize=(8, 3.5))

    counts = {
        "attacked": report.attacked_count,
        "skipped": report.skipped_count,
        "success": report.success_count,
    }
    ax_counts.bar(list(counts), list(counts.values()), color=["#4878d0", "#bbbbbb", "#6acc64"])
    ax_counts.set_title("instances")
    ax_counts.set_ylabel("count")

    rates = {"A-rate": report.a_rate, "Mod": report.mod_rate, "Sim": report.sim_mean}
    ax_rates.bar(list(rates), list(rates.values()), color="#4878d0")
    ax_rates.set_ylim(0.0, 1.0)
    ax_rates.set_title(f"rates (mean queries: {report.query_mean:.1f})")

    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_ablation_figure(cells: Sequence[AblationCell], path: str | Path) -> None:
    """Attack success rate as a function of beam size, one line per mode."""
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    modes = sorted({c.scoring for c in cells})
    for mode in modes:
        mode_cells = sorted((c for c in cells if c.scoring == mode), key=lambda c: c.beam_size)
        ax.plot(
            [c.beam_size for c in mode_cells],
            [c.report.a_rate for c in mode_cells],
            marker="o",
            label=mode,
        )
    ax.set_xlabel("beam size")
    ax.set_ylabel("attack success rate")
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
