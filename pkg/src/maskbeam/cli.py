"""Operator command line.

Subcommands: ``attack`` runs the search over a dataset and writes a corpus
plus a metrics report (JSON, aligned table, and a rendered figure);
``eval`` recomputes metrics from a corpus and measures transferability
against another target; ``ablate`` sweeps beam sizes and scoring modes;
``augment`` exports an adversarial training set; ``serve-check`` probes a
model server. Progress goes to stderr, machine-readable output to files or
stdout.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .core import AttackConfig, BackendError, ConfigError, DatasetError, EngineError
from .dataio import (
    SEGMENT_POLICIES,
    export_adversarial_training_set,
    load_config,
    load_dataset,
    load_dataset_records,
    read_corpus,
    write_corpus,
    write_dataset_rows,
)
from .metrics import (
    compute_report,
    delegated_quality,
    render_table,
    report_json_text,
    transfer_accuracy,
)
from .models import (
    EmbeddingSimilarity,
    JaccardSimilarity,
    KeywordSoftmaxClassifier,
    ModelBundle,
    ScriptedOracle,
    TableInfiller,
)
from .plots import save_ablation_figure, save_report_figure
from .remote import (
    HttpClient,
    HttpInfiller,
    HttpQualityClient,
    HttpSimilarity,
    HttpTargetModel,
)
from .runner import ablation_summary, ablation_sweep, attack_corpus, render_ablation_table

DEFAULTS: dict = {
    "beam_size": 10,
    "max_iters": 10,
    "alpha": 5e-3,
    "beta": 0.7,
    "epsilon": None,
    "scoring": "prob_diff",
    "search": "beam",
    "seed": 0,
    "target": None,
    "infiller": None,
    "similarity": "jaccard",
    "segment_policy": "first",
    "batch_size": 64,
    "connection_limit": 8,
}


def _is_url(spec: str) -> bool:
    return spec.startswith("http://") or spec.startswith("https://")


def _client(url: str, settings: dict) -> HttpClient:
    return HttpClient(url, connection_limit=int(settings["connection_limit"]))


def build_target(spec: str, settings: dict):
    if spec.startswith("builtin:scripted:"):
        return ScriptedOracle.from_file(spec.split(":", 2)[2])
    if spec.startswith("builtin:keyword:"):
        return KeywordSoftmaxClassifier.from_file(spec.split(":", 2)[2])
    if _is_url(spec):
        return HttpTargetModel(_client(spec, settings))
    raise ConfigError(f"unknown target spec {spec!r}")


def build_infiller(spec: str, settings: dict):
    if spec.startswith("builtin:table:"):
        return TableInfiller.from_file(spec.split(":", 2)[2])
    if _is_url(spec):
        return HttpInfiller(_client(spec, settings))
    raise ConfigError(f"unknown infiller spec {spec!r}")


def build_similarity(spec: str, settings: dict):
    if spec == "jaccard":
        return JaccardSimilarity()
    if spec.startswith("embed:"):
        return EmbeddingSimilarity.from_file(spec.split(":", 1)[1])
    if _is_url(spec):
        return HttpSimilarity(_client(spec, settings))
    raise ConfigError(f"unknown similarity spec {spec!r}")


def _norm_mode(value: str) -> str:
    return value.replace("-", "_")


def _add_shared_flags(parser: argparse.ArgumentParser, scoring_choices: tuple[str, ...]) -> None:
    parser.add_argument("--config", help="flat JSON config file; flags override it")
    parser.add_argument("--target", help="builtin:scripted:<file> | builtin:keyword:<file> | http://...")
    parser.add_argument("--infiller", help="builtin:table:<file> | http://...")
    parser.add_argument("--sim", dest="similarity", help="jaccard | embed:<file> | http://...")
    parser.add_argument("--beam-size", type=int, dest="beam_size")
    parser.add_argument("--max-iters", type=int, dest="max_iters")
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--beta", type=float)
    parser.add_argument("--epsilon", type=float)
    parser.add_argument("--scoring", choices=scoring_choices)
    parser.add_argument("--search", choices=("beam", "greedy"))
    parser.add_argument("--segment-policy", dest="segment_policy", choices=SEGMENT_POLICIES)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--batch-size", type=int, dest="batch_size")
    parser.add_argument("--connection-limit", type=int, dest="connection_limit")
    parser.add_argument("--workers", type=int, help="worker threads (default: logical cores)")
    parser.add_argument("--perplexity", help="optional /perplexity endpoint URL")
    parser.add_argument("--grammar", help="optional /grammar endpoint URL")
    parser.add_argument("--quiet", action="store_true", help="suppress progress on stderr")


def _merge_settings(args: argparse.Namespace) -> dict:
    explicit: dict = {}
    if getattr(args, "config", None):
        explicit.update(load_config(args.config))
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            explicit[key] = value
    settings = dict(DEFAULTS)
    settings.update(explicit)
    if settings["search"] == "greedy" and "beam_size" not in explicit:
        settings["beam_size"] = 1
    for key in ("scoring", "search"):
        settings[key] = _norm_mode(str(settings[key]))
    return settings


def _attack_config(settings: dict) -> AttackConfig:
    return AttackConfig(
        beam_size=int(settings["beam_size"]),
        max_iters=int(settings["max_iters"]),
        alpha=float(settings["alpha"]),
        beta=float(settings["beta"]),
        epsilon=None if settings["epsilon"] is None else float(settings["epsilon"]),
        scoring=settings["scoring"],
        search=settings["search"],
        seed=int(settings["seed"]),
    )


def _build_bundle(settings: dict) -> ModelBundle:
    if not settings["target"]:
        raise ConfigError("no target configured (use --target or a config file)")
    if not settings["infiller"]:
        raise ConfigError("no infiller configured (use --infiller or a config file)")
    return ModelBundle(
        target=build_target(settings["target"], settings),
        infiller=build_infiller(settings["infiller"], settings),
        similarity=build_similarity(settings["similarity"], settings),
        batch_size=int(settings["batch_size"]),
    )


def _quality_clients(args: argparse.Namespace, settings: dict):
    ppl = HttpQualityClient(_client(args.perplexity, settings)) if args.perplexity else None
    grammar = HttpQualityClient(_client(args.grammar, settings)) if args.grammar else None
    return ppl, grammar


def _probe_endpoints(settings: dict) -> None:
    """Fail fast (exit 2) if any configured HTTP backend is unreachable."""
    for key in ("target", "infiller", "similarity"):
        spec = settings.get(key)
        if spec and _is_url(str(spec)) and not _client(str(spec), settings).healthy():
            raise BackendError(f"{key} endpoint {spec} is unreachable")


def _write_report(report, out_dir: Path) -> None:
    (out_dir / "report.json").write_text(report_json_text(report), encoding="utf-8")
    (out_dir / "report.txt").write_text(render_table(report), encoding="utf-8")
    save_report_figure(report, out_dir / "report.png")


def _workers(args: argparse.Namespace) -> int:
    if getattr(args, "workers", None):
        return max(1, args.workers)
    return os.cpu_count() or 1


def cmd_attack(args: argparse.Namespace) -> int:
    settings = _merge_settings(args)
    if settings["scoring"] == "both":
        raise ConfigError("--scoring both is only valid for the ablate command")
    cfg = _attack_config(settings)
    _probe_endpoints(settings)
    bundle = _build_bundle(settings)
    label_set = bundle.target.label_set()
    instances = load_dataset(args.dataset, label_set, settings["segment_policy"])

    corpus = attack_corpus(
        instances, cfg, bundle, workers=_workers(args), progress=not args.quiet
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_corpus(corpus, out_dir / "corpus.jsonl")

    ppl_client, grammar_client = _quality_clients(args, settings)
    ppl_mean, gerr_mean = delegated_quality(corpus, ppl_client, grammar_client)
    report = compute_report(corpus, ppl_mean=ppl_mean, gerr_mean=gerr_mean)
    _write_report(report, out_dir)
    sys.stdout.write(render_table(report))
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    settings = _merge_settings(args)
    corpus = read_corpus(args.corpus)
    ppl_client, grammar_client = _quality_clients(args, settings)
    ppl_mean, gerr_mean = delegated_quality(corpus, ppl_client, grammar_client)
    report = compute_report(corpus, ppl_mean=ppl_mean, gerr_mean=gerr_mean)
    sys.stdout.write(render_table(report))

    transfer = None
    if settings["target"]:
        target = build_target(settings["target"], settings)
        labels = target.label_set()
        unknown = {r.gold_label for r in corpus} - set(labels.labels)
        if unknown:
            raise ConfigError(
                f"corpus gold labels {sorted(unknown)} not in target label set {labels.labels}"
            )
        transfer = transfer_accuracy(corpus, target)
        sys.stdout.write(f"transfer_accuracy: {transfer:.4f}\n")

    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_report(report, out_dir)
        if transfer is not None:
            (out_dir / "transfer.json").write_text(
                json.dumps({"transfer_accuracy": transfer}) + "\n", encoding="utf-8"
            )
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    settings = _merge_settings(args)
    sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    if not sizes:
        raise ConfigError("--sizes must list at least one beam size")
    if settings["scoring"] == "both":
        modes = ["prob_diff", "gold_prob"]
    else:
        modes = [settings["scoring"]]
    cfg = _attack_config({**settings, "scoring": "prob_diff", "search": "beam", "beam_size": 1})
    _probe_endpoints(settings)
    bundle = _build_bundle(settings)
    label_set = bundle.target.label_set()
    instances = load_dataset(args.dataset, label_set, settings["segment_policy"])

    cells = ablation_sweep(
        instances, cfg, bundle, sizes, modes, workers=_workers(args), progress=not args.quiet
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "cells": [
            {"beam_size": c.beam_size, "scoring": c.scoring, **c.report.to_json()}
            for c in cells
        ],
        "summary": ablation_summary(cells),
    }
    (out_dir / "ablation.json").write_text(
        json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    table = render_ablation_table(cells)
    (out_dir / "ablation.tsv").write_text(table, encoding="utf-8")
    save_ablation_figure(cells, out_dir / "ablation.png")
    sys.stdout.write(table)
    return 0


def cmd_augment(args: argparse.Namespace) -> int:
    rows = load_dataset_records(args.dataset)
    corpus = read_corpus(args.corpus)
    merged = export_adversarial_training_set(rows, corpus)
    write_dataset_rows(merged, args.out)
    print(f"wrote {len(merged)} records to {args.out}", file=sys.stderr)
    return 0


def cmd_serve_check(args: argparse.Namespace) -> int:
    settings = dict(DEFAULTS)
    ok = True
    for name, url in (("target", args.target), ("infiller", args.infiller), ("sim", args.sim)):
        if not url:
            continue
        if not _is_url(url):
            raise ConfigError(f"serve-check probes HTTP endpoints; got {name}={url!r}")
        client = _client(url, settings)
        healthy = client.healthy()
        print(f"{name} {url}: {'ok' if healthy else 'UNREACHABLE'}")
        ok = ok and healthy
    if not (args.target or args.infiller or args.sim):
        raise ConfigError("serve-check needs at least one endpoint")
    return 0 if ok else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maskbeam", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_attack = sub.add_parser("attack", help="attack a dataset and write corpus + report")
    p_attack.add_argument("--dataset", required=True)
    p_attack.add_argument("--out", required=True, help="output directory")
    _add_shared_flags(p_attack, ("prob-diff", "gold-prob"))
    p_attack.set_defaults(func=cmd_attack)

    p_eval = sub.add_parser("eval", help="recompute metrics from a corpus")
    p_eval.add_argument("--corpus", required=True)
    p_eval.add_argument("--out", help="optional output directory")
    _add_shared_flags(p_eval, ("prob-diff", "gold-prob"))
    p_eval.set_defaults(func=cmd_eval)

    p_ablate = sub.add_parser("ablate", help="sweep beam sizes and scoring modes")
    p_ablate.add_argument("--dataset", required=True)
    p_ablate.add_argument("--out", required=True, help="output directory")
    p_ablate.add_argument("--sizes", required=True, help="comma-separated beam sizes, e.g. 1,2,4")
    _add_shared_flags(p_ablate, ("prob-diff", "gold-prob", "both"))
    p_ablate.set_defaults(func=cmd_ablate)

    p_augment = sub.add_parser("augment", help="export originals + adversarials for re-training")
    p_augment.add_argument("--dataset", required=True)
    p_augment.add_argument("--corpus", required=True)
    p_augment.add_argument("--out", required=True, help="output JSONL file")
    p_augment.set_defaults(func=cmd_augment)

    p_check = sub.add_parser("serve-check", help="probe model-server endpoints")
    p_check.add_argument("--target")
    p_check.add_argument("--infiller")
    p_check.add_argument("--sim")
    p_check.set_defaults(func=cmd_serve_check)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return 2
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def run() -> None:
    sys.exit(main())
