"""Batch front door: load experiment configs, run demos, probes, sweeps, and
analyses, and emit deterministic JSON and CSV reports."""

from __future__ import annotations

import argparse
import json
import math
import sys
import traceback
from pathlib import Path

from . import __version__
from .analysis import (
    archetype_evidence,
    build_factorial_grid,
    classify_archetype,
    enhancement_sweep,
    interaction_profiles,
    ratio_sweep,
    waterfall,
)
from .codebook import SubsetPolicy
from .config import ConfigError, ExperimentConfig
from .entropy import decompose, identity_audit
from .generation import EnumerationBoundError
from .metrics import METRIC_NAMES, diversity_report
from .probes import (
    CORPUS_CSV_COLUMNS,
    ParaphraseProbe,
    base_settings,
    corpus_csv_rows,
    generate_corpus,
    probe_to_json,
    run_probe,
)
from .reference import ARCHETYPE_EXPECTATIONS, REFERENCE_WORLDS

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2

IDENTITY_TOLERANCE = 1e-9


def _round_floats(obj, sig: int = 9):
    """Round every float to ``sig`` significant digits for stable output."""
    if isinstance(obj, float):
        if math.isfinite(obj) and obj != 0.0:
            return float(f"{obj:.{sig}g}")
        return obj
    if isinstance(obj, dict):
        return {k: _round_floats(v, sig) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v, sig) for v in obj]
    return obj


def write_json(path: Path, payload: dict) -> None:
    text = json.dumps(_round_floats(payload), indent=2, sort_keys=True)
    path.write_text(text + "\n")


def _fmt(value) -> str:
    if isinstance(value, float):
        rounded = _round_floats(value)
        return repr(rounded)
    return str(value)


def write_csv(path: Path, meta: dict, columns: list[str], rows: list[tuple]) -> None:
    header = "# " + " ".join(f"{k}={v}" for k, v in meta.items())
    lines = [header, ",".join(columns)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def _meta(name: str, seed: int, n: int) -> dict:
    return {"name": name, "seed": seed, "n": n, "version": __version__}


def _probe_rows(world_name: str, results: dict) -> list[tuple]:
    rows = []
    for probe_name, result in results.items():
        for metric in METRIC_NAMES:
            rows.append(
                (world_name, probe_name, metric, "baseline", result.baseline.values[metric])
            )
            rows.append(
                (world_name, probe_name, metric, "intervened", result.intervened.values[metric])
            )
    return rows


PROBE_CSV_COLUMNS = ["world", "probe", "metric", "variant", "value"]


def cmd_demo_archetypes(args) -> int:
    out = _prepare_out(args.out)
    summary = {"meta": _meta("demo-archetypes", args.seed, args.n), "archetypes": {}}
    csv_rows = []
    for name, builder in REFERENCE_WORLDS.items():
        world = builder()
        evidence, results = archetype_evidence(
            world, n=args.n, seed=args.seed, paraphrase_probe=ParaphraseProbe()
        )
        label = classify_archetype(evidence)
        report = decompose(world, conditions=world.base_conditions)
        summary["archetypes"][name] = {
            "strategy": world.spec.strategy.value,
            "label": label.to_json_dict(),
            "probes": {k: r.to_json_dict() for k, r in results.items()},
            "entropy": report.to_json_dict(),
        }
        csv_rows += _probe_rows(name, results)
    write_json(out / "summary.json", summary)
    write_csv(out / "probes.csv", summary["meta"], PROBE_CSV_COLUMNS, csv_rows)
    for name, block in summary["archetypes"].items():
        print(f"{name}: {block['label']['label']}")
    return EXIT_OK


def cmd_probe(args) -> int:
    config = ExperimentConfig.from_path(args.config)
    seed, n, out = _overrides(config, args)
    results = {}
    for i, probe in enumerate(config.probes):
        results[f"probe-{i}-{probe_to_json(probe)['kind']}"] = run_probe(
            config.world, probe=probe, n=n, seed=seed
        )
    summary = {
        "meta": _meta(config.name, seed, n),
        "world": config.world_name,
        "probes": [r.to_json_dict() for r in results.values()],
    }
    base = base_settings(config.world, n, seed)
    groups, labels = generate_corpus(base)
    baseline_report = diversity_report(groups, config.world.spec.codebook)
    summary["baseline"] = baseline_report.to_json_dict()
    if config.analysis.get("classify"):
        evidence, _ = archetype_evidence(config.world, n=n, seed=seed)
        summary["classification"] = classify_archetype(evidence).to_json_dict()
    if config.analysis.get("entropy_report"):
        report = decompose(
            config.world, beta=config.beta, conditions=config.world.base_conditions
        )
        summary["entropy"] = report.to_json_dict()
    write_json(out / "summary.json", summary)
    write_csv(
        out / "probes.csv",
        summary["meta"],
        PROBE_CSV_COLUMNS,
        _probe_rows(config.world_name, results),
    )
    write_csv(
        out / "corpus.csv",
        summary["meta"],
        CORPUS_CSV_COLUMNS,
        corpus_csv_rows(base, groups, labels),
    )
    write_csv(
        out / "diversity.csv",
        summary["meta"],
        ["prompt", "metric", "value"],
        baseline_report.to_csv_rows(),
    )
    return EXIT_OK


SWEEP_CSV_COLUMNS = ["kind", "ratio", *METRIC_NAMES, "proxy_bits", "proxy_flagged"]


def _sweep_rows(result) -> list[tuple]:
    rows = [
        (
            "baseline",
            result.baseline.ratio,
            *[result.baseline.values[m] for m in METRIC_NAMES],
            result.baseline.proxy_bits,
            result.baseline.proxy_flagged,
        )
    ]
    for row in result.rows:
        rows.append(
            (
                "restricted",
                row.ratio,
                *[row.values[m] for m in METRIC_NAMES],
                row.proxy_bits,
                row.proxy_flagged,
            )
        )
    return rows


def cmd_sweep(args) -> int:
    config = ExperimentConfig.from_path(args.config)
    seed, n, out = _overrides(config, args)
    block = config.analysis.get("ratio_sweep")
    if block is None:
        raise ConfigError("config has no analysis.ratio_sweep block")
    result = ratio_sweep(
        config.world,
        ratios=block["ratios"],
        n=n,
        seed=seed,
        subset_policy=SubsetPolicy(block.get("policy", "drop_least_frequent")),
        jobs=args.jobs,
    )
    summary = {
        "meta": _meta(config.name, seed, n),
        "world": config.world_name,
        "ratio_sweep": result.to_json_dict(),
    }
    write_json(out / "summary.json", summary)
    write_csv(out / "sweep.csv", summary["meta"], SWEEP_CSV_COLUMNS, _sweep_rows(result))
    return EXIT_OK


def cmd_enhance(args) -> int:
    config = ExperimentConfig.from_path(args.config)
    seed, n, out = _overrides(config, args)
    block = config.analysis.get("enhancement")
    if block is None:
        raise ConfigError("config has no analysis.enhancement block")
    result = enhancement_sweep(
        config.world,
        ratios=block["ratios"],
        k_paraphrases=block.get("paraphrases", 5),
        n=n,
        seed=seed,
        jobs=args.jobs,
    )
    summary = {
        "meta": _meta(config.name, seed, n),
        "world": config.world_name,
        "enhancement": result.to_json_dict(),
    }
    write_json(out / "summary.json", summary)
    write_csv(out / "enhance.csv", summary["meta"], SWEEP_CSV_COLUMNS, _sweep_rows(result))
    return EXIT_OK


def cmd_waterfall(args) -> int:
    config = ExperimentConfig.from_path(args.config)
    seed, n, out = _overrides(config, args)
    grid = build_factorial_grid(config.world, n=n, seed=seed)
    baseline_cell = {f: grid.levels[f][0] for f in grid.factors}
    final_cell = {f: grid.levels[f][1] for f in grid.factors}
    report = waterfall(grid, baseline_cell, final_cell)
    profiles = interaction_profiles(grid)
    summary = {
        "meta": _meta(config.name, seed, n),
        "world": config.world_name,
        "grid": {
            "factors": list(grid.factors),
            "cells": {"|".join(k): v for k, v in sorted(grid.cells.items())},
        },
        "waterfall": report.to_json_dict(),
        "profiles": [p.to_json_dict() for p in profiles],
    }
    write_json(out / "summary.json", summary)
    rows = [("baseline", report.baseline)]
    running = report.baseline
    for factor in grid.factors:
        running += report.effects[factor]
        rows.append((f"+{factor}", running))
    rows += [
        ("prediction", report.prediction),
        ("actual", report.actual),
        ("synergy_gap", report.synergy_gap),
    ]
    write_csv(out / "waterfall.csv", summary["meta"], ["step", "value"], rows)
    write_csv(
        out / "grid.csv",
        summary["meta"],
        [*grid.factors, "value"],
        [(*cell, value) for cell, value in sorted(grid.cells.items())],
    )
    profile_rows = [
        (p.facet, level, other, p.conditional_effects[other][level], p.crossover[other])
        for p in profiles
        for other in p.conditional_effects
        for level in p.facet_levels
    ]
    write_csv(
        out / "profiles.csv",
        summary["meta"],
        ["facet", "facet_level", "other_factor", "conditional_effect", "crossover"],
        profile_rows,
    )
    return EXIT_OK


def cmd_audit(args) -> int:
    out = _prepare_out(args.out)
    seed = args.seed if args.seed is not None else 0
    records = identity_audit(n_specs=args.specs, seed=seed)
    worst = max(abs(r.identity_residual) for r in records)
    summary = {
        "meta": _meta("audit", seed, args.specs),
        "tolerance": IDENTITY_TOLERANCE,
        "max_abs_residual": worst,
        "records": [r.to_json_dict() for r in records],
    }
    write_json(out / "summary.json", summary)
    write_csv(
        out / "audit.csv",
        summary["meta"],
        ["label", "strategy", "identity_residual"],
        [(r.label, r.strategy, r.identity_residual) for r in records],
    )
    for r in records:
        print(f"{r.label} [{r.strategy}] identity residual {r.identity_residual:.3e}")
    if worst >= IDENTITY_TOLERANCE:
        print(f"FAIL: max residual {worst:.3e} >= {IDENTITY_TOLERANCE}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"ok: {len(records)} specs, max residual {worst:.3e}")
    return EXIT_OK


def run_check(seed: int) -> int:
    """Entropy-identity audit plus the shipped archetype fixtures."""
    records = identity_audit(n_specs=30, seed=seed)
    worst = max(abs(r.identity_residual) for r in records)
    print(f"identity audit: {len(records)} specs, max residual {worst:.3e}")
    if worst >= IDENTITY_TOLERANCE:
        print("FAIL: identity residual above tolerance", file=sys.stderr)
        return EXIT_RUNTIME
    status = EXIT_OK
    for name, builder in REFERENCE_WORLDS.items():
        evidence, _ = archetype_evidence(builder(), n=64, seed=seed)
        label = classify_archetype(evidence).label.value
        expected = ARCHETYPE_EXPECTATIONS[name]
        marker = "ok" if label == expected else "FAIL"
        print(f"{marker}: {name} -> {label} (expected {expected})")
        if label != expected:
            status = EXIT_RUNTIME
    return status


def _prepare_out(out: str | None) -> Path:
    path = Path(out) if out else Path("ibprobe-out")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _overrides(config: ExperimentConfig, args) -> tuple[int, int, Path]:
    seed = args.seed if args.seed is not None else config.seed
    n = args.n if args.n is not None else config.n
    out = _prepare_out(args.out or config.out_dir)
    return seed, n, out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ibprobe",
        description=(
            "Diagnostics for toy discrete-latent generators: entropy"
            " decomposition, inference-time probes, and interaction analysis."
        ),
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config_arg=False):
        if config_arg:
            p.add_argument("config", help="experiment config JSON path")
        p.add_argument("--seed", type=int, default=None, help="base seed override")
        p.add_argument("--n", type=int, default=None, help="samples per prompt override")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
        p.add_argument(
            "--check",
            action="store_true",
            help="run the entropy-identity audit and archetype fixtures, then exit",
        )

    add_common(sub.add_parser("demo-archetypes", help="classify the three reference worlds"))
    add_common(sub.add_parser("probe", help="run configured probes"), config_arg=True)
    add_common(sub.add_parser("sweep", help="subset-ratio sweep"), config_arg=True)
    add_common(sub.add_parser("enhance", help="diversity enhancement sweep"), config_arg=True)
    add_common(sub.add_parser("waterfall", help="factorial grid, waterfall, profiles"), config_arg=True)
    audit = sub.add_parser("audit", help="entropy-identity audit on random specs")
    add_common(audit)
    audit.add_argument("--specs", type=int, default=100, help="number of random specs")
    return parser


COMMANDS = {
    "demo-archetypes": cmd_demo_archetypes,
    "probe": cmd_probe,
    "sweep": cmd_sweep,
    "enhance": cmd_enhance,
    "waterfall": cmd_waterfall,
    "audit": cmd_audit,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.check:
            return run_check(args.seed if args.seed is not None else 0)
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except EnumerationBoundError as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:  # pragma: no cover - defensive
        traceback.print_exc()
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
