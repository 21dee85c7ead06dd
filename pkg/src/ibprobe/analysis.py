"""Factorial interaction analysis, archetype classification, subset-ratio
sweeps, and the combined diversity-enhancement evaluation."""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import Sequence

from .codebook import SubsetPolicy
from .entropy import diffusion_path_entropy, mim_path_entropy
from .generation import (
    GeneratorSpec,
    SamplingPolicy,
    Stochastic,
    Strategy,
    ToyWorld,
)
from .metrics import TOKEN_HAMMING, quality_proxy
from .probes import (
    ArgmaxProbe,
    ExperimentSettings,
    ParaphraseMode,
    ParaphraseProbe,
    ProbeResult,
    SubsetProbe,
    apply_probe,
    base_settings,
    corpus_report,
    generate_corpus,
    run_probe,
)

FACTOR_SAMPLING = "sampling"
FACTOR_PROMPT = "prompt"
FACTOR_CODEBOOK = "codebook"

DEFAULT_LEVELS = {
    FACTOR_SAMPLING: ("argmax", "stochastic"),
    FACTOR_PROMPT: ("original", "paraphrase"),
    FACTOR_CODEBOOK: ("subset", "full"),
}


@dataclass(frozen=True, eq=False)
class FactorialGrid:
    """Diversity per combination of two-level experiment factors."""

    factors: tuple[str, ...]
    levels: dict[str, tuple[str, str]]
    cells: dict[tuple[str, ...], float]

    def __post_init__(self) -> None:
        expected = set(itertools.product(*(self.levels[f] for f in self.factors)))
        if set(self.cells) != expected:
            missing = expected - set(self.cells)
            extra = set(self.cells) - expected
            raise ValueError(
                f"grid cells do not cover the factor space exactly "
                f"(missing {sorted(missing)}, extra {sorted(extra)})"
            )

    def value(self, cell: dict[str, str]) -> float:
        return self.cells[self.key(cell)]

    def key(self, cell: dict[str, str]) -> tuple[str, ...]:
        if set(cell) != set(self.factors):
            raise ValueError(f"cell must name every factor {self.factors}")
        return tuple(cell[f] for f in self.factors)


@dataclass(frozen=True)
class WaterfallReport:
    """Single-flip main effects against an all-constrained baseline cell.

    ``prediction`` is baseline plus the sum of effects; ``synergy_gap`` is the
    measured all-flipped cell minus that prediction. ``balanced_effects`` is
    the secondary ANOVA-style column (level means over the whole grid).
    """

    baseline_cell: dict[str, str]
    final_cell: dict[str, str]
    baseline: float
    effects: dict[str, float]
    prediction: float
    actual: float
    synergy_gap: float
    balanced_effects: dict[str, float]

    def to_json_dict(self) -> dict:
        return {
            "baseline_cell": dict(self.baseline_cell),
            "final_cell": dict(self.final_cell),
            "baseline": self.baseline,
            "effects": dict(self.effects),
            "prediction": self.prediction,
            "actual": self.actual,
            "synergy_gap": self.synergy_gap,
            "balanced_effects": dict(self.balanced_effects),
        }


def waterfall(
    grid: FactorialGrid,
    baseline_cell: dict[str, str],
    final_cell: dict[str, str],
) -> WaterfallReport:
    """Additive prediction from single-factor flips versus the actual cell."""
    for f in grid.factors:
        if baseline_cell[f] == final_cell[f]:
            raise ValueError(f"baseline and final must differ in factor {f!r}")
    baseline = grid.value(baseline_cell)
    effects = {}
    for f in grid.factors:
        flipped = dict(baseline_cell)
        flipped[f] = final_cell[f]
        effects[f] = grid.value(flipped) - baseline
    prediction = baseline + math.fsum(effects.values())
    actual = grid.value(final_cell)
    balanced = {}
    for f in grid.factors:
        hi = [v for k, v in grid.cells.items() if k[grid.factors.index(f)] == final_cell[f]]
        lo = [v for k, v in grid.cells.items() if k[grid.factors.index(f)] == baseline_cell[f]]
        balanced[f] = math.fsum(hi) / len(hi) - math.fsum(lo) / len(lo)
    return WaterfallReport(
        baseline_cell=dict(baseline_cell),
        final_cell=dict(final_cell),
        baseline=baseline,
        effects=effects,
        prediction=prediction,
        actual=actual,
        synergy_gap=actual - prediction,
        balanced_effects=balanced,
    )


@dataclass(frozen=True)
class InteractionProfile:
    """Conditional effects of the other factors at each level of a facet.

    ``conditional_effects[other][level]`` is the mean effect of flipping
    ``other`` from its first to its second level while the facet factor is
    held at ``level``. A crossover flag is set when that effect changes sign
    across facet levels with both magnitudes above the tolerance.
    """

    facet: str
    facet_levels: tuple[str, str]
    conditional_effects: dict[str, dict[str, float]]
    crossover: dict[str, bool]

    def to_json_dict(self) -> dict:
        return {
            "facet": self.facet,
            "facet_levels": list(self.facet_levels),
            "conditional_effects": {
                k: dict(v) for k, v in self.conditional_effects.items()
            },
            "crossover": dict(self.crossover),
        }


def interaction_profiles(
    grid: FactorialGrid, epsilon: float = 1e-12
) -> list[InteractionProfile]:
    profiles = []
    for facet in grid.factors:
        others = [f for f in grid.factors if f != facet]
        effects: dict[str, dict[str, float]] = {o: {} for o in others}
        flags: dict[str, bool] = {}
        for other in others:
            rest = [f for f in others if f != other]
            for level in grid.levels[facet]:
                diffs = []
                rest_levels = itertools.product(*(grid.levels[f] for f in rest))
                for combo in rest_levels:
                    cell = dict(zip(rest, combo))
                    cell[facet] = level
                    cell[other] = grid.levels[other][1]
                    hi = grid.value(cell)
                    cell[other] = grid.levels[other][0]
                    lo = grid.value(cell)
                    diffs.append(hi - lo)
                effects[other][level] = math.fsum(diffs) / len(diffs)
            lv = [effects[other][level] for level in grid.levels[facet]]
            flags[other] = (
                lv[0] * lv[1] < 0.0
                and abs(lv[0]) > epsilon
                and abs(lv[1]) > epsilon
            )
        profiles.append(
            InteractionProfile(
                facet=facet,
                facet_levels=grid.levels[facet],
                conditional_effects=effects,
                crossover=flags,
            )
        )
    return profiles


# --- Archetype classification ------------------------------------------


class Archetype(str, enum.Enum):
    DIVERSITY_PRIORITIZED = "diversity_prioritized"
    COMPRESSION_PRIORITIZED = "compression_prioritized"
    DECOUPLED = "decoupled"
    UNCLASSIFIED = "unclassified"


@dataclass(frozen=True)
class ArchetypeEvidence:
    """Probe responses the classifier consumes.

    Drops are relative decreases of the headline latent diversity metric
    (positive = the intervention reduced diversity). ``argmax_intervened`` is
    the absolute diversity measured under full argmax, and ``h_path`` the
    path entropy of the generator, in bits.
    """

    argmax_drop: float
    subset_drop: float
    argmax_intervened: float
    h_path: float
    paraphrase_gain: float | None = None

    def to_json_dict(self) -> dict:
        out = {
            "argmax_drop": self.argmax_drop,
            "subset_drop": self.subset_drop,
            "argmax_intervened": self.argmax_intervened,
            "h_path": self.h_path,
        }
        if self.paraphrase_gain is not None:
            out["paraphrase_gain"] = self.paraphrase_gain
        return out


@dataclass(frozen=True)
class ArchetypeLabel:
    label: Archetype
    theta_big: float
    theta_small: float
    evidence: ArchetypeEvidence

    def to_json_dict(self) -> dict:
        return {
            "label": self.label.value,
            "theta_big": self.theta_big,
            "theta_small": self.theta_small,
            "evidence": self.evidence.to_json_dict(),
        }


def classify_archetype(
    evidence: ArchetypeEvidence,
    theta_big: float = 0.2,
    theta_small: float = 0.05,
) -> ArchetypeLabel:
    """Rule-based strategy label from probe responses, evaluated in order:
    argmax collapse with zero path entropy, both drops large, then
    argmax-insensitive but subset-sensitive."""
    if evidence.argmax_intervened == 0.0 and evidence.h_path == 0.0:
        label = Archetype.COMPRESSION_PRIORITIZED
    elif evidence.argmax_drop >= theta_big and evidence.subset_drop >= theta_big:
        label = Archetype.DIVERSITY_PRIORITIZED
    elif evidence.argmax_drop <= theta_small and evidence.subset_drop >= theta_big:
        label = Archetype.DECOUPLED
    else:
        label = Archetype.UNCLASSIFIED
    return ArchetypeLabel(label, theta_big, theta_small, evidence)


def strategy_path_entropy(world: ToyWorld, spec: GeneratorSpec | None = None) -> float:
    """Path entropy of the generator, averaged over base conditions."""
    spec = spec or world.spec
    if spec.strategy is Strategy.AR:
        return 0.0
    if spec.strategy is Strategy.MIM:
        return mim_path_entropy(spec)
    values = [diffusion_path_entropy(spec, x) for x in world.base_conditions]
    return math.fsum(values) / len(values)


def archetype_evidence(
    world: ToyWorld,
    n: int = 64,
    seed: int = 0,
    subset_probe: SubsetProbe = SubsetProbe(),
    paraphrase_probe: ParaphraseProbe | None = None,
    headline: str = TOKEN_HAMMING,
) -> tuple[ArchetypeEvidence, dict[str, ProbeResult]]:
    """Run the argmax and subset probes (optionally paraphrase) and collect
    the classifier inputs."""
    results = {
        "argmax": run_probe(world, probe=ArgmaxProbe(), n=n, seed=seed),
        "subset": run_probe(world, probe=subset_probe, n=n, seed=seed),
    }
    gain = None
    if paraphrase_probe is not None:
        results["paraphrase"] = run_probe(world, probe=paraphrase_probe, n=n, seed=seed)
        gain = results["paraphrase"].relative[headline]
    evidence = ArchetypeEvidence(
        argmax_drop=-results["argmax"].relative[headline],
        subset_drop=-results["subset"].relative[headline],
        argmax_intervened=results["argmax"].intervened.values[headline],
        h_path=strategy_path_entropy(world),
        paraphrase_gain=gain,
    )
    return evidence, results


# --- Sweeps -------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    ratio: float
    values: dict[str, float]
    proxy_bits: float
    proxy_flagged: int

    def to_json_dict(self) -> dict:
        return {
            "ratio": self.ratio,
            "values": dict(self.values),
            "proxy_bits": self.proxy_bits,
            "proxy_flagged": self.proxy_flagged,
        }


@dataclass(frozen=True)
class SweepResult:
    strategy: str
    rows: tuple[SweepRow, ...]
    baseline: SweepRow

    def to_json_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "baseline": self.baseline.to_json_dict(),
            "rows": [r.to_json_dict() for r in self.rows],
        }


def _settings_row(settings: ExperimentSettings, ratio: float) -> SweepRow:
    groups, labels = generate_corpus(settings)
    pooled = any(len(g) > 1 for g in settings.prompt_groups)
    from .metrics import diversity_report

    report = diversity_report(
        groups, settings.spec.codebook, subgroup_labels=labels if pooled else None
    )
    proxies = []
    flagged = 0
    for group, label_row, conditions in zip(groups, labels, settings.prompt_groups):
        for ci, x in enumerate(conditions):
            grids = [g for g, l in zip(group, label_row) if l == ci]
            if not grids:
                continue
            res = quality_proxy(grids, settings.world, x)
            proxies.append(res.bits_per_token)
            flagged += res.n_zero_prob
    return SweepRow(
        ratio=ratio,
        values=dict(report.values),
        proxy_bits=math.fsum(proxies) / len(proxies),
        proxy_flagged=flagged,
    )


def _sweep_rows(
    per_ratio_settings: list[tuple[float, ExperimentSettings]], jobs: int = 1
) -> list[SweepRow]:
    if jobs <= 1:
        return [_settings_row(s, r) for r, s in per_ratio_settings]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_settings_row, s, r) for r, s in per_ratio_settings]
        return [f.result() for f in futures]


def _validate_ratios(ratios: Sequence[float]) -> list[float]:
    out = [float(r) for r in ratios]
    if not out:
        raise ValueError("ratio sweep needs at least one ratio")
    if any(not 0.0 < r <= 1.0 for r in out):
        raise ValueError(f"ratios must lie in (0, 1]: {out}")
    if sorted(out) != out:
        raise ValueError("ratios must be sorted ascending")
    return out


def ratio_sweep(
    world: ToyWorld,
    spec: GeneratorSpec | None = None,
    ratios: Sequence[float] = (0.25, 0.5, 0.75, 1.0),
    policy: SamplingPolicy = Stochastic(),
    n: int = 16,
    seed: int = 0,
    subset_policy: SubsetPolicy = SubsetPolicy.DROP_LEAST_FREQUENT,
    subset_seed: int = 0,
    jobs: int = 1,
) -> SweepResult:
    """Diversity and quality proxy as the kept-codebook fraction varies.

    All rows share the base seed, so the ratio-1.0 row reproduces the
    unrestricted baseline exactly.
    """
    ratios = _validate_ratios(ratios)
    base = base_settings(world, n, seed, spec=spec, policy=policy)
    per_ratio = [
        (r, apply_probe(base, SubsetProbe(policy=subset_policy, ratio=r, seed=subset_seed)))
        for r in ratios
    ]
    rows = _sweep_rows(per_ratio, jobs)
    baseline = _settings_row(base, 1.0)
    return SweepResult(
        strategy=base.spec.strategy.value, rows=tuple(rows), baseline=baseline
    )


def enhancement_sweep(
    world: ToyWorld,
    spec: GeneratorSpec | None = None,
    ratios: Sequence[float] = (0.6, 0.8, 1.0),
    k_paraphrases: int = 5,
    n: int = 16,
    seed: int = 0,
    subset_seed: int = 0,
    jobs: int = 1,
) -> SweepResult:
    """Drop the most frequent codes and pool mixed-length paraphrases.

    ``ratios`` are kept fractions; a ratio of 0.8 disables the top 20% of
    codes by usage. Rows are compared against the unintervened single-prompt
    baseline.
    """
    ratios = _validate_ratios(ratios)
    base = base_settings(world, n, seed, spec=spec)
    paraphrased = apply_probe(
        base, ParaphraseProbe(mode=ParaphraseMode.MIXED, k=k_paraphrases)
    )
    per_ratio = [
        (
            r,
            apply_probe(
                paraphrased,
                SubsetProbe(
                    policy=SubsetPolicy.DROP_MOST_FREQUENT, ratio=r, seed=subset_seed
                ),
            ),
        )
        for r in ratios
    ]
    rows = _sweep_rows(per_ratio, jobs)
    baseline = _settings_row(base, 1.0)
    return SweepResult(
        strategy=base.spec.strategy.value, rows=tuple(rows), baseline=baseline
    )


# --- Factorial grid construction ----------------------------------------


def build_factorial_grid(
    world: ToyWorld,
    spec: GeneratorSpec | None = None,
    n: int = 16,
    seed: int = 0,
    subset_probe: SubsetProbe = SubsetProbe(),
    paraphrase_probe: ParaphraseProbe = ParaphraseProbe(),
    include_sampling: bool | None = None,
    headline: str = TOKEN_HAMMING,
    jobs: int = 1,
) -> FactorialGrid:
    """Measure the headline diversity of every factor combination.

    The sampling factor is dropped for AR generators, where argmax collapses
    diversity to zero and a two-factor grid is the informative design.
    """
    spec = spec or world.spec
    if include_sampling is None:
        include_sampling = spec.strategy is not Strategy.AR
    factors = (
        (FACTOR_SAMPLING, FACTOR_PROMPT, FACTOR_CODEBOOK)
        if include_sampling
        else (FACTOR_PROMPT, FACTOR_CODEBOOK)
    )
    base = base_settings(world, n, seed, spec=spec)
    combos = list(itertools.product(*(DEFAULT_LEVELS[f] for f in factors)))
    cells = {}
    for combo in combos:
        settings = base
        cell = dict(zip(factors, combo))
        if cell.get(FACTOR_SAMPLING) == "argmax":
            settings = apply_probe(settings, ArgmaxProbe())
        if cell[FACTOR_PROMPT] == "paraphrase":
            settings = apply_probe(settings, paraphrase_probe)
        if cell[FACTOR_CODEBOOK] == "subset":
            settings = apply_probe(settings, subset_probe)
        report = corpus_report(settings)
        cells[combo] = report.values[headline]
    return FactorialGrid(
        factors=factors,
        levels={f: DEFAULT_LEVELS[f] for f in factors},
        cells=cells,
    )
