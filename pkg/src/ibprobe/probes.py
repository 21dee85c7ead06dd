"""Zero-shot inference-time interventions: codebook restriction, deterministic
decoding, and paraphrase pooling, run under matched random streams so a no-op
probe produces exactly zero delta."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Sequence

from .codebook import CodebookSubset, SubsetPolicy, UsageHistogram, restrict
from .generation import (
    Argmax,
    Condition,
    GeneratorSpec,
    LengthTag,
    SamplingPolicy,
    Staged,
    StageWindow,
    Stochastic,
    TokenGrid,
    ToyWorld,
    sample,
)
from .metrics import METRIC_NAMES, DiversityReport, diversity_report


class ParaphraseMode(str, enum.Enum):
    SHORT = "short"
    MEDIUM = "medium"
    LONG = "long"
    MIXED = "mixed"


class ArgmaxStage(str, enum.Enum):
    ALL = "all"
    EARLY = "early"
    MIDDLE = "middle"
    LATE = "late"


@dataclass(frozen=True)
class SubsetProbe:
    policy: SubsetPolicy = SubsetPolicy.DROP_LEAST_FREQUENT
    ratio: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.ratio <= 1.0:
            raise ValueError(f"ratio must lie in (0, 1], got {self.ratio}")


@dataclass(frozen=True)
class ArgmaxProbe:
    stage: ArgmaxStage = ArgmaxStage.ALL


@dataclass(frozen=True)
class ParaphraseProbe:
    mode: ParaphraseMode = ParaphraseMode.MIXED
    k: int = 5

    def __post_init__(self) -> None:
        if self.k < 2:
            raise ValueError("a paraphrase set needs at least 2 conditions")


ProbeSpec = SubsetProbe | ArgmaxProbe | ParaphraseProbe

_MODE_TO_TAG = {
    ParaphraseMode.SHORT: LengthTag.SHORT,
    ParaphraseMode.MEDIUM: LengthTag.MEDIUM,
    ParaphraseMode.LONG: LengthTag.LONG,
}


def paraphrase_set(
    world: ToyWorld, x: Condition, mode: ParaphraseMode | str, k: int
) -> list[Condition]:
    """k distinct conditions sharing x's semantic class.

    Length modes filter by tag; MIXED takes a balanced tag mix (counts differ
    by at most one, remainder to earlier tags in short/medium/long order).
    Selection follows world ordering, so the result is deterministic.
    """
    mode = ParaphraseMode(mode)
    if k < 2:
        raise ValueError("a paraphrase set needs at least 2 conditions")
    members = world.class_members(x.semantic_class)
    if mode is not ParaphraseMode.MIXED:
        tag = _MODE_TO_TAG[mode]
        pool = [c for c in members if c.length_tag == tag]
        if len(pool) < k:
            raise ValueError(
                f"class {x.semantic_class} has {len(pool)} {tag.value} forms, need {k}"
            )
        return pool[:k]
    tags = list(LengthTag)
    base, rem = divmod(k, len(tags))
    chosen: list[Condition] = []
    for i, tag in enumerate(tags):
        need = base + (1 if i < rem else 0)
        pool = [c for c in members if c.length_tag == tag]
        if len(pool) < need:
            raise ValueError(
                f"class {x.semantic_class} has {len(pool)} {tag.value} forms, need {need}"
            )
        chosen.extend(pool[:need])
    return chosen


@dataclass(frozen=True)
class ExperimentSettings:
    """Everything one generation run needs.

    ``prompt_groups`` holds one tuple of conditions per prompt slot; a group
    with several conditions pools its samples (the paraphrase protocol).
    ``usage`` is the validation-set code usage that subset probes rank by.
    """

    world: ToyWorld
    spec: GeneratorSpec
    prompt_groups: tuple[tuple[Condition, ...], ...]
    policy: SamplingPolicy
    subset: CodebookSubset | None
    usage: UsageHistogram
    n: int
    seed: int


def usage_histogram(
    world: ToyWorld,
    spec: GeneratorSpec | None = None,
    seed: int = 0,
    samples_per_condition: int = 200,
) -> UsageHistogram:
    """Code usage counted over a seeded validation corpus of base prompts."""
    spec = spec or world.spec
    token_lists = []
    for ci, x in enumerate(world.base_conditions):
        for j in range(samples_per_condition):
            grid, _ = sample(spec, x, Stochastic(), None, seed=(seed, 0xB5A6E, ci, j))
            token_lists.append(grid.tokens)
    return UsageHistogram.from_token_lists(token_lists, spec.k)


def base_settings(
    world: ToyWorld,
    n: int,
    seed: int,
    spec: GeneratorSpec | None = None,
    policy: SamplingPolicy = Stochastic(),
    usage: UsageHistogram | None = None,
) -> ExperimentSettings:
    spec = spec or world.spec
    if n < 2:
        raise ValueError("need at least 2 samples per prompt")
    if usage is None:
        usage = usage_histogram(world, spec, seed)
    return ExperimentSettings(
        world=world,
        spec=spec,
        prompt_groups=tuple((c,) for c in world.base_conditions),
        policy=policy,
        subset=None,
        usage=usage,
        n=n,
        seed=seed,
    )


_STAGE_TO_WINDOW = {
    ArgmaxStage.EARLY: StageWindow.EARLY,
    ArgmaxStage.MIDDLE: StageWindow.MIDDLE,
    ArgmaxStage.LATE: StageWindow.LATE,
}


def apply_probe(settings: ExperimentSettings, probe: ProbeSpec) -> ExperimentSettings:
    """Pure transformation of experiment settings by one intervention."""
    if isinstance(probe, SubsetProbe):
        subset = restrict(
            settings.spec.codebook, settings.usage, probe.policy, probe.ratio, probe.seed
        )
        return replace(settings, subset=subset)
    if isinstance(probe, ArgmaxProbe):
        if probe.stage is ArgmaxStage.ALL:
            return replace(settings, policy=Argmax())
        if settings.spec.sampling_steps() < 3:
            raise ValueError(
                "staged argmax needs at least 3 sampling steps, spec has "
                f"{settings.spec.sampling_steps()}"
            )
        temperature = getattr(settings.policy, "temperature", 1.0)
        return replace(
            settings,
            policy=Staged(stage=_STAGE_TO_WINDOW[probe.stage], temperature=temperature),
        )
    if isinstance(probe, ParaphraseProbe):
        groups = tuple(
            tuple(paraphrase_set(settings.world, group[0], probe.mode, probe.k))
            for group in settings.prompt_groups
        )
        return replace(settings, prompt_groups=groups)
    raise TypeError(f"unknown probe {probe!r}")


def _allocate(n: int, k: int) -> list[int]:
    """Split n samples over k conditions, earlier conditions get the extra."""
    base, rem = divmod(n, k)
    return [base + (1 if i < rem else 0) for i in range(k)]


def generate_corpus(
    settings: ExperimentSettings,
) -> tuple[list[list[TokenGrid]], list[list[int]]]:
    """Sample every prompt group; returns grids plus per-sample condition ids.

    Sample j of group g always consumes the stream derived from
    (seed, g, j), independent of the conditions in the group, so runs that
    differ only in an intervention stay stream-matched.
    """
    groups: list[list[TokenGrid]] = []
    labels: list[list[int]] = []
    for gi, group in enumerate(settings.prompt_groups):
        counts = _allocate(settings.n, len(group))
        assignment = [
            ci for ci, count in enumerate(counts) for _ in range(count)
        ]
        grids = []
        for j, ci in enumerate(assignment):
            grid, _ = sample(
                settings.spec,
                group[ci],
                settings.policy,
                settings.subset,
                seed=(settings.seed, gi, j),
            )
            grids.append(grid)
        groups.append(grids)
        labels.append(assignment)
    return groups, labels


def corpus_report(settings: ExperimentSettings) -> DiversityReport:
    groups, labels = generate_corpus(settings)
    pooled = any(len(g) > 1 for g in settings.prompt_groups)
    return diversity_report(
        groups, settings.spec.codebook, subgroup_labels=labels if pooled else None
    )


def corpus_csv_rows(
    settings: ExperimentSettings,
    groups: Sequence[Sequence[TokenGrid]],
    labels: Sequence[Sequence[int]],
) -> list[tuple]:
    """Flatten a sampled corpus into rows of (seed, condition, token list)."""
    rows = []
    for gi, (group, label_row) in enumerate(zip(groups, labels)):
        for j, (grid, ci) in enumerate(zip(group, label_row)):
            x = settings.prompt_groups[gi][ci]
            rows.append(
                (
                    f"{settings.seed}/{gi}/{j}",
                    x.semantic_class,
                    x.surface_form,
                    x.length_tag.value,
                    " ".join(str(t) for t in grid.tokens),
                )
            )
    return rows


CORPUS_CSV_COLUMNS = ["seed", "semantic_class", "surface_form", "length", "tokens"]


def relative_delta(baseline: float, delta: float) -> float:
    """delta / baseline with a signed-infinity convention at baseline 0."""
    if baseline != 0.0:
        return delta / baseline
    if delta == 0.0:
        return 0.0
    return math.copysign(math.inf, delta)


@dataclass(frozen=True)
class ProbeResult:
    """Matched baseline and intervened diversity with per-metric deltas."""

    probe: ProbeSpec
    baseline: DiversityReport
    intervened: DiversityReport
    delta: dict[str, float]
    relative: dict[str, float]
    n: int
    seed: int

    def to_json_dict(self) -> dict:
        return {
            "probe": probe_to_json(self.probe),
            "baseline": self.baseline.to_json_dict(),
            "intervened": self.intervened.to_json_dict(),
            "delta": dict(self.delta),
            "relative": dict(self.relative),
            "n": self.n,
            "seed": self.seed,
        }


def probe_to_json(probe: ProbeSpec) -> dict:
    if isinstance(probe, SubsetProbe):
        return {
            "kind": "subset",
            "policy": probe.policy.value,
            "ratio": probe.ratio,
            "seed": probe.seed,
        }
    if isinstance(probe, ArgmaxProbe):
        return {"kind": "argmax", "stage": probe.stage.value}
    return {"kind": "paraphrase", "mode": probe.mode.value, "k": probe.k}


def run_probe(
    world: ToyWorld,
    spec: GeneratorSpec | None = None,
    probe: ProbeSpec = SubsetProbe(),
    n: int = 16,
    seed: int = 0,
    policy: SamplingPolicy = Stochastic(),
    usage: UsageHistogram | None = None,
) -> ProbeResult:
    """Generate matched baseline and intervened corpora and compare them."""
    base = base_settings(world, n, seed, spec=spec, policy=policy, usage=usage)
    intervened = apply_probe(base, probe)
    report_base = corpus_report(base)
    report_int = corpus_report(intervened)
    delta = {
        m: report_int.values[m] - report_base.values[m] for m in METRIC_NAMES
    }
    relative = {m: relative_delta(report_base.values[m], delta[m]) for m in METRIC_NAMES}
    return ProbeResult(
        probe=probe,
        baseline=report_base,
        intervened=report_int,
        delta=delta,
        relative=relative,
        n=n,
        seed=seed,
    )
