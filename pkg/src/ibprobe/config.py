"""Experiment configuration: JSON schema validation and world construction."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .codebook import Scheme, SubsetPolicy, build_quantizer, explicit_codebook
from .generation import (
    Condition,
    GeneratorSpec,
    LengthTag,
    Strategy,
    ToyWorld,
)
from .probes import (
    ArgmaxProbe,
    ArgmaxStage,
    ParaphraseMode,
    ParaphraseProbe,
    ProbeSpec,
    SubsetProbe,
)
from .reference import REFERENCE_WORLDS


class ConfigError(ValueError):
    """Configuration failed validation; the CLI maps this to exit code 1."""


def load_schema() -> dict:
    text = (
        resources.files("ibprobe").joinpath("schema/experiment.schema.json").read_text()
    )
    return json.loads(text)


@dataclass
class ExperimentConfig:
    """Validated experiment description."""

    name: str
    seed: int
    n: int
    beta: float
    out_dir: str | None
    world_name: str
    world: ToyWorld
    probes: list[ProbeSpec]
    analysis: dict

    @classmethod
    def from_path(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}") from e
        return cls.from_dict(raw, base_dir=path.parent)

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path | None = None) -> "ExperimentConfig":
        try:
            jsonschema.validate(raw, load_schema())
        except jsonschema.ValidationError as e:
            location = "/".join(str(p) for p in e.absolute_path) or "<root>"
            raise ConfigError(f"config invalid at {location}: {e.message}") from e
        world_raw = raw["world"]
        if "preset" in world_raw:
            world_name = world_raw["preset"]
            world = REFERENCE_WORLDS[world_name]()
        else:
            world_name = raw.get("name", "inline")
            world = build_world(world_raw, base_dir=base_dir)
        return cls(
            name=raw.get("name", world_name),
            seed=raw.get("seed", 0),
            n=raw.get("n", 16),
            beta=raw.get("beta", 1.0),
            out_dir=raw.get("out_dir"),
            world_name=world_name,
            world=world,
            probes=[parse_probe(p) for p in raw.get("probes", [])],
            analysis=raw.get("analysis", {}),
        )


def parse_probe(raw: dict) -> ProbeSpec:
    kind = raw["kind"]
    if kind == "subset":
        return SubsetProbe(
            policy=SubsetPolicy(raw.get("policy", "drop_least_frequent")),
            ratio=raw.get("ratio", 0.5),
            seed=raw.get("seed", 0),
        )
    if kind == "argmax":
        return ArgmaxProbe(stage=ArgmaxStage(raw.get("stage", "all")))
    return ParaphraseProbe(
        mode=ParaphraseMode(raw.get("mode", "mixed")), k=raw.get("k", 5)
    )


def _build_codebook(raw: dict):
    scheme = Scheme(raw["scheme"])
    try:
        if scheme is Scheme.EXPLICIT:
            if "entries" not in raw:
                raise ConfigError("explicit codebook requires entries")
            return explicit_codebook(raw["entries"])
        if scheme is Scheme.FSQ:
            if "levels" not in raw:
                raise ConfigError("fsq codebook requires levels")
            return build_quantizer("fsq", levels=raw["levels"])
        if "dim" not in raw:
            raise ConfigError(f"{scheme.value} codebook requires dim")
        return build_quantizer(scheme, dim=raw["dim"])
    except ValueError as e:
        raise ConfigError(f"codebook: {e}") from e


def build_world(raw: dict, base_dir: Path | None = None) -> ToyWorld:
    """Construct a world from an inline config block.

    Generator tables index conditions by their position in the conditions
    list; ``tables_file`` loads the same structure from a JSON file resolved
    relative to the config."""
    cb = _build_codebook(raw["codebook"])
    grid = tuple(raw["grid"])
    conditions = tuple(
        Condition(c["class"], c["form"], LengthTag(c["length"]))
        for c in raw["conditions"]
    )
    if len(set(conditions)) != len(conditions):
        raise ConfigError("conditions must be distinct")
    gen = raw["generator"]
    strategy = Strategy(gen["strategy"])
    tables = gen.get("tables")
    if "tables_file" in gen:
        if tables is not None:
            raise ConfigError("give either tables or tables_file, not both")
        table_path = Path(gen["tables_file"])
        if base_dir is not None and not table_path.is_absolute():
            table_path = base_dir / table_path
        try:
            tables = json.loads(table_path.read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot load tables_file: {e}") from e
    if tables is None:
        raise ConfigError("inline generator requires tables or tables_file")

    def per_condition(key: str, rank: int) -> dict[Condition, np.ndarray]:
        if key not in tables:
            raise ConfigError(f"{strategy.value} generator tables need {key!r}")
        arr = np.asarray(tables[key], dtype=np.float64)
        if arr.ndim != rank + 1 or arr.shape[0] != len(conditions):
            raise ConfigError(
                f"tables[{key!r}] must have one rank-{rank} block per condition"
            )
        return {x: arr[i] for i, x in enumerate(conditions)}

    kwargs: dict = {}
    try:
        if strategy is Strategy.AR:
            window = gen.get("context_window", 1)
            kwargs.update(
                context_window=window,
                ar_initial=per_condition("initial", 1),
                ar_transition=per_condition("transition", 2) if window == 1 else None,
            )
        elif strategy is Strategy.MIM:
            kwargs.update(
                steps=gen.get("steps", 1),
                schedule=gen.get("schedule", "cosine"),
                unmask_counts=tuple(gen["counts"]) if "counts" in gen else None,
                mim_base=per_condition("base", 2),
                mim_affinity=(
                    np.asarray(gen["affinity"], dtype=np.float64)
                    if "affinity" in gen
                    else None
                ),
                mim_sharpening=(
                    tuple(gen["sharpening"]) if "sharpening" in gen else None
                ),
                mim_selection=gen.get("selection", "uniform"),
            )
        else:
            if "prior" not in tables:
                raise ConfigError("diff generator tables need 'prior'")
            kwargs.update(
                steps=gen.get("steps", 1),
                diff_prior=np.asarray(tables["prior"], dtype=np.float64),
                diff_transition=per_condition("transition", 2),
            )
        spec = GeneratorSpec(
            strategy=strategy, grid_shape=grid, codebook=cb, **kwargs
        )
    except ValueError as e:
        raise ConfigError(f"generator: {e}") from e

    base = ()
    if "base_conditions" in raw:
        try:
            base = tuple(conditions[i] for i in raw["base_conditions"])
        except IndexError as e:
            raise ConfigError("base_conditions index out of range") from e
    try:
        return ToyWorld(conditions=conditions, spec=spec, base_conditions=base)
    except ValueError as e:
        raise ConfigError(f"world: {e}") from e
