"""Shared builders for small analytic worlds used across test modules."""

import numpy as np

from ibprobe.codebook import build_quantizer
from ibprobe.generation import (
    Condition,
    GeneratorSpec,
    LengthTag,
    Strategy,
    ToyWorld,
)

X0 = Condition(0, 0, LengthTag.SHORT)
X1 = Condition(0, 1, LengthTag.MEDIUM)


def ar_spec(initial, transition=None, shape=(1, 2), conditions=(X0,), window=1):
    """AR spec with the same tables for every condition."""
    k = len(initial)
    cb = build_quantizer("fsq", levels=[k])
    return GeneratorSpec(
        strategy=Strategy.AR,
        grid_shape=shape,
        codebook=cb,
        context_window=window,
        ar_initial={x: np.asarray(initial, dtype=float) for x in conditions},
        ar_transition=(
            {x: np.asarray(transition, dtype=float) for x in conditions}
            if transition is not None
            else None
        ),
    )


def mim_spec(
    base,
    shape=(1, 2),
    steps=2,
    counts=None,
    conditions=(X0,),
    affinity=None,
    sharpening=None,
    selection="uniform",
):
    base = np.asarray(base, dtype=float)
    k = base.shape[-1]
    cb = build_quantizer("fsq", levels=[k])
    return GeneratorSpec(
        strategy=Strategy.MIM,
        grid_shape=shape,
        codebook=cb,
        steps=steps,
        unmask_counts=counts,
        mim_base={x: base for x in conditions},
        mim_affinity=affinity,
        mim_sharpening=sharpening,
        mim_selection=selection,
    )


def diff_spec(prior, transition, shape=(1, 1), steps=2, conditions=(X0,)):
    prior = np.asarray(prior, dtype=float)
    cb = build_quantizer("fsq", levels=[prior.size])
    return GeneratorSpec(
        strategy=Strategy.DIFF,
        grid_shape=shape,
        codebook=cb,
        steps=steps,
        diff_prior=prior,
        diff_transition={x: np.asarray(transition, dtype=float) for x in conditions},
    )


def world_of(spec, conditions=(X0,)):
    return ToyWorld(conditions=tuple(conditions), spec=spec)
