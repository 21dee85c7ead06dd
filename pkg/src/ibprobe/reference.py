"""Shipped reference toy worlds, one per behavioral archetype.

Each world pairs a small explicit codebook with conditional tables tuned so
the default probes reproduce a distinct strategy signature:

* ``mim_reference``  - masked iterative generator whose diversity collapses
  under both argmax and frequency-ranked restriction (diversity prioritized).
* ``ar_reference``   - autoregressive generator with zero path entropy whose
  argmax output is a single grid per prompt (compression prioritized).
* ``diff_reference`` - near-deterministic denoiser whose diversity rides on
  the initial state, insensitive to argmax yet sensitive to restriction
  (decoupled).

Code vectors are chosen so no decoded patch is all-zero, keeping the pixel
cosine metric defined on every sample.
"""

from __future__ import annotations

import numpy as np

from .codebook import explicit_codebook
from .generation import (
    Condition,
    GeneratorSpec,
    LengthTag,
    Strategy,
    ToyWorld,
)

N_CLASSES = 2
FORMS_PER_CLASS = 6

_TAG_BY_FORM = (
    LengthTag.SHORT,
    LengthTag.SHORT,
    LengthTag.MEDIUM,
    LengthTag.MEDIUM,
    LengthTag.LONG,
    LengthTag.LONG,
)


def _conditions() -> tuple[Condition, ...]:
    return tuple(
        Condition(s, f, _TAG_BY_FORM[f])
        for s in range(N_CLASSES)
        for f in range(FORMS_PER_CLASS)
    )


def _codebook_6() -> "explicit_codebook":
    return explicit_codebook(
        [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [1.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 1.0],
        ]
    )


def _codebook_5() -> "explicit_codebook":
    return explicit_codebook(
        [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [1.0, 1.0, 0.0, 0.0],
        ]
    )


def _dominant_row(k: int, dominant: int, mass: float) -> np.ndarray:
    row = np.full(k, (1.0 - mass) / (k - 1))
    row[dominant] = mass
    return row


def _hub_row(k: int, dominant: int, secondary: int, d_mass: float, s_mass: float) -> np.ndarray:
    row = np.full(k, (1.0 - d_mass - s_mass) / (k - 2))
    row[dominant] = d_mass
    row[secondary] = s_mass
    return row


def _codebook_4() -> "explicit_codebook":
    return explicit_codebook(
        [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def mim_reference() -> ToyWorld:
    """Masked iterative world with a hub-secondary code structure.

    Code 0 is a hub: it dominates position 0 and is the secondary mode
    everywhere else, so it always tops the usage ranking while the rotating
    per-position dominants split the rest. Restricting to the most-used half
    then cuts two dominants per prompt, funneling those positions onto the
    hub; the sharpening ramp makes late steps low-entropy, so early
    randomness carries most of the diversity.
    """
    cb = _codebook_4()
    conditions = _conditions()
    k = cb.size
    base = {}
    for x in conditions:
        shift = x.semantic_class + x.surface_form
        rows = [_hub_row(k, 0, 1 + (shift % 3), 0.55, 0.25)]
        for i in range(1, 4):
            rows.append(_hub_row(k, 1 + ((shift + i - 1) % 3), 0, 0.55, 0.25))
        base[x] = np.stack(rows)
    affinity = np.ones((k, k))
    np.fill_diagonal(affinity, 2.0)
    spec = GeneratorSpec(
        strategy=Strategy.MIM,
        grid_shape=(2, 2),
        codebook=cb,
        steps=3,
        schedule="cosine",
        mim_base=base,
        mim_affinity=affinity,
        mim_sharpening=(1.0, 2.0, 4.0),
        name="mim-reference",
    )
    return ToyWorld(conditions=conditions, spec=spec)


def ar_reference() -> ToyWorld:
    """Autoregressive world in an effectively collapsed state: each prompt
    anchors on a two-code subrange, with surface forms mapping to different
    anchors so paraphrase pooling spreads the latent usage."""
    cb = _codebook_6()
    conditions = _conditions()
    k = cb.size
    initial = {}
    transition = {}
    for x in conditions:
        anchor = (2 * x.semantic_class + x.surface_form) % 4
        initial[x] = _dominant_row(k, anchor, 0.8)
        rows = []
        for j in range(k):
            w = np.full(k, 0.03)
            w[anchor] += 0.5
            w[(anchor + 1) % 4] += 0.2
            w[j] += 0.12
            rows.append(w / w.sum())
        transition[x] = np.stack(rows)
    spec = GeneratorSpec(
        strategy=Strategy.AR,
        grid_shape=(2, 2),
        codebook=cb,
        context_window=1,
        ar_initial=initial,
        ar_transition=transition,
        name="ar-reference",
    )
    return ToyWorld(conditions=conditions, spec=spec)


def diff_reference() -> ToyWorld:
    """Denoising world with a spread initial prior and near-identity
    transitions: outputs track the initial state, so determinism in the
    transitions barely matters while codebook restriction bites. Tables
    depend only on the semantic class, making paraphrases interchangeable."""
    cb = _codebook_4()
    conditions = _conditions()
    k = cb.size
    prior = np.array([0.55, 0.15, 0.15, 0.15])
    transition = {}
    for x in conditions:
        rows = []
        for j in range(k):
            w = np.zeros(k)
            w[j] = 0.96
            if x.semantic_class == 0:
                w += np.where(np.arange(k) == j, 0.0, 0.04 / (k - 1))
            else:
                for o in range(k):
                    if o != j:
                        w[o] = 0.024 if o == (j + 1) % k else 0.008
            rows.append(w / w.sum())
        transition[x] = np.stack(rows)
    spec = GeneratorSpec(
        strategy=Strategy.DIFF,
        grid_shape=(2, 2),
        codebook=cb,
        steps=2,
        diff_prior=prior,
        diff_transition=transition,
        name="diff-reference",
    )
    return ToyWorld(conditions=conditions, spec=spec)


REFERENCE_WORLDS = {
    "mim-reference": mim_reference,
    "ar-reference": ar_reference,
    "diff-reference": diff_reference,
}

ARCHETYPE_EXPECTATIONS = {
    "mim-reference": "diversity_prioritized",
    "ar-reference": "compression_prioritized",
    "diff-reference": "decoupled",
}
