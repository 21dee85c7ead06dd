"""Information-bottleneck entropy quantities for toy generators.

Everything is computed in bits. On enumerable instances the conditional
entropy of the latent given the prompt decomposes exactly into path and
execution terms minus a residual; closed forms exist for the masked and
diffusion path entropies, and a Monte-Carlo estimator covers instances past
the enumeration bound.
"""

from __future__ import annotations

import enum
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Hashable, Sequence

import numpy as np

from .codebook import CodebookSubset
from .generation import (
    DEFAULT_ENUMERATION_BOUND,
    Condition,
    GeneratorSpec,
    SamplingPolicy,
    Stochastic,
    Strategy,
    ToyWorld,
    enumerate_outcomes,
)


def shannon(dist: Sequence[float]) -> float:
    """Shannon entropy of a probability vector, in bits, with 0 log 0 = 0."""
    p = np.asarray(dist, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("distribution must be a nonempty vector")
    if np.any(p < -1e-12):
        raise ValueError("probabilities must be nonnegative")
    if abs(float(p.sum()) - 1.0) > 1e-9:
        raise ValueError(f"probabilities sum to {p.sum()}, not 1")
    return -math.fsum(pi * math.log2(pi) for pi in p if pi > 0.0)


def _entropy_of(dist: dict[Hashable, float]) -> float:
    support = [p for p in dist.values() if p > 0.0]
    if len(support) <= 1:
        # A one-point distribution has zero entropy even when its accumulated
        # mass drifted off 1.0 in the last few ulps.
        return 0.0
    return -math.fsum(p * math.log2(p) for p in support)


@dataclass(frozen=True)
class EntropyReport:
    """All entropy quantities of one generator configuration, in bits.

    ``h_residual`` is the path uncertainty left after observing the output
    and the prompt; ``i_zy`` equals ``h_z`` because the decoder is injective
    and deterministic. The objective ``i_xz - beta * i_zy`` is parametric in
    beta.
    """

    h_z: float
    h_z_given_x: float
    h_path: float
    h_exec: float
    h_residual: float
    i_xz: float
    i_zy: float
    beta: float
    ib_objective: float

    @property
    def identity_residual(self) -> float:
        return self.h_z_given_x - (self.h_path + self.h_exec - self.h_residual)

    def to_json_dict(self) -> dict:
        return {
            "h_z": self.h_z,
            "h_z_given_x": self.h_z_given_x,
            "h_path": self.h_path,
            "h_exec": self.h_exec,
            "h_residual": self.h_residual,
            "i_xz": self.i_xz,
            "i_zy": self.i_zy,
            "beta": self.beta,
            "ib_objective": self.ib_objective,
            "identity_residual": self.identity_residual,
        }


def decompose(
    world: ToyWorld,
    spec: GeneratorSpec | None = None,
    policy: SamplingPolicy = Stochastic(),
    subset: CodebookSubset | None = None,
    condition_prior: Sequence[float] | None = None,
    beta: float = 1.0,
    bound: int = DEFAULT_ENUMERATION_BOUND,
    conditions: Sequence[Condition] | None = None,
) -> EntropyReport:
    """Exact entropy decomposition over an enumerable instance.

    Enumerates the joint distribution of (path, grid) for every condition and
    aggregates under the condition prior (uniform by default). Each term is
    computed from its own grouping of the joint, so the total-entropy identity
    is a genuine consistency check rather than an algebraic tautology.
    """
    spec = spec or world.spec
    conds = tuple(conditions) if conditions is not None else world.conditions
    if condition_prior is None:
        prior = np.full(len(conds), 1.0 / len(conds))
    else:
        prior = np.asarray(condition_prior, dtype=np.float64)
        if prior.shape != (len(conds),):
            raise ValueError("condition prior length must match conditions")
        if abs(float(prior.sum()) - 1.0) > 1e-9 or np.any(prior < 0):
            raise ValueError("condition prior must be a distribution")

    marginal_z: dict[Hashable, float] = defaultdict(float)
    h_zx_terms: list[float] = []
    h_path_terms: list[float] = []
    h_exec_terms: list[float] = []
    h_resid_terms: list[float] = []

    for px, x in zip(prior, conds):
        outcomes = enumerate_outcomes(spec, x, policy, subset, bound)
        p_z: dict[Hashable, float] = defaultdict(float)
        p_path: dict[Hashable, float] = defaultdict(float)
        by_path: dict[Hashable, list[float]] = defaultdict(list)
        by_z: dict[Hashable, list[float]] = defaultdict(list)
        for o in outcomes:
            p_z[o.grid] += o.prob
            p_path[o.path] += o.prob
            by_path[o.path].append(o.prob)
            by_z[o.grid].append(o.prob)
        h_zx_terms.append(px * _entropy_of(p_z))
        h_path_terms.append(px * _entropy_of(p_path))
        h_exec_terms.append(px * _grouped_conditional_entropy(p_path, by_path))
        h_resid_terms.append(px * _grouped_conditional_entropy(p_z, by_z))
        for grid, p in p_z.items():
            marginal_z[grid] += px * p

    h_z = _entropy_of(marginal_z)
    h_z_given_x = math.fsum(h_zx_terms)
    h_path = math.fsum(h_path_terms)
    h_exec = math.fsum(h_exec_terms)
    h_residual = math.fsum(h_resid_terms)
    i_xz = h_z - h_z_given_x
    i_zy = h_z
    return EntropyReport(
        h_z=h_z,
        h_z_given_x=h_z_given_x,
        h_path=h_path,
        h_exec=h_exec,
        h_residual=h_residual,
        i_xz=i_xz,
        i_zy=i_zy,
        beta=beta,
        ib_objective=i_xz - beta * i_zy,
    )


def _grouped_conditional_entropy(
    group_marginal: dict[Hashable, float], groups: dict[Hashable, list[float]]
) -> float:
    """H(V | G) where each group key G holds the joint masses of its V values."""
    terms = []
    for key, masses in groups.items():
        total = group_marginal[key]
        if total <= 0.0:
            continue
        h = -math.fsum(
            (m / total) * math.log2(m / total) for m in masses if m > 0.0
        )
        terms.append(total * h)
    return math.fsum(terms)


def mim_path_entropy(spec: GeneratorSpec) -> float:
    """Closed-form path entropy of uniform random unmasking, in bits.

    With m_t positions still masked at step t and k_t of them revealed, the
    unmask sequence is uniform over prod_t C(m_t, k_t) outcomes.
    """
    if spec.strategy is not Strategy.MIM:
        raise ValueError("mim_path_entropy requires a MIM spec")
    if spec.mim_selection != "uniform":
        raise ValueError(
            "closed form only covers uniform selection; use decompose instead"
        )
    remaining = spec.n_tokens
    total = 0.0
    for count in spec.reveal_counts():
        total += math.log2(math.comb(remaining, count))
        remaining -= count
    return total


def diffusion_path_entropy(spec: GeneratorSpec, x: Condition) -> float:
    """Closed-form trajectory entropy of the unintervened diffusion chain.

    Sums the initial-state entropy and the per-step conditional entropies,
    accumulated per token position. Matches the decomposition's path entropy
    whenever the instance is enumerable.
    """
    if spec.strategy is not Strategy.DIFF:
        raise ValueError("diffusion_path_entropy requires a DIFF spec")
    prior = np.asarray(spec.diff_prior, dtype=np.float64)
    table = np.asarray(spec.diff_transition[x], dtype=np.float64)
    per_position = shannon(prior)
    state = prior
    for _ in range(spec.steps - 1):
        step_h = math.fsum(
            float(state[j]) * shannon(table[j])
            for j in range(state.size)
            if state[j] > 0.0
        )
        per_position += step_h
        state = state @ table
    return spec.n_tokens * per_position


class Estimator(str, enum.Enum):
    PLUG_IN = "plug_in"
    MILLER_MADOW = "miller_madow"


def mc_estimate(
    sampler: Callable[[np.random.Generator], Hashable],
    n: int,
    estimator: Estimator | str = Estimator.PLUG_IN,
    seed: int = 0,
    n_bootstrap: int = 200,
) -> tuple[float, float]:
    """Monte-Carlo entropy estimate with a bootstrap standard error.

    Draws ``n`` samples from ``sampler`` on a seeded generator, applies the
    plug-in estimator (optionally with the Miller-Madow correction
    (K_hat - 1) / (2 n ln 2)), and bootstraps the standard error over
    ``n_bootstrap`` multinomial resamples.
    """
    estimator = Estimator(estimator)
    if n < 2:
        raise ValueError("need at least 2 samples")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xE57)))
    counts: dict[Hashable, int] = defaultdict(int)
    for _ in range(n):
        counts[sampler(rng)] += 1

    def estimate(count_values: np.ndarray) -> float:
        p = count_values[count_values > 0] / count_values.sum()
        h = -math.fsum(pi * math.log2(pi) for pi in p)
        if estimator is Estimator.MILLER_MADOW:
            h += (p.size - 1) / (2.0 * n * math.log(2.0))
        return h

    observed = np.asarray(list(counts.values()), dtype=np.int64)
    h_hat = estimate(observed)
    p_hat = observed / n
    boot = np.empty(n_bootstrap)
    for b in range(n_bootstrap):
        boot[b] = estimate(rng.multinomial(n, p_hat))
    stderr = float(np.std(boot, ddof=1)) if n_bootstrap > 1 else 0.0
    return h_hat, stderr


# --- Identity audit over randomized instances ---------------------------


@dataclass(frozen=True)
class AuditRecord:
    label: str
    strategy: str
    identity_residual: float
    h_z_given_x: float
    h_path: float
    h_exec: float
    h_residual: float

    def to_json_dict(self) -> dict:
        return {
            "label": self.label,
            "strategy": self.strategy,
            "identity_residual": self.identity_residual,
            "h_z_given_x": self.h_z_given_x,
            "h_path": self.h_path,
            "h_exec": self.h_exec,
            "h_residual": self.h_residual,
        }


def _random_rows(rng: np.random.Generator, shape: tuple[int, ...], sparse: bool) -> np.ndarray:
    alpha = float(rng.choice([0.5, 1.0, 3.0]))
    rows = rng.dirichlet([alpha] * shape[-1], size=shape[:-1])
    if sparse and shape[-1] > 2:
        # Zero one entry per row, keeping rows proper distributions.
        drop = rng.integers(0, shape[-1], size=shape[:-1])
        idx = np.indices(shape[:-1])
        rows[(*idx, drop)] = 0.0
        rows = rows / rows.sum(axis=-1, keepdims=True)
    return rows.reshape(shape)


def _random_composition(rng: np.random.Generator, total: int, parts: int) -> tuple[int, ...]:
    """Random positive integers of given count summing to ``total``."""
    cuts = sorted(rng.choice(range(1, total), size=parts - 1, replace=False)) if parts > 1 else []
    bounds = [0, *cuts, total]
    return tuple(bounds[i + 1] - bounds[i] for i in range(parts))


def random_enumerable_world(
    rng: np.random.Generator,
    strategy: Strategy | None = None,
    allow_sparse: bool = True,
) -> ToyWorld:
    """A small random instance whose outcome space is exactly enumerable.

    Code count, token count, and step count stay within desk scale (K <= 8,
    N <= 4, T <= 4); diffusion combinations are capped so the trajectory
    cross product stays well under the default enumeration bound.
    """
    from .codebook import build_quantizer
    from .generation import LengthTag

    strategy = strategy or Strategy(rng.choice([s.value for s in Strategy]))
    tags = list(LengthTag)
    n_conditions = int(rng.integers(1, 3))
    conditions = tuple(
        Condition(0, f, tags[f % 3]) for f in range(n_conditions)
    )
    shape = [(1, 1), (1, 2), (1, 3), (2, 2)][int(rng.integers(0, 4))]
    n = shape[0] * shape[1]
    sparse = allow_sparse and bool(rng.integers(0, 2))

    if strategy is Strategy.AR:
        k = int(rng.integers(2, 9))
        cb = build_quantizer("fsq", levels=[k])
        window = int(rng.integers(0, 2))
        spec = GeneratorSpec(
            strategy=Strategy.AR,
            grid_shape=shape,
            codebook=cb,
            context_window=window,
            ar_initial={x: _random_rows(rng, (k,), sparse) for x in conditions},
            ar_transition=(
                {x: _random_rows(rng, (k, k), sparse) for x in conditions}
                if window == 1
                else None
            ),
        )
    elif strategy is Strategy.MIM:
        k = int(rng.integers(2, 9))
        cb = build_quantizer("fsq", levels=[k])
        steps = int(rng.integers(1, min(n, 4) + 1))
        counts = _random_composition(rng, n, steps)
        use_affinity = bool(rng.integers(0, 2))
        use_sharp = bool(rng.integers(0, 2))
        selection = "confidence" if rng.integers(0, 4) == 0 else "uniform"
        spec = GeneratorSpec(
            strategy=Strategy.MIM,
            grid_shape=shape,
            codebook=cb,
            steps=steps,
            unmask_counts=counts,
            mim_base={x: _random_rows(rng, (n, k), sparse) for x in conditions},
            mim_affinity=(
                rng.uniform(0.25, 4.0, size=(k, k)) if use_affinity else None
            ),
            mim_sharpening=(
                tuple(float(b) for b in rng.uniform(0.5, 3.0, size=steps))
                if use_sharp
                else None
            ),
            mim_selection=selection,
        )
    else:
        # Keep K^(N*T) modest so the full trajectory product enumerates fast.
        combos = [
            (k, t)
            for k in range(2, 9)
            for t in range(1, 5)
            if k ** (n * t) <= 60_000
        ]
        k, steps = combos[int(rng.integers(0, len(combos)))]
        cb = build_quantizer("fsq", levels=[k])
        spec = GeneratorSpec(
            strategy=Strategy.DIFF,
            grid_shape=shape,
            codebook=cb,
            steps=steps,
            diff_prior=_random_rows(rng, (k,), sparse),
            diff_transition={x: _random_rows(rng, (k, k), sparse) for x in conditions},
        )
    return ToyWorld(conditions=conditions, spec=spec)


def _random_policy(rng: np.random.Generator, spec: GeneratorSpec) -> SamplingPolicy:
    from .generation import Argmax, Staged, StageWindow

    roll = int(rng.integers(0, 4))
    if roll == 0:
        return Argmax()
    if roll == 1 and spec.sampling_steps() >= 3:
        return Staged(stage=list(StageWindow)[int(rng.integers(0, 3))])
    return Stochastic(temperature=float(rng.choice([0.7, 1.0, 1.5])))


def identity_audit(
    n_specs: int = 100,
    seed: int = 0,
    bound: int = DEFAULT_ENUMERATION_BOUND,
) -> list[AuditRecord]:
    """Check the total-entropy identity on randomized enumerable instances.

    Cycles through the three strategies, drawing random tables, policies, and
    occasional codebook restrictions, and records the identity residual of
    each exact decomposition.
    """
    from .codebook import SubsetPolicy, UsageHistogram, restrict

    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xA0D17)))
    strategies = list(Strategy)
    records = []
    for i in range(n_specs):
        strategy = strategies[i % len(strategies)]
        # Restriction composes with random tables only when rows stay strictly
        # positive, otherwise an active set can end up with zero mass.
        use_subset = bool(rng.integers(0, 3) == 0)
        world = random_enumerable_world(rng, strategy, allow_sparse=not use_subset)
        subset = None
        if use_subset:
            k = world.spec.k
            usage = UsageHistogram(rng.integers(0, 50, size=k))
            ratio = float(rng.uniform(0.4, 1.0))
            policy_choice = list(SubsetPolicy)[int(rng.integers(0, 3))]
            subset = restrict(world.spec.codebook, usage, policy_choice, ratio, seed=i)
        policy = _random_policy(rng, world.spec)
        report = decompose(world, policy=policy, subset=subset, bound=bound)
        records.append(
            AuditRecord(
                label=f"spec-{i:03d}",
                strategy=strategy.value,
                identity_residual=report.identity_residual,
                h_z_given_x=report.h_z_given_x,
                h_path=report.h_path,
                h_exec=report.h_exec,
                h_residual=report.h_residual,
            )
        )
    return records
