"""Toy discrete-latent generators: autoregressive, masked iterative, and
discrete-diffusion strategies over small token grids, all expressed as exact
conditional categorical models so outcome distributions can be enumerated.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .codebook import Codebook, CodebookSubset, round_half_up

DEFAULT_ENUMERATION_BOUND = 10**6

SeedLike = int | tuple[int, ...]


class EnumerationBoundError(ValueError):
    """Raised when an instance has too many outcomes for exact analysis."""


class InconsistentSpecError(ValueError):
    """Raised when every active code has zero probability in some context."""


class Strategy(str, enum.Enum):
    AR = "ar"
    MIM = "mim"
    DIFF = "diff"


class LengthTag(str, enum.Enum):
    SHORT = "short"
    MEDIUM = "medium"
    LONG = "long"


@dataclass(frozen=True, order=True)
class Condition:
    """A prompt surrogate: semantic class, surface form, and a length tag.

    Conditions with equal ``semantic_class`` are paraphrases of each other.
    """

    semantic_class: int
    surface_form: int
    length_tag: LengthTag


@dataclass(frozen=True)
class TokenGrid:
    """A grid of code indices, stored row-major."""

    shape: tuple[int, int]
    tokens: tuple[int, ...]

    def __post_init__(self) -> None:
        h, w = self.shape
        if h < 1 or w < 1:
            raise ValueError(f"grid shape must be positive, got {self.shape}")
        if len(self.tokens) != h * w:
            raise ValueError(
                f"{len(self.tokens)} tokens for shape {self.shape}"
            )

    @property
    def n(self) -> int:
        return len(self.tokens)

    def __hash__(self) -> int:
        # Grids key exact joint distributions with millions of lookups;
        # caching the hash keeps enumeration-based analysis fast.
        cached = self.__dict__.get("_hash")
        if cached is None:
            cached = hash((self.shape, self.tokens))
            object.__setattr__(self, "_hash", cached)
        return cached


# Generation paths. Each variant is hashable so exact joint distributions can
# key on it directly.


@dataclass(frozen=True)
class ArPath:
    """Fixed raster generation order."""

    order: tuple[int, ...]


@dataclass(frozen=True)
class MimPath:
    """The masked-position sets M_1 ... M_T, M_1 covering the whole grid."""

    mask_sets: tuple[frozenset[int], ...]

    def reveal_groups(self) -> tuple[tuple[int, ...], ...]:
        """Positions revealed at each step, sorted within step."""
        groups = []
        for t, masked in enumerate(self.mask_sets):
            nxt = self.mask_sets[t + 1] if t + 1 < len(self.mask_sets) else frozenset()
            groups.append(tuple(sorted(masked - nxt)))
        return tuple(groups)


@dataclass(frozen=True)
class DiffPath:
    """Denoising trajectory z_T, ..., z_1; the last state is the output."""

    trajectory: tuple[TokenGrid, ...]

    def __hash__(self) -> int:
        cached = self.__dict__.get("_hash")
        if cached is None:
            cached = hash(self.trajectory)
            object.__setattr__(self, "_hash", cached)
        return cached


GenerationPath = ArPath | MimPath | DiffPath


# Sampling policies.


class StageWindow(str, enum.Enum):
    EARLY = "early"
    MIDDLE = "middle"
    LATE = "late"


@dataclass(frozen=True)
class Stochastic:
    temperature: float = 1.0

    def __post_init__(self) -> None:
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")


@dataclass(frozen=True)
class Argmax:
    pass


@dataclass(frozen=True)
class Staged:
    """Argmax inside one contiguous third of the step range, stochastic
    elsewhere."""

    stage: StageWindow
    temperature: float = 1.0


SamplingPolicy = Stochastic | Argmax | Staged


def stage_windows(total_steps: int) -> dict[StageWindow, range]:
    """Split steps 0..total_steps-1 into three contiguous blocks.

    Block sizes are as balanced as possible with the remainder handed to the
    earlier blocks.
    """
    if total_steps < 3:
        raise ValueError(f"staging needs at least 3 steps, got {total_steps}")
    base, rem = divmod(total_steps, 3)
    sizes = [base + (1 if i < rem else 0) for i in range(3)]
    starts = [0, sizes[0], sizes[0] + sizes[1]]
    return {
        StageWindow.EARLY: range(starts[0], starts[0] + sizes[0]),
        StageWindow.MIDDLE: range(starts[1], starts[1] + sizes[1]),
        StageWindow.LATE: range(starts[2], starts[2] + sizes[2]),
    }


def policy_mode(policy: SamplingPolicy, step: int, total_steps: int) -> float | None:
    """Temperature for a stochastic draw at ``step``, or None for argmax."""
    if isinstance(policy, Argmax):
        return None
    if isinstance(policy, Stochastic):
        return policy.temperature
    windows = stage_windows(total_steps)
    if step in windows[policy.stage]:
        return None
    return policy.temperature


# Mask schedules for the masked iterative strategy.


def gamma_cosine(u: float) -> float:
    return math.cos(math.pi / 2.0 * u)


def gamma_linear(u: float) -> float:
    return 1.0 - u


SCHEDULES = {"cosine": gamma_cosine, "linear": gamma_linear}


def schedule_counts(n_tokens: int, steps: int, kind: str = "cosine") -> tuple[int, ...]:
    """Per-step reveal counts from a masking schedule.

    Counts come from differencing rounded cumulative reveal targets, so they
    always sum to ``n_tokens``. Small (n_tokens, steps) pairs can produce a
    zero count; generators reject those.
    """
    gamma = SCHEDULES[kind]
    targets = [round_half_up(n_tokens * (1.0 - gamma(t / steps))) for t in range(steps + 1)]
    targets[-1] = n_tokens
    return tuple(targets[t + 1] - targets[t] for t in range(steps))


@dataclass(eq=False)
class GeneratorSpec:
    """Conditional categorical tables defining one generation strategy.

    AR uses an initial row p(z_0|x) and, with ``context_window=1``, a
    transition table p(z_i|z_{i-1},x); with ``context_window=0`` every token
    draws from the initial row. MIM uses per-position base rows modulated by
    a pairwise affinity over already revealed grid neighbors and an optional
    per-step sharpening exponent. DIFF uses a per-token prior over the initial
    state and a one-step transition table applied independently per position.
    """

    strategy: Strategy
    grid_shape: tuple[int, int]
    codebook: Codebook
    # AR
    context_window: int = 1
    ar_initial: dict[Condition, np.ndarray] | None = None
    ar_transition: dict[Condition, np.ndarray] | None = None
    # MIM
    steps: int = 1
    schedule: str = "cosine"
    unmask_counts: tuple[int, ...] | None = None
    mim_base: dict[Condition, np.ndarray] | None = None
    mim_affinity: np.ndarray | None = None
    mim_sharpening: tuple[float, ...] | None = None
    mim_selection: str = "uniform"  # or "confidence"
    # DIFF
    diff_prior: np.ndarray | None = None
    diff_transition: dict[Condition, np.ndarray] | None = None
    name: str = ""

    def __post_init__(self) -> None:
        h, w = self.grid_shape
        if h < 1 or w < 1:
            raise ValueError("grid_shape must be positive")
        k = self.codebook.size
        n = self.n_tokens
        if self.strategy is Strategy.AR:
            if self.context_window not in (0, 1):
                raise ValueError("context_window must be 0 or 1")
            if not self.ar_initial:
                raise ValueError("AR spec requires ar_initial tables")
            for x, row in self.ar_initial.items():
                _check_dist(row, (k,), f"ar_initial[{x}]")
            if self.context_window == 1:
                if not self.ar_transition:
                    raise ValueError("AR order-1 spec requires ar_transition tables")
                for x, table in self.ar_transition.items():
                    _check_dist(table, (k, k), f"ar_transition[{x}]")
        elif self.strategy is Strategy.MIM:
            if not self.mim_base:
                raise ValueError("MIM spec requires mim_base tables")
            for x, table in self.mim_base.items():
                _check_dist(table, (n, k), f"mim_base[{x}]")
            if self.mim_affinity is not None:
                aff = np.asarray(self.mim_affinity, dtype=np.float64)
                if aff.shape != (k, k) or np.any(aff <= 0):
                    raise ValueError("affinity must be a positive (K, K) matrix")
                self.mim_affinity = aff
            if self.mim_sharpening is not None:
                if len(self.mim_sharpening) != self.steps:
                    raise ValueError("sharpening needs one exponent per step")
                if any(b <= 0 for b in self.mim_sharpening):
                    raise ValueError("sharpening exponents must be positive")
            if self.mim_selection not in ("uniform", "confidence"):
                raise ValueError(f"unknown selection mode {self.mim_selection!r}")
            self.reveal_counts()
        elif self.strategy is Strategy.DIFF:
            if self.steps < 1:
                raise ValueError("DIFF spec needs at least one state")
            if self.diff_prior is None or self.diff_transition is None:
                raise ValueError("DIFF spec requires diff_prior and diff_transition")
            _check_dist(self.diff_prior, (k,), "diff_prior")
            for x, table in self.diff_transition.items():
                _check_dist(table, (k, k), f"diff_transition[{x}]")

    @property
    def n_tokens(self) -> int:
        return self.grid_shape[0] * self.grid_shape[1]

    @property
    def k(self) -> int:
        return self.codebook.size

    def conditions(self) -> tuple[Condition, ...]:
        tables = self.ar_initial or self.mim_base or self.diff_transition or {}
        return tuple(sorted(tables.keys()))

    def reveal_counts(self) -> tuple[int, ...]:
        """Validated per-step unmask counts for the MIM strategy."""
        counts = self.unmask_counts or schedule_counts(
            self.n_tokens, self.steps, self.schedule
        )
        if len(counts) != self.steps:
            raise ValueError(f"{len(counts)} reveal counts for {self.steps} steps")
        if any(c < 1 for c in counts):
            raise ValueError(
                f"schedule produced a non-positive reveal count: {counts}"
            )
        if sum(counts) != self.n_tokens:
            raise ValueError(f"reveal counts {counts} do not sum to {self.n_tokens}")
        return tuple(counts)

    def sampling_steps(self) -> int:
        """Number of policy-controlled sampling events per generation."""
        if self.strategy is Strategy.AR:
            return self.n_tokens
        if self.strategy is Strategy.MIM:
            return self.steps
        return self.steps - 1

    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        """4-adjacency over grid positions, row-major indexing."""
        h, w = self.grid_shape
        out = []
        for i in range(h * w):
            r, c = divmod(i, w)
            adj = []
            if r > 0:
                adj.append(i - w)
            if r < h - 1:
                adj.append(i + w)
            if c > 0:
                adj.append(i - 1)
            if c < w - 1:
                adj.append(i + 1)
            out.append(tuple(adj))
        return tuple(out)


def _check_dist(arr: np.ndarray, shape: tuple[int, ...], label: str) -> None:
    a = np.asarray(arr, dtype=np.float64)
    if a.shape != shape:
        raise ValueError(f"{label} has shape {a.shape}, expected {shape}")
    if np.any(a < 0):
        raise ValueError(f"{label} has negative probabilities")
    sums = a.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > 1e-9):
        raise ValueError(f"{label} rows must sum to 1 within 1e-9")


@dataclass(eq=False)
class ToyWorld:
    """A set of conditions plus the generator they are evaluated under.

    ``base_conditions`` names the designated original prompt of each semantic
    class (defaults to the first listed condition per class). Paraphrase
    probes draw the remaining surface forms of the same class.
    """

    conditions: tuple[Condition, ...]
    spec: GeneratorSpec
    base_conditions: tuple[Condition, ...] = ()

    def __post_init__(self) -> None:
        if not self.conditions:
            raise ValueError("world needs at least one condition")
        if len(set(self.conditions)) != len(self.conditions):
            raise ValueError("conditions must be distinct")
        missing = set(self.conditions) - set(self.spec.conditions())
        if missing:
            raise ValueError(f"spec has no tables for conditions {sorted(missing)}")
        if not self.base_conditions:
            seen: dict[int, Condition] = {}
            for c in self.conditions:
                seen.setdefault(c.semantic_class, c)
            self.base_conditions = tuple(seen.values())

    @property
    def patch_size(self) -> int:
        return math.isqrt(self.spec.codebook.dim)

    def semantic_classes(self) -> tuple[int, ...]:
        return tuple(sorted({c.semantic_class for c in self.conditions}))

    def class_members(self, semantic_class: int) -> tuple[Condition, ...]:
        return tuple(
            c for c in self.conditions if c.semantic_class == semantic_class
        )


# Seeded stream derivation. Every stochastic draw belongs to one of two
# substreams: "init" covers structural randomness (mask selection, diffusion
# initialization), "tokens" covers token sampling. Streams are PCG64
# generators keyed by SeedSequence((*seed material, stream id)), which numpy
# guarantees to be platform-stable.

_STREAM_INIT = 0
_STREAM_TOKENS = 1


def _as_seed_tuple(seed: SeedLike) -> tuple[int, ...]:
    if isinstance(seed, (int, np.integer)):
        return (int(seed),)
    return tuple(int(s) for s in seed)


def derive_rng(seed: SeedLike, stream: int) -> np.random.Generator:
    material = _as_seed_tuple(seed) + (stream,)
    return np.random.default_rng(np.random.SeedSequence(material))


def _active_mask(subset: CodebookSubset | None, k: int) -> np.ndarray:
    if subset is None:
        return np.ones(k, dtype=bool)
    return subset.mask()


def _masked_dist(
    row: np.ndarray, mask: np.ndarray, temperature: float | None
) -> np.ndarray:
    """Normalized distribution over active codes; argmax gives a one-hot."""
    w = np.where(mask, row, 0.0)
    total = w.sum()
    if total <= 0.0:
        raise InconsistentSpecError(
            "all active codes have zero probability in this context"
        )
    if temperature is None:
        out = np.zeros_like(w)
        out[int(np.argmax(w))] = 1.0
        return out
    if temperature != 1.0:
        w = np.where(mask, row ** (1.0 / temperature), 0.0)
        total = w.sum()
    return w / total


def _draw(dist: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw consuming exactly one uniform.

    Never returns a zero-mass index: if the uniform lands at or past the
    float total of the CDF, the draw falls back to the last supported code.
    """
    cdf = np.cumsum(dist)
    u = rng.random()
    idx = int(np.searchsorted(cdf, u, side="right"))
    if idx >= dist.size or dist[idx] == 0.0:
        idx = int(np.flatnonzero(dist)[-1])
    return idx


def _draw_row(
    row: np.ndarray,
    mask: np.ndarray,
    temperature: float | None,
    rng: np.random.Generator,
) -> int:
    dist = _masked_dist(row, mask, temperature)
    if temperature is None:
        return int(np.argmax(dist))
    return _draw(dist, rng)


# --- AR ---------------------------------------------------------------


def _ar_row(spec: GeneratorSpec, x: Condition, pos: int, prev: int | None) -> np.ndarray:
    if pos == 0 or spec.context_window == 0:
        return spec.ar_initial[x]
    return spec.ar_transition[x][prev]


def ar_generate(
    spec: GeneratorSpec,
    x: Condition,
    policy: SamplingPolicy = Stochastic(),
    subset: CodebookSubset | None = None,
    seed: SeedLike = 0,
) -> tuple[TokenGrid, ArPath]:
    """Sample a grid token by token in fixed raster order.

    The path carries no randomness; under Argmax the output is a pure
    function of the condition and the active code set.
    """
    if spec.strategy is not Strategy.AR:
        raise ValueError("ar_generate requires an AR spec")
    n = spec.n_tokens
    mask = _active_mask(subset, spec.k)
    rng_tok = derive_rng(seed, _STREAM_TOKENS)
    tokens: list[int] = []
    for i in range(n):
        row = _ar_row(spec, x, i, tokens[-1] if tokens else None)
        mode = policy_mode(policy, i, n)
        tokens.append(_draw_row(row, mask, mode, rng_tok))
    return TokenGrid(spec.grid_shape, tuple(tokens)), ArPath(tuple(range(n)))


# --- MIM --------------------------------------------------------------


def _mim_row(
    spec: GeneratorSpec,
    x: Condition,
    pos: int,
    revealed: dict[int, int],
    neighbors: tuple[tuple[int, ...], ...],
    step: int,
) -> np.ndarray:
    row = np.array(spec.mim_base[x][pos], dtype=np.float64)
    if spec.mim_affinity is not None:
        for j in neighbors[pos]:
            if j in revealed:
                row = row * spec.mim_affinity[revealed[j]]
    if spec.mim_sharpening is not None:
        beta = spec.mim_sharpening[step]
        if beta != 1.0:
            row = row**beta
    total = row.sum()
    if total <= 0:
        raise InconsistentSpecError("MIM conditional row is identically zero")
    return row / total


def _confidence_selection(
    spec: GeneratorSpec,
    x: Condition,
    masked: list[int],
    count: int,
    revealed: dict[int, int],
    neighbors: tuple[tuple[int, ...], ...],
    step: int,
    active: np.ndarray,
) -> list[int]:
    # Greedy: reveal the masked positions whose current conditional rows have
    # the largest maximum active probability; ties go to the lower position.
    scored = []
    for pos in masked:
        row = _mim_row(spec, x, pos, revealed, neighbors, step)
        w = np.where(active, row, 0.0)
        total = w.sum()
        score = float(w.max() / total) if total > 0 else 0.0
        scored.append((-score, pos))
    return [pos for _, pos in sorted(scored)[:count]]


def mim_generate(
    spec: GeneratorSpec,
    x: Condition,
    policy: SamplingPolicy = Stochastic(),
    subset: CodebookSubset | None = None,
    seed: SeedLike = 0,
) -> tuple[TokenGrid, MimPath]:
    """Sample a grid by iterative unmasking.

    At each step a schedule-sized subset of still-masked positions is chosen
    (uniformly at random by default) and those tokens are sampled in parallel
    conditioned on previously revealed tokens. Argmax affects only token
    values; the unmask sequence stays random, so path-driven diversity
    survives deterministic decoding.
    """
    if spec.strategy is not Strategy.MIM:
        raise ValueError("mim_generate requires a MIM spec")
    counts = spec.reveal_counts()
    n = spec.n_tokens
    mask = _active_mask(subset, spec.k)
    neighbors = spec.neighbors()
    rng_init = derive_rng(seed, _STREAM_INIT)
    rng_tok = derive_rng(seed, _STREAM_TOKENS)
    masked = list(range(n))
    revealed: dict[int, int] = {}
    mask_sets = []
    for step, count in enumerate(counts):
        mask_sets.append(frozenset(masked))
        if spec.mim_selection == "uniform":
            chosen = sorted(
                int(i) for i in rng_init.choice(masked, size=count, replace=False)
            )
        else:
            chosen = _confidence_selection(
                spec, x, masked, count, revealed, neighbors, step, mask
            )
        mode = policy_mode(policy, step, spec.steps)
        step_values = {}
        for pos in chosen:
            row = _mim_row(spec, x, pos, revealed, neighbors, step)
            step_values[pos] = _draw_row(row, mask, mode, rng_tok)
        revealed.update(step_values)
        masked = [i for i in masked if i not in step_values]
    tokens = tuple(revealed[i] for i in range(n))
    return TokenGrid(spec.grid_shape, tokens), MimPath(tuple(mask_sets))


# --- DIFF -------------------------------------------------------------


def diff_generate(
    spec: GeneratorSpec,
    x: Condition,
    policy: SamplingPolicy = Stochastic(),
    subset: CodebookSubset | None = None,
    seed: SeedLike = 0,
) -> tuple[TokenGrid, DiffPath]:
    """Sample a denoising trajectory of grids and return the final state.

    The initial state draws per-token from the prior and is never subject to
    Argmax; only the per-step transition draws follow the sampling policy.
    Codebook restriction renormalizes both the prior and transition rows.
    """
    if spec.strategy is not Strategy.DIFF:
        raise ValueError("diff_generate requires a DIFF spec")
    n = spec.n_tokens
    mask = _active_mask(subset, spec.k)
    rng_init = derive_rng(seed, _STREAM_INIT)
    rng_tok = derive_rng(seed, _STREAM_TOKENS)
    prior_dist = _masked_dist(spec.diff_prior, mask, 1.0)
    state = [_draw(prior_dist, rng_init) for _ in range(n)]
    trajectory = [TokenGrid(spec.grid_shape, tuple(state))]
    table = spec.diff_transition[x]
    n_trans = spec.steps - 1
    for step in range(n_trans):
        mode = policy_mode(policy, step, n_trans)
        state = [_draw_row(table[tok], mask, mode, rng_tok) for tok in state]
        trajectory.append(TokenGrid(spec.grid_shape, tuple(state)))
    return trajectory[-1], DiffPath(tuple(trajectory))


_GENERATORS = {
    Strategy.AR: ar_generate,
    Strategy.MIM: mim_generate,
    Strategy.DIFF: diff_generate,
}


def sample(
    spec: GeneratorSpec,
    x: Condition,
    policy: SamplingPolicy = Stochastic(),
    subset: CodebookSubset | None = None,
    seed: SeedLike = 0,
) -> tuple[TokenGrid, GenerationPath]:
    return _GENERATORS[spec.strategy](spec, x, policy, subset, seed)


# --- Decoder ----------------------------------------------------------


def decode(z: TokenGrid, cb: Codebook) -> np.ndarray:
    """Deterministic image from a token grid.

    Each code vector reshapes to a square patch (its dimension must be a
    perfect square, or 1 for scalar shading) and is affinely mapped from the
    codebook's coordinate range onto [0, 1]. Distinct grids give distinct
    images because entries are pairwise distinct and the map is monotone.
    """
    d = cb.dim
    p = math.isqrt(d)
    if p * p != d:
        raise ValueError(f"codebook dim {d} is not a perfect square")
    lo, hi = cb.value_range()
    h, w = z.shape
    img = np.empty((h * p, w * p), dtype=np.float64)
    for i, tok in enumerate(z.tokens):
        patch = cb.entries[tok].reshape(p, p)
        if hi > lo:
            patch = (patch - lo) / (hi - lo)
        else:
            patch = np.full((p, p), 0.5)
        r, c = divmod(i, w)
        img[r * p : (r + 1) * p, c * p : (c + 1) * p] = patch
    return img


# --- Exact enumeration ------------------------------------------------


@dataclass(frozen=True)
class Outcome:
    path: GenerationPath
    grid: TokenGrid
    prob: float


def _token_assignments(
    dists: list[np.ndarray],
) -> Iterator[tuple[tuple[int, ...], float]]:
    """All joint values of independent categorical draws with probability."""
    supports = [
        [(k, float(d[k])) for k in range(d.size) if d[k] > 0.0] for d in dists
    ]
    for combo in itertools.product(*supports):
        prob = math.prod(p for _, p in combo)
        yield tuple(k for k, _ in combo), prob


def enumerate_outcomes(
    spec: GeneratorSpec,
    x: Condition,
    policy: SamplingPolicy = Stochastic(),
    subset: CodebookSubset | None = None,
    bound: int = DEFAULT_ENUMERATION_BOUND,
) -> list[Outcome]:
    """Exact joint distribution over (path, grid) pairs.

    Returns every reachable outcome with its probability; probabilities sum
    to one up to float rounding. Raises EnumerationBoundError once the number
    of reachable outcomes exceeds ``bound``.
    """
    if spec.strategy is Strategy.AR:
        outcomes = _enumerate_ar(spec, x, policy, subset, bound)
    elif spec.strategy is Strategy.MIM:
        outcomes = _enumerate_mim(spec, x, policy, subset, bound)
    else:
        outcomes = _enumerate_diff(spec, x, policy, subset, bound)
    return outcomes


def _enumerate_ar(
    spec: GeneratorSpec,
    x: Condition,
    policy: SamplingPolicy,
    subset: CodebookSubset | None,
    bound: int,
) -> list[Outcome]:
    n = spec.n_tokens
    mask = _active_mask(subset, spec.k)
    partial: list[tuple[tuple[int, ...], float]] = [((), 1.0)]
    for i in range(n):
        mode = policy_mode(policy, i, n)
        grown: list[tuple[tuple[int, ...], float]] = []
        for prefix, prob in partial:
            row = _ar_row(spec, x, i, prefix[-1] if prefix else None)
            dist = _masked_dist(row, mask, mode)
            for k in range(dist.size):
                if dist[k] > 0.0:
                    grown.append((prefix + (k,), prob * float(dist[k])))
                    if len(grown) > bound:
                        raise EnumerationBoundError(
                            f"AR enumeration exceeds bound {bound}"
                        )
        partial = grown
    path = ArPath(tuple(range(n)))
    return [
        Outcome(path, TokenGrid(spec.grid_shape, toks), p) for toks, p in partial
    ]


def _enumerate_mim(
    spec: GeneratorSpec,
    x: Condition,
    policy: SamplingPolicy,
    subset: CodebookSubset | None,
    bound: int,
) -> list[Outcome]:
    counts = spec.reveal_counts()
    n = spec.n_tokens
    mask = _active_mask(subset, spec.k)
    neighbors = spec.neighbors()
    out: list[Outcome] = []

    def recurse(
        step: int,
        masked: tuple[int, ...],
        revealed: dict[int, int],
        mask_sets: tuple[frozenset[int], ...],
        prob: float,
    ) -> None:
        if step == spec.steps:
            tokens = tuple(revealed[i] for i in range(n))
            out.append(Outcome(MimPath(mask_sets), TokenGrid(spec.grid_shape, tokens), prob))
            if len(out) > bound:
                raise EnumerationBoundError(f"MIM enumeration exceeds bound {bound}")
            return
        count = counts[step]
        mode = policy_mode(policy, step, spec.steps)
        if spec.mim_selection == "uniform":
            choices = [
                (combo, 1.0 / math.comb(len(masked), count))
                for combo in itertools.combinations(masked, count)
            ]
        else:
            chosen = _confidence_selection(
                spec, x, list(masked), count, revealed, neighbors, step, mask
            )
            choices = [(tuple(sorted(chosen)), 1.0)]
        for combo, sel_prob in choices:
            dists = [
                _masked_dist(
                    _mim_row(spec, x, pos, revealed, neighbors, step), mask, mode
                )
                for pos in combo
            ]
            for values, tok_prob in _token_assignments(dists):
                nxt = dict(revealed)
                nxt.update(zip(combo, values))
                recurse(
                    step + 1,
                    tuple(i for i in masked if i not in combo),
                    nxt,
                    mask_sets + (frozenset(masked),),
                    prob * sel_prob * tok_prob,
                )

    recurse(0, tuple(range(n)), {}, (), 1.0)
    return out


def _enumerate_diff(
    spec: GeneratorSpec,
    x: Condition,
    policy: SamplingPolicy,
    subset: CodebookSubset | None,
    bound: int,
) -> list[Outcome]:
    n = spec.n_tokens
    mask = _active_mask(subset, spec.k)
    prior = _masked_dist(spec.diff_prior, mask, 1.0)
    table = spec.diff_transition[x]
    n_trans = spec.steps - 1

    # Positions evolve independently, so enumerate one position's trajectory
    # distribution and take the cross product over positions.
    chains: list[tuple[tuple[int, ...], float]] = [
        ((k,), float(prior[k])) for k in range(spec.k) if prior[k] > 0.0
    ]
    for step in range(n_trans):
        mode = policy_mode(policy, step, n_trans)
        grown = []
        for traj, prob in chains:
            dist = _masked_dist(table[traj[-1]], mask, mode)
            for k in range(dist.size):
                if dist[k] > 0.0:
                    grown.append((traj + (k,), prob * float(dist[k])))
        chains = grown
    total = 1
    for _ in range(n):
        total *= len(chains)
        if total > bound:
            raise EnumerationBoundError(f"DIFF enumeration exceeds bound {bound}")
    out: list[Outcome] = []
    for combo in itertools.product(chains, repeat=n):
        prob = math.prod(p for _, p in combo)
        states = tuple(
            TokenGrid(spec.grid_shape, tuple(combo[i][0][t] for i in range(n)))
            for t in range(spec.steps)
        )
        out.append(Outcome(DiffPath(states), states[-1], prob))
    return out
