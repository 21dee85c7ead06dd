"""Pairwise diversity metrics over token grids and decoded images, plus an
oracle log-likelihood quality proxy scored against the unintervened spec."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .codebook import Codebook
from .generation import (
    Condition,
    GeneratorSpec,
    Strategy,
    TokenGrid,
    ToyWorld,
    decode,
)

TOKEN_HAMMING = "token_hamming"
PIXEL_COSINE = "pixel_cosine"
ONE_MINUS_SSIM = "one_minus_ssim"
METRIC_NAMES = (TOKEN_HAMMING, PIXEL_COSINE, ONE_MINUS_SSIM)

SSIM_C1 = (0.01 * 1.0) ** 2
SSIM_C2 = (0.03 * 1.0) ** 2


def token_hamming(a: TokenGrid, b: TokenGrid) -> float:
    """Fraction of positions whose code indices differ."""
    if a.shape != b.shape:
        raise ValueError(f"grid shapes differ: {a.shape} vs {b.shape}")
    differing = sum(1 for ta, tb in zip(a.tokens, b.tokens) if ta != tb)
    return differing / a.n


def pixel_cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    """One minus the cosine similarity of flattened pixels.

    Pixel values are nonnegative, so the result lies in [0, 1]. Identical
    arrays return exactly 0.
    """
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    fa, fb = a.ravel(), b.ravel()
    na, nb = float(np.linalg.norm(fa)), float(np.linalg.norm(fb))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine distance is undefined for an all-zero image")
    if np.array_equal(fa, fb):
        return 0.0
    d = 1.0 - float(np.dot(fa, fb)) / (na * nb)
    return min(max(d, 0.0), 1.0)


def _ssim_terms(
    mu_a: np.ndarray,
    mu_b: np.ndarray,
    var_a: np.ndarray,
    var_b: np.ndarray,
    cov: np.ndarray,
) -> np.ndarray:
    num = (2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return num / den


def ssim(a: np.ndarray, b: np.ndarray, window: int = 8) -> float:
    """Structural similarity index with dynamic range 1.

    Uses uniform 8x8 sliding windows at stride 1 averaged over valid
    positions, or global image statistics when either side is smaller than
    the window. Moments are population (biased) moments.
    """
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if min(a.shape) < window:
        mu_a, mu_b = a.mean(), b.mean()
        var_a = (a * a).mean() - mu_a * mu_a
        var_b = (b * b).mean() - mu_b * mu_b
        cov = (a * b).mean() - mu_a * mu_b
        return float(_ssim_terms(mu_a, mu_b, var_a, var_b, cov))
    from numpy.lib.stride_tricks import sliding_window_view

    wa = sliding_window_view(a, (window, window))
    wb = sliding_window_view(b, (window, window))
    mu_a = wa.mean(axis=(-1, -2))
    mu_b = wb.mean(axis=(-1, -2))
    var_a = (wa * wa).mean(axis=(-1, -2)) - mu_a * mu_a
    var_b = (wb * wb).mean(axis=(-1, -2)) - mu_b * mu_b
    cov = (wa * wb).mean(axis=(-1, -2)) - mu_a * mu_b
    return float(_ssim_terms(mu_a, mu_b, var_a, var_b, cov).mean())


def one_minus_ssim(a: np.ndarray, b: np.ndarray) -> float:
    return 1.0 - ssim(a, b)


@dataclass(frozen=True)
class PairwiseSummary:
    """Mean pairwise distance per prompt group and overall."""

    overall: float
    per_prompt: tuple[float, ...]
    pair_counts: tuple[int, ...]


def pairwise_diversity(
    samples_per_prompt: Sequence[Sequence],
    metric: Callable[[object, object], float],
) -> PairwiseSummary:
    """Average a pairwise metric over all unique pairs within each prompt,
    then take the unweighted mean across prompts."""
    per_prompt = []
    pair_counts = []
    for samples in samples_per_prompt:
        n = len(samples)
        if n < 2:
            raise ValueError("pairwise diversity needs at least 2 samples per prompt")
        values = [
            metric(samples[i], samples[j])
            for i in range(n)
            for j in range(i + 1, n)
        ]
        per_prompt.append(math.fsum(values) / len(values))
        pair_counts.append(n * (n - 1) // 2)
    overall = math.fsum(per_prompt) / len(per_prompt)
    return PairwiseSummary(overall, tuple(per_prompt), tuple(pair_counts))


@dataclass(frozen=True)
class DiversityReport:
    """All three diversity metrics over per-prompt sample groups.

    ``within_group`` is the secondary within-paraphrase-only column, present
    when the groups pool multiple conditions.
    """

    values: dict[str, float]
    per_prompt: dict[str, tuple[float, ...]]
    pair_counts: tuple[int, ...]
    within_group: dict[str, float] | None = None

    def to_json_dict(self) -> dict:
        out = {
            "values": dict(self.values),
            "per_prompt": {k: list(v) for k, v in self.per_prompt.items()},
            "pair_counts": list(self.pair_counts),
        }
        if self.within_group is not None:
            out["within_group"] = dict(self.within_group)
        return out

    def to_csv_rows(self) -> list[tuple[int, str, float]]:
        """Long-format rows (prompt index, metric, value)."""
        return [
            (prompt, metric, value)
            for metric in METRIC_NAMES
            for prompt, value in enumerate(self.per_prompt[metric])
        ]


def diversity_report(
    grid_groups: Sequence[Sequence[TokenGrid]],
    cb: Codebook,
    subgroup_labels: Sequence[Sequence[int]] | None = None,
) -> DiversityReport:
    """Token and pixel diversity of per-prompt grid groups.

    Images are decoded once per sample. When ``subgroup_labels`` marks which
    pooled condition produced each sample, a within-condition-only mean is
    reported alongside the pooled values.
    """
    image_groups = [[decode(g, cb) for g in group] for group in grid_groups]
    hamming = pairwise_diversity(grid_groups, token_hamming)
    cosine = pairwise_diversity(image_groups, pixel_cosine_distance)
    ssim_div = pairwise_diversity(image_groups, one_minus_ssim)
    within = None
    if subgroup_labels is not None:
        within = {}
        for name, groups, metric in (
            (TOKEN_HAMMING, grid_groups, token_hamming),
            (PIXEL_COSINE, image_groups, pixel_cosine_distance),
            (ONE_MINUS_SSIM, image_groups, one_minus_ssim),
        ):
            means = []
            for group, labels in zip(groups, subgroup_labels):
                buckets: dict[int, list] = {}
                for sample, label in zip(group, labels):
                    buckets.setdefault(label, []).append(sample)
                usable = [b for b in buckets.values() if len(b) >= 2]
                if usable:
                    means.append(pairwise_diversity(usable, metric).overall)
            within[name] = math.fsum(means) / len(means) if means else 0.0
    return DiversityReport(
        values={
            TOKEN_HAMMING: hamming.overall,
            PIXEL_COSINE: cosine.overall,
            ONE_MINUS_SSIM: ssim_div.overall,
        },
        per_prompt={
            TOKEN_HAMMING: hamming.per_prompt,
            PIXEL_COSINE: cosine.per_prompt,
            ONE_MINUS_SSIM: ssim_div.per_prompt,
        },
        pair_counts=hamming.pair_counts,
        within_group=within,
    )


@dataclass(frozen=True)
class ProxyResult:
    """Mean ground-truth log-likelihood of samples, in bits per token.

    Zero-probability samples contribute -inf and are counted in
    ``n_zero_prob``. This is an oracle stand-in for learned quality metrics,
    not a perceptual score.
    """

    bits_per_token: float
    n_zero_prob: int

    def to_json_dict(self) -> dict:
        return {
            "bits_per_token": self.bits_per_token,
            "n_zero_prob": self.n_zero_prob,
        }


def grid_log_likelihood(spec: GeneratorSpec, x: Condition, grid: TokenGrid) -> float:
    """log2 p(grid | x) under the unintervened stochastic spec.

    AR multiplies chain factors, DIFF pushes the prior through the transition
    marginals (positions are independent), and MIM sums the token likelihood
    over every unmask sequence weighted by its path probability.
    """
    if grid.shape != spec.grid_shape:
        raise ValueError("grid shape does not match the spec")
    if spec.strategy is Strategy.AR:
        logp = 0.0
        prev = None
        for i, tok in enumerate(grid.tokens):
            row = spec.ar_initial[x] if (i == 0 or spec.context_window == 0) else spec.ar_transition[x][prev]
            p = float(row[tok])
            if p <= 0.0:
                return -math.inf
            logp += math.log2(p)
            prev = tok
        return logp
    if spec.strategy is Strategy.DIFF:
        state = np.asarray(spec.diff_prior, dtype=np.float64)
        table = np.asarray(spec.diff_transition[x], dtype=np.float64)
        for _ in range(spec.steps - 1):
            state = state @ table
        logp = 0.0
        for tok in grid.tokens:
            p = float(state[tok])
            if p <= 0.0:
                return -math.inf
            logp += math.log2(p)
        return logp
    return _mim_log_likelihood(spec, x, grid)


def _mim_log_likelihood(spec: GeneratorSpec, x: Condition, grid: TokenGrid) -> float:
    import itertools

    from .generation import DEFAULT_ENUMERATION_BOUND, EnumerationBoundError, _mim_row

    counts = spec.reveal_counts()
    neighbors = spec.neighbors()
    if spec.mim_selection != "uniform":
        raise ValueError("likelihood covers uniform selection only")
    n_paths = 1
    remaining = grid.n
    for count in counts:
        n_paths *= math.comb(remaining, count)
        remaining -= count
    if n_paths > DEFAULT_ENUMERATION_BOUND:
        raise EnumerationBoundError(
            f"{n_paths} unmask sequences exceed the exact-likelihood bound"
        )

    total = 0.0
    stack = [(0, tuple(range(grid.n)), 1.0)]
    while stack:
        step, masked, prob = stack.pop()
        if step == spec.steps:
            total += prob
            continue
        count = counts[step]
        sel_prob = 1.0 / math.comb(len(masked), count)
        revealed = {i: grid.tokens[i] for i in range(grid.n) if i not in masked}
        for combo in itertools.combinations(masked, count):
            p = prob * sel_prob
            for pos in combo:
                row = _mim_row(spec, x, pos, revealed, neighbors, step)
                p *= float(row[grid.tokens[pos]])
                if p == 0.0:
                    break
            if p > 0.0:
                stack.append(
                    (step + 1, tuple(i for i in masked if i not in combo), p)
                )
    return math.log2(total) if total > 0.0 else -math.inf


def quality_proxy(
    samples: Sequence[TokenGrid], world: ToyWorld, x: Condition
) -> ProxyResult:
    """Average log2 p(Z | x) per token under the world's unintervened spec."""
    if not samples:
        raise ValueError("quality proxy needs at least one sample")
    n = world.spec.n_tokens
    values = [grid_log_likelihood(world.spec, x, g) / n for g in samples]
    flagged = sum(1 for v in values if v == -math.inf)
    return ProxyResult(
        bits_per_token=math.fsum(values) / len(values) if flagged == 0 else -math.inf,
        n_zero_prob=flagged,
    )
