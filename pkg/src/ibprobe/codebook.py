"""Explicit codebooks for fixed-grid quantization schemes, usage statistics,
and frequency-based codebook restriction."""

from __future__ import annotations

import enum
import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

DEFAULT_MAX_ENTRIES = 2**20


class Scheme(str, enum.Enum):
    FSQ = "fsq"
    LFQ = "lfq"
    BSQ = "bsq"
    EXPLICIT = "explicit"


class SubsetPolicy(str, enum.Enum):
    DROP_LEAST_FREQUENT = "drop_least_frequent"
    DROP_MOST_FREQUENT = "drop_most_frequent"
    DROP_RANDOM = "drop_random"


def round_half_up(x: float) -> int:
    """Round to nearest integer, halves away from zero toward +inf."""
    return int(math.floor(x + 0.5))


@dataclass(frozen=True, eq=False)
class Codebook:
    """A fixed table of code vectors.

    Entries are ordered; the index of an entry is the code. For grid schemes
    (FSQ/LFQ/BSQ) the ordering is the cartesian product of per-dimension
    values with the first dimension varying slowest.
    """

    scheme: Scheme
    dim: int
    entries: np.ndarray  # (size, dim) float64, read-only
    levels: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        entries = np.asarray(self.entries, dtype=np.float64)
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if entries.ndim != 2 or entries.shape[1] != self.dim:
            raise ValueError(f"entries must have shape (size, {self.dim})")
        if self.scheme in (Scheme.FSQ, Scheme.LFQ):
            if self.levels is None:
                raise ValueError(f"{self.scheme.value} codebook requires levels")
            expected = math.prod(self.levels)
            if entries.shape[0] != expected:
                raise ValueError(
                    f"entry count {entries.shape[0]} != product of levels {expected}"
                )
            if self.scheme is Scheme.LFQ and any(v != 2 for v in self.levels):
                raise ValueError("LFQ levels must all be 2")
        if self.scheme is Scheme.BSQ:
            norms = np.linalg.norm(entries, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-9):
                raise ValueError("BSQ entries must have unit norm within 1e-9")
        if len({row.tobytes() for row in entries}) != entries.shape[0]:
            raise ValueError("codebook entries must be pairwise distinct")

    @property
    def size(self) -> int:
        return int(self.entries.shape[0])

    def value_range(self) -> tuple[float, float]:
        """Min and max coordinate over all entries (used by the decoder)."""
        return float(self.entries.min()), float(self.entries.max())

    def to_json_dict(self) -> dict:
        return {
            "scheme": self.scheme.value,
            "dim": self.dim,
            "levels": list(self.levels) if self.levels is not None else None,
            "entries": [[float(v) for v in row] for row in self.entries],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "Codebook":
        return cls(
            scheme=Scheme(data["scheme"]),
            dim=int(data["dim"]),
            entries=np.asarray(data["entries"], dtype=np.float64),
            levels=tuple(data["levels"]) if data.get("levels") else None,
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Codebook":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


def _grid_entries(values_per_dim: list[np.ndarray]) -> np.ndarray:
    rows = list(itertools.product(*values_per_dim))
    return np.asarray(rows, dtype=np.float64)


def build_quantizer(
    scheme: Scheme | str,
    *,
    levels: Sequence[int] | None = None,
    dim: int | None = None,
    max_entries: int = DEFAULT_MAX_ENTRIES,
) -> Codebook:
    """Construct the explicit codebook of a quantization scheme.

    FSQ takes ``levels`` (one entry per dimension, each >= 2) and spaces each
    dimension's level values evenly over [-1, 1]. LFQ is the binary special
    case of FSQ and takes ``dim``. BSQ takes ``dim`` and produces the signs
    {+-1/sqrt(dim)}^dim, so every entry lies on the unit sphere.
    """
    scheme = Scheme(scheme)
    if scheme is Scheme.FSQ:
        if not levels:
            raise ValueError("FSQ requires a nonempty levels list")
        levels = tuple(int(v) for v in levels)
        if any(v < 2 for v in levels):
            raise ValueError(f"every FSQ level count must be >= 2, got {levels}")
        if math.prod(levels) > max_entries:
            raise ValueError(
                f"grid of {math.prod(levels)} entries exceeds bound {max_entries}"
            )
        values = [np.linspace(-1.0, 1.0, v) for v in levels]
        return Codebook(Scheme.FSQ, len(levels), _grid_entries(values), levels)
    if scheme is Scheme.LFQ:
        if dim is None or dim < 1:
            raise ValueError("LFQ requires dim >= 1")
        if 2**dim > max_entries:
            raise ValueError(f"2^{dim} entries exceeds bound {max_entries}")
        values = [np.linspace(-1.0, 1.0, 2) for _ in range(dim)]
        return Codebook(Scheme.LFQ, dim, _grid_entries(values), (2,) * dim)
    if scheme is Scheme.BSQ:
        if dim is None or dim < 1:
            raise ValueError("BSQ requires dim >= 1")
        if 2**dim > max_entries:
            raise ValueError(f"2^{dim} entries exceeds bound {max_entries}")
        r = 1.0 / math.sqrt(dim)
        values = [np.asarray([-r, r]) for _ in range(dim)]
        return Codebook(Scheme.BSQ, dim, _grid_entries(values), None)
    raise ValueError("build_quantizer constructs FSQ, LFQ, or BSQ codebooks")


def explicit_codebook(entries: Sequence[Sequence[float]]) -> Codebook:
    arr = np.asarray(entries, dtype=np.float64)
    return Codebook(Scheme.EXPLICIT, int(arr.shape[1]), arr, None)


def quantize(v: Sequence[float], cb: Codebook) -> int:
    """Index of the nearest codebook entry in Euclidean distance.

    Ties resolve to the lowest index. For FSQ grids this equals independent
    per-dimension rounding to the nearest level value.
    """
    vec = np.asarray(v, dtype=np.float64)
    if vec.shape != (cb.dim,):
        raise ValueError(f"vector has shape {vec.shape}, codebook dim is {cb.dim}")
    d2 = np.sum((cb.entries - vec) ** 2, axis=1)
    return int(np.argmin(d2))


@dataclass(frozen=True, eq=False)
class UsageHistogram:
    """Empirical code-usage counts over a generated corpus."""

    counts: np.ndarray  # (size,) int64

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=np.int64)
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        if counts.ndim != 1 or counts.size == 0:
            raise ValueError("counts must be a nonempty 1-d array")
        if np.any(counts < 0):
            raise ValueError("counts must be nonnegative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def size(self) -> int:
        return int(self.counts.size)

    @classmethod
    def from_token_lists(
        cls, token_lists: Iterable[Iterable[int]], size: int
    ) -> "UsageHistogram":
        counts = np.zeros(size, dtype=np.int64)
        for tokens in token_lists:
            for t in tokens:
                counts[t] += 1
        return cls(counts)

    def to_csv(self, path: str | Path) -> None:
        lines = ["index,count"]
        lines += [f"{i},{int(c)}" for i, c in enumerate(self.counts)]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path: str | Path) -> "UsageHistogram":
        rows = Path(path).read_text().strip().splitlines()[1:]
        counts = np.zeros(len(rows), dtype=np.int64)
        for row in rows:
            idx, count = row.split(",")
            counts[int(idx)] = int(count)
        return cls(counts)


def codebook_entropy(usage: UsageHistogram) -> float:
    """Plug-in Shannon entropy of the usage distribution, in bits."""
    if usage.total == 0:
        raise ValueError("usage histogram has zero total count")
    p = usage.counts / usage.total
    return -math.fsum(pi * math.log2(pi) for pi in p if pi > 0.0)


@dataclass(frozen=True, eq=False)
class CodebookSubset:
    """A restriction of a codebook to an active subset of code indices."""

    base: Codebook
    active: tuple[int, ...]
    policy: SubsetPolicy
    ratio: float
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.active:
            raise ValueError("active set must be nonempty")
        if list(self.active) != sorted(set(self.active)):
            raise ValueError("active indices must be sorted and unique")
        if self.active[0] < 0 or self.active[-1] >= self.base.size:
            raise ValueError("active indices out of range")

    def mask(self) -> np.ndarray:
        m = np.zeros(self.base.size, dtype=bool)
        m[list(self.active)] = True
        return m


def restrict(
    cb: Codebook,
    usage: UsageHistogram,
    policy: SubsetPolicy | str,
    ratio: float,
    seed: int = 0,
) -> CodebookSubset:
    """Keep a frequency-ranked fraction of the codebook.

    DROP_LEAST_FREQUENT keeps the highest-count codes, DROP_MOST_FREQUENT the
    lowest-count codes, DROP_RANDOM a uniform random subset driven entirely by
    ``seed``. The kept size is max(1, round_half_up(ratio * size)). Count ties
    break toward the lower index.
    """
    policy = SubsetPolicy(policy)
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio must lie in (0, 1], got {ratio}")
    if usage.size != cb.size:
        raise ValueError(
            f"usage histogram length {usage.size} != codebook size {cb.size}"
        )
    k = max(1, round_half_up(ratio * cb.size))
    indices = range(cb.size)
    if policy is SubsetPolicy.DROP_LEAST_FREQUENT:
        kept = sorted(indices, key=lambda i: (-usage.counts[i], i))[:k]
    elif policy is SubsetPolicy.DROP_MOST_FREQUENT:
        kept = sorted(indices, key=lambda i: (usage.counts[i], i))[:k]
    else:
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        kept = [int(i) for i in rng.permutation(cb.size)[:k]]
    return CodebookSubset(cb, tuple(sorted(kept)), policy, ratio, seed)
