"""Seeded piecewise-distribution series and brute-force reference statistics.

The reference routines here deliberately avoid numpy and everything in
:mod:`edivisive.energy`; they exist to cross-check the fast path.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .energy import MultiSeries, SplitCandidate
from .exceptions import InvalidInputError

DISTRIBUTIONS = ("gaussian", "heavy_tailed")


@dataclass(frozen=True)
class SegmentSpec:
    """One stationary stretch of a synthetic series.

    ``heavy_tailed`` draws Student-t noise with ``df`` degrees of freedom,
    scaled by ``scale``.
    """

    length: int
    mean: Tuple[float, ...] = (0.0,)
    scale: float = 1.0
    distribution: str = "gaussian"
    df: float = 5.0

    def __post_init__(self):
        if isinstance(self.mean, (int, float)):
            object.__setattr__(self, "mean", (float(self.mean),))
        else:
            object.__setattr__(self, "mean", tuple(float(m) for m in self.mean))
        if self.length < 1:
            raise InvalidInputError(f"segment length must be >= 1, got {self.length}")
        if not self.scale > 0:
            raise InvalidInputError(f"scale must be positive, got {self.scale}")
        if self.distribution not in DISTRIBUTIONS:
            raise InvalidInputError(f"unknown distribution {self.distribution!r}")
        if self.distribution == "heavy_tailed" and self.df < 3:
            raise InvalidInputError("heavy-tailed segments need df >= 3")

    @property
    def dim(self) -> int:
        return len(self.mean)


@dataclass(frozen=True)
class SyntheticTruth:
    series: MultiSeries
    change_points: Tuple[int, ...]


def generate(specs: Sequence[SegmentSpec], seed: int = 0) -> SyntheticTruth:
    """Concatenate independent draws for each segment spec.

    True change points are the one-based indices of each segment's last row,
    excluding the final segment.
    """
    if not specs:
        raise InvalidInputError("at least one segment spec is required")
    dims = {s.dim for s in specs}
    if len(dims) != 1:
        raise InvalidInputError(f"segment specs disagree on dimension: {sorted(dims)}")
    d = dims.pop()
    rng = np.random.default_rng(seed)
    blocks = []
    for spec in specs:
        if spec.distribution == "gaussian":
            noise = rng.standard_normal((spec.length, d))
        else:
            noise = rng.standard_t(spec.df, (spec.length, d))
        blocks.append(np.asarray(spec.mean) + spec.scale * noise)
    bounds = tuple(itertools.accumulate(s.length for s in specs))[:-1]
    return SyntheticTruth(MultiSeries(np.vstack(blocks)), bounds)


def _rows(series) -> List[List[float]]:
    if isinstance(series, MultiSeries):
        series = series.values
    rows = []
    for row in series:
        try:
            rows.append([float(v) for v in row])
        except TypeError:
            rows.append([float(row)])
    return rows


def brute_force_energy(rows: List[List[float]], alpha: float, split: int) -> float:
    """Energy distance by explicit double sums over the raw observations."""
    left, right = rows[:split], rows[split:]
    n, m = len(left), len(right)
    between = 0.0
    for a in left:
        for b in right:
            between += math.dist(a, b) ** alpha
    within_left = 0.0
    for i in range(1, n):
        for j in range(i):
            within_left += math.dist(left[i], left[j]) ** alpha
    within_right = 0.0
    for i in range(1, m):
        for j in range(i):
            within_right += math.dist(right[i], right[j]) ** alpha
    return (2 * between / (n * m)
            - within_left / math.comb(n, 2)
            - within_right / math.comb(m, 2))


def brute_force_best_split(series, alpha: float = 1.0,
                           min_segment: int = 2) -> Optional[SplitCandidate]:
    rows = _rows(series)
    total = len(rows)
    best = None
    for split in range(min_segment, total - min_segment + 1):
        q = split * (total - split) / total * brute_force_energy(rows, alpha, split)
        if best is None or q > best.q_value:
            best = SplitCandidate(split, q)
    return best
