"""Energy-distance kernel for change-point search.

All segment-level routines take a precomputed matrix of alpha-powered
Euclidean distances, so a permutation of observations amounts to a
row/column reindexing of the same matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import DegenerateSplitError, InvalidInputError

__all__ = [
    "MultiSeries",
    "EnergyParams",
    "SegmentView",
    "SplitCandidate",
    "alpha_distance_matrix",
    "energy_stat",
    "q_stat",
    "best_split",
    "split_profile",
]


@dataclass(frozen=True)
class MultiSeries:
    """A time-ordered T x d matrix with labels for rows and columns."""

    values: np.ndarray
    time_labels: tuple = ()
    dim_labels: tuple = ()

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise InvalidInputError(
                f"series must be a non-empty T x d matrix, got shape {values.shape}")
        bad = np.argwhere(~np.isfinite(values))
        if len(bad):
            row, col = bad[0]
            raise InvalidInputError(
                f"non-finite value {values[row, col]!r} at row {row}, column {col}")
        values.setflags(write=False)
        n_time, n_dim = values.shape

        time_labels = tuple(self.time_labels) or tuple(str(i + 1) for i in range(n_time))
        dim_labels = tuple(self.dim_labels) or tuple(f"x{j + 1}" for j in range(n_dim))
        if len(time_labels) != n_time:
            raise InvalidInputError(
                f"{len(time_labels)} time labels for {n_time} rows")
        if len(dim_labels) != n_dim:
            raise InvalidInputError(
                f"{len(dim_labels)} dimension labels for {n_dim} columns")
        if len(set(time_labels)) != n_time:
            raise InvalidInputError("time labels must be unique")
        if len(set(dim_labels)) != n_dim:
            raise InvalidInputError("dimension labels must be unique")

        object.__setattr__(self, "values", values)
        object.__setattr__(self, "time_labels", time_labels)
        object.__setattr__(self, "dim_labels", dim_labels)

    @property
    def n_time(self) -> int:
        return self.values.shape[0]

    @property
    def n_dim(self) -> int:
        return self.values.shape[1]

    def slice(self, start: int, end: int) -> "MultiSeries":
        """Rows ``start:end`` as a new series, labels included."""
        return MultiSeries(self.values[start:end], self.time_labels[start:end],
                           self.dim_labels)


@dataclass(frozen=True)
class EnergyParams:
    alpha: float = 1.0
    min_segment: int = 2

    def __post_init__(self):
        if not (0.0 < self.alpha <= 2.0):
            raise InvalidInputError(f"alpha must lie in (0, 2], got {self.alpha}")
        if int(self.min_segment) != self.min_segment or self.min_segment < 2:
            raise InvalidInputError(
                f"min_segment must be an integer >= 2, got {self.min_segment}")

    @property
    def mean_difference_mode(self) -> bool:
        # alpha == 2 only detects changes in the mean
        return self.alpha == 2.0


@dataclass(frozen=True, order=True)
class SegmentView:
    """Half-open, zero-based row interval ``[start, end)``."""

    start: int
    end: int

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise InvalidInputError(f"invalid segment [{self.start}, {self.end})")

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class SplitCandidate:
    """Best split of a segment.

    ``split`` is the length of the left cluster, i.e. the one-based position
    of its last observation within the segment.
    """

    split: int
    q_value: float
    segment: Optional[SegmentView] = field(default=None, compare=False)

    @property
    def global_index(self) -> int:
        """One-based index of the last left-cluster observation in the series."""
        offset = self.segment.start if self.segment is not None else 0
        return offset + self.split


def alpha_distance_matrix(series, alpha: float = 1.0) -> np.ndarray:
    """Matrix of pairwise Euclidean distances raised to ``alpha``.

    Parameters
    ----------
    series : MultiSeries or array_like
        T x d observations (a 1-d array is read as T x 1).
    alpha : float
        Exponent in (0, 2].

    Returns
    -------
    (T, T) ndarray
        Symmetric, non-negative, zero on the diagonal.
    """
    if not (0.0 < alpha <= 2.0):
        raise InvalidInputError(f"alpha must lie in (0, 2], got {alpha}")
    if not isinstance(series, MultiSeries):
        series = MultiSeries(series)
    x = series.values
    diff = x[:, None, :] - x[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    if alpha != 1.0:
        dist = dist ** alpha
    return dist


def _check_split(seg: SegmentView, split: int):
    if split < 2 or seg.length - split < 2:
        raise DegenerateSplitError(
            f"split {split} of a length-{seg.length} segment leaves a cluster "
            f"with fewer than 2 observations")


def _upper(block: np.ndarray) -> np.ndarray:
    return block[np.triu_indices(block.shape[0], 1)]


def energy_stat(D: np.ndarray, seg: SegmentView, split: int) -> float:
    """Sample energy distance between the two halves of ``seg`` cut after ``split``.

    The between-cluster mean distance is doubled and the two within-cluster
    pair means are subtracted; finite-sample values may be negative.
    """
    _check_split(seg, split)
    if seg.end > D.shape[0]:
        raise InvalidInputError(f"segment end {seg.end} exceeds series length {D.shape[0]}")
    cut = seg.start + split
    n_left = split
    n_right = seg.length - split

    # fsum is correctly rounded, so the result does not depend on row order
    between = math.fsum(D[seg.start:cut, cut:seg.end].ravel())
    within_left = math.fsum(_upper(D[seg.start:cut, seg.start:cut]))
    within_right = math.fsum(_upper(D[cut:seg.end, cut:seg.end]))

    # a + b == b + a in floating point, so swapping the clusters is exact
    within = (within_left / (n_left * (n_left - 1) / 2.0)
              + within_right / (n_right * (n_right - 1) / 2.0))
    return float(2.0 * between / (n_left * n_right) - within)


def q_stat(D: np.ndarray, seg: SegmentView, split: int) -> float:
    """Energy distance weighted by ``n_left * n_right / n`` of the segment."""
    n_left = split
    n_right = seg.length - split
    return float(n_left * n_right / seg.length * energy_stat(D, seg, split))


def split_profile(block: np.ndarray, min_segment: int = 2) -> np.ndarray:
    """Q statistic at every admissible split of a square distance block.

    Entry ``i`` of the result is the Q value for a left cluster of length
    ``min_segment + i``. Running sums make the whole scan O(n^2).
    """
    n = block.shape[0]
    if n < 2 * min_segment:
        return np.empty(0)
    upper = np.triu(block, 1)
    col_above = upper.sum(axis=0)    # sum_{i<m} D[i, m]
    row_after = upper.sum(axis=1)    # sum_{j>m} D[m, j]

    # k = number of observations in the left cluster, 0..n
    within_left = np.concatenate(([0.0], np.cumsum(col_above)))
    within_right = np.concatenate((np.cumsum(row_after[::-1])[::-1], [0.0]))
    between = np.concatenate(([0.0], np.cumsum(row_after - col_above)))

    k = np.arange(min_segment, n - min_segment + 1)
    m = n - k
    energy = (2.0 * between[k] / (k * m)
              - within_left[k] / (k * (k - 1) / 2.0)
              - within_right[k] / (m * (m - 1) / 2.0))
    return k * m / n * energy


def best_split(D: np.ndarray, seg: SegmentView,
               params: EnergyParams = EnergyParams()) -> Optional[SplitCandidate]:
    """Admissible split of ``seg`` with the largest Q; ``None`` if too short.

    Ties go to the smallest split.
    """
    if seg.length < 2 * params.min_segment:
        return None
    block = D[seg.start:seg.end, seg.start:seg.end]
    profile = split_profile(block, params.min_segment)
    i = int(np.argmax(profile))
    return SplitCandidate(params.min_segment + i, float(profile[i]), seg)

