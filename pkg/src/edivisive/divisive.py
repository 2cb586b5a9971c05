"""Top-down multiple change-point estimation with permutation stopping."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .energy import (
    EnergyParams,
    MultiSeries,
    SegmentView,
    alpha_distance_matrix,
    best_split,
    split_profile,
)
from .exceptions import InvalidInputError

__all__ = [
    "DetectParams",
    "ChangePoint",
    "ChangePointReport",
    "assign_clusters",
    "permutation_pvalue",
    "detect",
]

# Permuted maxima within this relative distance of the observed maximum count
# as exceedances, so exact ties are not decided by rounding.
TIE_RTOL = 1e-10


@dataclass(frozen=True)
class DetectParams:
    energy: EnergyParams = field(default_factory=EnergyParams)
    permutations: int = 499
    sig_level: float = 0.05
    seed: int = 0
    max_points: Optional[int] = None

    def __post_init__(self):
        if self.permutations < 1:
            raise InvalidInputError("permutations must be >= 1")
        if not 0.0 < self.sig_level < 1.0:
            raise InvalidInputError("sig_level must lie in (0, 1)")
        if not 0 <= self.seed < 2 ** 64:
            raise InvalidInputError("seed must be an unsigned 64-bit integer")
        if self.max_points is not None and self.max_points < 1:
            raise InvalidInputError("max_points must be >= 1 when given")

    def to_dict(self) -> dict:
        return {
            "alpha": self.energy.alpha,
            "min_segment": self.energy.min_segment,
            "permutations": self.permutations,
            "sig_level": self.sig_level,
            "seed": self.seed,
            "max_points": self.max_points,
            "mean_difference_mode": self.energy.mean_difference_mode,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DetectParams":
        return cls(EnergyParams(d["alpha"], d["min_segment"]), d["permutations"],
                   d["sig_level"], d["seed"], d.get("max_points"))


@dataclass(frozen=True)
class ChangePoint:
    """An accepted (or, for the stopping candidate, rejected) split.

    ``index`` is the one-based row of the last observation before the change;
    ``onset_index`` = ``index + 1`` is the first row of the new cluster.
    """

    index: int
    label: str
    q_value: float
    p_value: float
    iteration: int
    segment: SegmentView
    onset_label: str = ""

    @property
    def onset_index(self) -> int:
        return self.index + 1

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "label": self.label,
            "onset_index": self.onset_index,
            "onset_label": self.onset_label,
            "q_value": self.q_value,
            "p_value": self.p_value,
            "iteration": self.iteration,
            "segment": [self.segment.start + 1, self.segment.end],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChangePoint":
        first, last = d["segment"]
        return cls(d["index"], d["label"], d["q_value"], d["p_value"],
                   d["iteration"], SegmentView(first - 1, last), d.get("onset_label", ""))


@dataclass(frozen=True)
class ChangePointReport:
    """Outcome of :func:`detect`.

    Indices are one-based: change point ``t`` means rows ``..t`` and
    ``t+1..`` fall in different clusters. ``discovered`` holds points in the
    order they were accepted; ``stopping_candidate`` is the split whose test
    ended the search, if any.
    """

    params: DetectParams
    n_time: int
    time_labels: tuple
    discovered: tuple
    stopping_candidate: Optional[ChangePoint] = None

    @property
    def change_points(self) -> List[int]:
        return sorted(cp.index for cp in self.discovered)

    @property
    def points(self) -> List[ChangePoint]:
        return sorted(self.discovered, key=lambda cp: cp.index)

    @property
    def clusters(self) -> List[SegmentView]:
        return assign_clusters(self.n_time, self.change_points)

    def cluster_ids(self) -> List[int]:
        """One-based cluster number for every row."""
        ids = []
        for k, seg in enumerate(self.clusters, start=1):
            ids.extend([k] * seg.length)
        return ids

    def to_dict(self) -> dict:
        points = self.points
        return {
            "params": self.params.to_dict(),
            "n_time": self.n_time,
            "time_labels": list(self.time_labels),
            "change_points": [{"index": cp.index, "label": cp.label,
                               "onset_index": cp.onset_index, "onset_label": cp.onset_label}
                              for cp in points],
            "p_values": [cp.p_value for cp in points],
            "q_values": [cp.q_value for cp in points],
            "discovery_order": [cp.to_dict() for cp in self.discovered],
            "clusters": [
                {"id": k, "first": seg.start + 1, "last": seg.end,
                 "first_label": self.time_labels[seg.start],
                 "last_label": self.time_labels[seg.end - 1]}
                for k, seg in enumerate(self.clusters, start=1)
            ],
            "stopping_candidate": (self.stopping_candidate.to_dict()
                                   if self.stopping_candidate else None),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChangePointReport":
        stop = d.get("stopping_candidate")
        return cls(
            DetectParams.from_dict(d["params"]),
            d["n_time"],
            tuple(d["time_labels"]),
            tuple(ChangePoint.from_dict(cp) for cp in d["discovery_order"]),
            ChangePoint.from_dict(stop) if stop else None,
        )


def assign_clusters(n_time: int, change_points: Sequence[int]) -> List[SegmentView]:
    """Contiguous clusters delimited by one-based change points.

    >>> [(s.start + 1, s.end) for s in assign_clusters(46, [39, 44])]
    [(1, 39), (40, 44), (45, 46)]
    """
    points = list(change_points)
    if any(not 1 <= t <= n_time - 1 for t in points):
        raise InvalidInputError(f"change points must lie in 1..{n_time - 1}: {points}")
    if any(b <= a for a, b in zip(points, points[1:])):
        raise InvalidInputError(f"change points must be strictly increasing: {points}")
    bounds = [0] + points + [n_time]
    return [SegmentView(a, b) for a, b in zip(bounds, bounds[1:])]


def _replicate_rng(seed: int, iteration: int, replicate: int) -> np.random.Generator:
    # Each replicate's stream depends only on its own key, so replicates can
    # run in any order or in parallel with identical results.
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(iteration, replicate))))


def _max_q(D: np.ndarray, clusters: Sequence[SegmentView], min_segment: int,
           rng: Optional[np.random.Generator] = None) -> float:
    best = -np.inf
    for seg in clusters:
        if seg.length < 2 * min_segment:
            continue
        block = D[seg.start:seg.end, seg.start:seg.end]
        if rng is not None:
            order = rng.permutation(seg.length)
            block = block[np.ix_(order, order)]
        best = max(best, float(split_profile(block, min_segment).max()))
    return best


def permutation_pvalue(D: np.ndarray, clusters: Sequence[SegmentView],
                       observed_q: float, params: DetectParams,
                       iteration: int = 1) -> float:
    """Permutation p-value for the largest Q across the current clusters.

    Each replicate shuffles observations within every cluster (never across),
    recomputes the largest admissible Q, and counts it as an exceedance when
    it reaches the observed value. Returns ``(1 + exceedances) / (R + 1)``.
    """
    min_segment = params.energy.min_segment
    assert any(seg.length >= 2 * min_segment for seg in clusters), \
        "no cluster admits a split"
    threshold = observed_q - TIE_RTOL * abs(observed_q)
    exceed = 0
    for r in range(params.permutations):
        rng = _replicate_rng(params.seed, iteration, r)
        if _max_q(D, clusters, min_segment, rng) >= threshold:
            exceed += 1
    return (1 + exceed) / (params.permutations + 1)


def detect(series, params: DetectParams = DetectParams()) -> ChangePointReport:
    """Estimate change points by repeated best-split search.

    Every iteration scores the best split of each current cluster, keeps
    the largest, and accepts it if its permutation p-value is at most
    ``params.sig_level``. The first rejection ends the search.
    """
    if not isinstance(series, MultiSeries):
        series = MultiSeries(series)
    D = alpha_distance_matrix(series, params.energy.alpha)
    clusters = [SegmentView(0, series.n_time)]
    discovered: List = []
    stop = None

    iteration = 0
    while params.max_points is None or len(discovered) < params.max_points:
        candidates = [c for c in (best_split(D, seg, params.energy) for seg in clusters)
                      if c is not None]
        if not candidates:
            break
        iteration += 1
        # max keeps the first of equal values, i.e. the earliest cluster
        best = max(candidates, key=lambda c: c.q_value)
        p = permutation_pvalue(D, clusters, best.q_value, params, iteration)
        t = best.global_index
        point = ChangePoint(t, series.time_labels[t - 1], best.q_value, p, iteration,
                            best.segment, series.time_labels[t])
        if p > params.sig_level:
            stop = point
            break
        discovered.append(point)
        seg = best.segment
        i = clusters.index(seg)
        cut = seg.start + best.split
        clusters[i:i + 1] = [SegmentView(seg.start, cut), SegmentView(cut, seg.end)]

    return ChangePointReport(params, series.n_time, series.time_labels,
                             tuple(discovered), stop)
