"""Energy-distance multiple change-point detection for weekly excess mortality."""

__version__ = "0.1.0"

from .divisive import (
    ChangePoint,
    ChangePointReport,
    DetectParams,
    assign_clusters,
    detect,
    permutation_pvalue,
)
from .energy import (
    EnergyParams,
    MultiSeries,
    SegmentView,
    SplitCandidate,
    alpha_distance_matrix,
    best_split,
    energy_stat,
    q_stat,
)
from .excess import (
    BaselineTable,
    ColumnMapping,
    ExcessSeries,
    WeeklyDeathRecord,
    build_baseline,
    build_detection_series,
    compute_excess,
    parse_weekly_deaths,
    read_excess_csv,
    write_excess_csv,
)
from .synthetic import SegmentSpec, SyntheticTruth, brute_force_best_split, generate

__all__ = [
    "BaselineTable", "ChangePoint", "ChangePointReport", "ColumnMapping", "DetectParams",
    "EnergyParams", "ExcessSeries", "MultiSeries", "SegmentSpec", "SegmentView",
    "SplitCandidate", "SyntheticTruth", "WeeklyDeathRecord", "alpha_distance_matrix",
    "assign_clusters", "best_split", "brute_force_best_split", "build_baseline",
    "build_detection_series", "compute_excess", "detect", "energy_stat", "generate",
    "parse_weekly_deaths", "permutation_pvalue", "q_stat", "read_excess_csv",
    "write_excess_csv",
]
