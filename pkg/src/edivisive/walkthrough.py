"""All-groups and per-age-group detection on one excess series.

Used by the reproduction check: run the ten-column detection, rerun each
age group on its (female, male) pair, and compare where the surge starts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from .divisive import ChangePointReport, DetectParams, detect
from .energy import MultiSeries
from .excess import AGE_GROUPS, ExcessSeries, build_detection_series


@dataclass(frozen=True)
class GroupRun:
    series: MultiSeries
    report: ChangePointReport

    @property
    def onsets(self) -> list:
        """One-based first rows of every cluster after the first."""
        return [cp.onset_index for cp in self.report.points]

    def surge_onset(self) -> Optional[int]:
        """First row of the cluster with the highest mean excess rate.

        ``None`` when no change point was found.
        """
        clusters = self.report.clusters
        if len(clusters) < 2:
            return None
        means = [self.series.values[c.start:c.end].mean() for c in clusters]
        peak = clusters[int(np.argmax(means))]
        return peak.start + 1


@dataclass(frozen=True)
class Walkthrough:
    all_groups: GroupRun
    by_age: Dict[str, GroupRun]

    def surge_lead_weeks(self, early: str = "85+", late: str = "15-64") -> Optional[int]:
        """How many weeks the ``early`` group's surge precedes the ``late`` one's."""
        a = self.by_age[early].surge_onset()
        b = self.by_age[late].surge_onset()
        if a is None or b is None:
            return None
        return b - a

    def all_matches_oldest(self) -> bool:
        return self.all_groups.report.change_points == self.by_age["85+"].report.change_points


def run(excess: ExcessSeries, params: DetectParams, start: Optional[str] = "2019-W27",
        end: Optional[str] = None) -> Walkthrough:
    series = build_detection_series(excess, start, end, "all")
    overall = GroupRun(series, detect(series, params))
    by_age = {}
    for age in AGE_GROUPS:
        s = build_detection_series(excess, start, end, "per-age-group", age)
        by_age[age] = GroupRun(s, detect(s, params))
    return Walkthrough(overall, by_age)
