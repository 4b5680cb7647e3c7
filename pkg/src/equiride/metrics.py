"""Relative Rideability and cohort-level fairness summaries.

Relative Rideability follows the four-fifths-rule construction used in
disparate-impact review: the worst-off disadvantaged group's per-capita
trip rate over the best-off non-disadvantaged group's. Higher is fairer;
the 80% legal threshold is reported by callers, never enforced here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import ArgumentError, UndefinedRatioError
from .types import CohortLabel, RegionMap, SurgeAnnotatedTrip
from .elasticity import SurplusReport


@dataclass(frozen=True)
class GroupTripStats:
    """Trips-per-resident for one population group."""

    group_id: str
    trip_count: float
    population: float
    disadvantaged: bool

    def __post_init__(self) -> None:
        if self.population <= 0:
            raise ArgumentError(f"group {self.group_id}: population must be positive")
        if self.trip_count < 0:
            raise ArgumentError(f"group {self.group_id}: negative trip count")

    @property
    def avg_trips(self) -> float:
        return self.trip_count / self.population


@dataclass(frozen=True)
class FairnessSummary:
    """One Table-1-shaped row: trips, rideability ratio, affordability."""

    r2: float
    eta: float
    surplus: float
    avg_surplus: float
    revenue: float

    def to_json_dict(self) -> dict:
        return {
            "r2": self.r2,
            "eta": self.eta,
            "surplus": self.surplus,
            "avg_surplus": self.avg_surplus,
            "revenue": self.revenue,
        }


def relative_rideability(groups: Iterable[GroupTripStats]) -> float:
    """min disadvantaged per-capita trips / max non-disadvantaged."""
    disadvantaged = [g.avg_trips for g in groups if g.disadvantaged]
    advantaged = [g.avg_trips for g in groups if not g.disadvantaged]
    if not disadvantaged or not advantaged:
        raise ArgumentError("need at least one group on each side")
    denominator = max(advantaged)
    if denominator == 0:
        raise UndefinedRatioError("non-disadvantaged groups have zero per-capita trips")
    return min(disadvantaged) / denominator


def rideability_from_counts(
    eda_trips: float, non_eda_trips: float, regions: RegionMap
) -> float:
    groups = [
        GroupTripStats(
            group_id=CohortLabel.EDA_TRIP.value,
            trip_count=eda_trips,
            population=regions.populations[CohortLabel.EDA_TRIP.value],
            disadvantaged=True,
        ),
        GroupTripStats(
            group_id=CohortLabel.NON_EDA_TRIP.value,
            trip_count=non_eda_trips,
            population=regions.populations[CohortLabel.NON_EDA_TRIP.value],
            disadvantaged=False,
        ),
    ]
    return relative_rideability(groups)


def fairness_summary(
    trips: Sequence[SurgeAnnotatedTrip],
    surplus: SurplusReport,
    regions: RegionMap,
    focus: CohortLabel = CohortLabel.EDA_TRIP,
) -> FairnessSummary:
    """Aggregate trips, rideability, surplus and revenue for the focus cohort.

    The trip list must span the full universe (both cohorts) so the
    rideability ratio is well defined.
    """
    if surplus.cohort is not focus:
        raise ArgumentError(
            f"surplus report is for {surplus.cohort.value}, summary focus is {focus.value}"
        )
    eta = sum(1 for t in trips if t.cohort is focus)
    other = sum(1 for t in trips if t.cohort is not focus)
    revenue = sum(t.trip.fare for t in trips if t.cohort is focus)
    if focus is CohortLabel.EDA_TRIP:
        r2 = rideability_from_counts(eta, other, regions)
    else:
        r2 = rideability_from_counts(other, eta, regions)
    return FairnessSummary(
        r2=r2,
        eta=float(eta),
        surplus=surplus.total_surplus,
        avg_surplus=surplus.average_surplus,
        revenue=revenue,
    )
