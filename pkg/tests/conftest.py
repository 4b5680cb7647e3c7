"""Shared fixture builders for the test suite."""

from __future__ import annotations

from datetime import datetime, timedelta

import pytest

from equiride import CohortLabel, RegionMap, SurgeAnnotatedTrip, TripRecord

BASE_TIME = datetime(2021, 3, 15, 9, 0, 0)


def make_trip(
    trip_id: str = "t1",
    fare: float = 10.0,
    duration: float = 600.0,
    distance: float = 2.0,
    pickup_tract: str | None = "17031000100",
    dropoff_tract: str | None = "17031000200",
    pickup_area: str | None = "8",
    dropoff_area: str | None = "32",
    start_time: datetime | None = None,
    shared: bool = False,
    tip: float = 0.0,
    extra: float = 0.0,
) -> TripRecord:
    start = start_time or BASE_TIME
    return TripRecord(
        trip_id=trip_id,
        start_time=start,
        end_time=start + timedelta(seconds=duration),
        duration=duration,
        distance=distance,
        pickup_tract=pickup_tract,
        dropoff_tract=dropoff_tract,
        pickup_area=pickup_area,
        dropoff_area=dropoff_area,
        fare=fare,
        tip=tip,
        extra_charges=extra,
        shared_authorized=shared,
    )


def make_annotated(
    fare: float = 10.0,
    cohort: CohortLabel = CohortLabel.EDA_TRIP,
    surge_continuous: float = 1.0,
    surge_displayed: float | None = None,
    **trip_kwargs,
) -> SurgeAnnotatedTrip:
    from equiride import discretize_surge

    return SurgeAnnotatedTrip(
        trip=make_trip(fare=fare, **trip_kwargs),
        cohort=cohort,
        surge_continuous=surge_continuous,
        surge_displayed=(
            surge_displayed if surge_displayed is not None else discretize_surge(surge_continuous)
        ),
    )


@pytest.fixture
def regions() -> RegionMap:
    return RegionMap(
        eda_tracts=frozenset({"17031000100", "17031999900"}),
        eda_areas=frozenset({"26", "29"}),
        populations={"EDA_TRIP": 900_000.0, "NON_EDA_TRIP": 1_800_000.0},
    )
