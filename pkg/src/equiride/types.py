"""Core domain types: trips, cohorts, regions, surge annotations."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from datetime import datetime

from .errors import ArgumentError, ConfigurationError


class CohortLabel(enum.Enum):
    """Whether a trip touches a disadvantaged (EDA) region."""

    EDA_TRIP = "EDA_TRIP"
    NON_EDA_TRIP = "NON_EDA_TRIP"


@dataclass(frozen=True, slots=True)
class TripRecord:
    """One anonymized trip in the Chicago TNP shape.

    Source timestamps are rounded to 15 minutes and fares to the nearest
    $2.50; both are kept verbatim. At least one location identifier
    (census tract or community area) must be present per endpoint.
    """

    trip_id: str
    start_time: datetime
    end_time: datetime
    duration: float  # seconds
    distance: float  # miles
    pickup_tract: str | None
    dropoff_tract: str | None
    pickup_area: str | None
    dropoff_area: str | None
    fare: float  # USD
    tip: float = 0.0
    extra_charges: float = 0.0
    shared_authorized: bool = False

    def __post_init__(self) -> None:
        if self.end_time < self.start_time:
            raise ArgumentError(f"trip {self.trip_id}: end_time precedes start_time")
        if self.duration < 0 or self.distance < 0 or self.fare < 0:
            raise ArgumentError(f"trip {self.trip_id}: negative duration, distance or fare")
        if self.tip < 0 or self.extra_charges < 0:
            raise ArgumentError(f"trip {self.trip_id}: negative tip or extra charges")
        if self.pickup_tract is None and self.pickup_area is None:
            raise ArgumentError(f"trip {self.trip_id}: no pickup location identifier")
        if self.dropoff_tract is None and self.dropoff_area is None:
            raise ArgumentError(f"trip {self.trip_id}: no dropoff location identifier")


@dataclass(frozen=True)
class RegionMap:
    """EDA region identifiers plus cohort resident counts."""

    eda_tracts: frozenset[str]
    eda_areas: frozenset[str]
    populations: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        missing = [c.value for c in CohortLabel if c.value not in self.populations]
        if missing:
            raise ConfigurationError(f"populations missing for cohorts: {missing}")
        bad = [k for k, v in self.populations.items() if not v > 0]
        if bad:
            raise ConfigurationError(f"populations must be strictly positive: {bad}")

    @staticmethod
    def default_populations(city_population: float = 2_700_000.0) -> dict[str, float]:
        # One third of the city lives in an EDA; counts are config inputs.
        return {
            CohortLabel.EDA_TRIP.value: city_population / 3.0,
            CohortLabel.NON_EDA_TRIP.value: city_population * 2.0 / 3.0,
        }


@dataclass(frozen=True, slots=True)
class SurgeAnnotatedTrip:
    """A trip plus its inferred continuous surge and displayed level."""

    trip: TripRecord
    cohort: CohortLabel
    surge_continuous: float
    surge_displayed: float

    def __post_init__(self) -> None:
        if self.surge_continuous < 1.0:
            raise ArgumentError("surge_continuous must be >= 1.0")


@dataclass(frozen=True, slots=True)
class RepricedTrip:
    """A surge-annotated trip with a policy-assigned price."""

    annotated: SurgeAnnotatedTrip
    new_price: float
