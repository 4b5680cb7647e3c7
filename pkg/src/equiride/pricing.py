"""Fair pricing: cohort repricing models, discount policies, and the
constrained fixed-discount grid search.

Two mechanisms ship. The repricing model fits fares on trip features over
disadvantaged-cohort trips only, so predictions track what that cohort's
riders actually pay. The fixed-discount search picks one discount fraction
for every cohort trip, maximizing total trips subject to either a subsidy
ceiling (government pays the discount, platform revenue untouched) or a
revenue-plus-driver-floor constraint (platform absorbs the discount).
Surge discontinuities make the objective non-convex, so the search is an
audited grid sweep rather than a gradient method.

Riders pay (1 - delta) * price throughout.
"""

from __future__ import annotations

import enum
import math
import zlib
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin

from .elasticity import (
    SurplusMode,
    consumer_surplus_from_levels,
    elasticity_for_level,
)
from .errors import ArgumentError, DataError, EstimationError
from .metrics import FairnessSummary, rideability_from_counts
from .types import CohortLabel, RegionMap, RepricedTrip, SurgeAnnotatedTrip
from .validation import check_fitted, check_min_samples

DEFAULT_PRICE_FLOOR = 2.50  # the source data's minimum fare granularity
DEFAULT_AREA_BUCKETS = 32
MIN_FAIRRIDE_TRIPS = 1000

HOURS = 24


# ---------------------------------------------------------------------------
# Feature construction


def _area_key(trip) -> str:
    return trip.pickup_area if trip.pickup_area is not None else (trip.pickup_tract or "")


def _hash_bucket(key: str, buckets: int) -> int:
    # crc32 rather than hash(): stable across processes and runs.
    return zlib.crc32(key.encode("utf-8")) % buckets


class TripFeaturizer(BaseEstimator, TransformerMixin):
    """Encode annotated trips as a dense design matrix.

    Columns: intercept, duration, distance, displayed surge, hour-of-day
    one-hot, pickup-area one-hot hashed into a fixed bucket count.
    """

    def __init__(self, area_buckets: int = DEFAULT_AREA_BUCKETS):
        self.area_buckets = area_buckets

    def fit(self, trips: Sequence[SurgeAnnotatedTrip], y=None) -> "TripFeaturizer":
        return self  # hashing encoder carries no fitted state

    def transform(self, trips: Sequence[SurgeAnnotatedTrip]) -> np.ndarray:
        n = len(trips)
        X = np.zeros((n, 4 + HOURS + self.area_buckets))
        X[:, 0] = 1.0
        for i, at in enumerate(trips):
            t = at.trip
            X[i, 1] = t.duration
            X[i, 2] = t.distance
            X[i, 3] = at.surge_displayed
            X[i, 4 + t.start_time.hour] = 1.0
            X[i, 4 + HOURS + _hash_bucket(_area_key(t), self.area_buckets)] = 1.0
        return X

    def feature_names(self) -> list[str]:
        names = ["intercept", "duration_s", "distance_mi", "surge_displayed"]
        names += [f"hour_{h:02d}" for h in range(HOURS)]
        names += [f"area_{b:02d}" for b in range(self.area_buckets)]
        return names


def _independent_columns(X: np.ndarray, tol: float = 1e-10) -> tuple[list[int], list[int]]:
    """Greedy full-rank column subset, scanning in declaration order.

    Works on the Gram matrix so one pass over the data suffices; a column
    is kept when its residual norm against the kept span exceeds tol
    relative to its own norm.
    """
    gram = X.T @ X
    diag = np.diag(gram)
    scale = diag.max() if diag.size else 0.0
    kept: list[int] = []
    dropped: list[int] = []
    for j in range(gram.shape[0]):
        if diag[j] <= tol * scale:
            dropped.append(j)
            continue
        if kept:
            sub = gram[np.ix_(kept, kept)]
            cross = gram[kept, j]
            solution = np.linalg.lstsq(sub, cross, rcond=None)[0]
            residual = diag[j] - cross @ solution
        else:
            residual = diag[j]
        if residual > tol * diag[j]:
            kept.append(j)
        else:
            dropped.append(j)
    return kept, dropped


class LinearFarePricer(BaseEstimator, RegressorMixin):
    """Least-squares fare model over the trip feature set.

    Collinear one-hot columns (an all-hours fixture, a single-area town)
    are dropped deterministically and reported, not fatal. Predictions are
    clamped at the price floor.
    """

    def __init__(
        self,
        area_buckets: int = DEFAULT_AREA_BUCKETS,
        price_floor: float = DEFAULT_PRICE_FLOOR,
    ):
        self.area_buckets = area_buckets
        self.price_floor = price_floor

    intercept_: float
    coefficients_: dict[str, float]
    dropped_columns_: list[str]
    n_trips_: int

    def fit(self, trips: Sequence[SurgeAnnotatedTrip], y=None) -> "LinearFarePricer":
        if not trips:
            raise DataError("no trips to fit on")
        featurizer = TripFeaturizer(self.area_buckets)
        X = featurizer.transform(trips)
        names = featurizer.feature_names()
        fares = np.array([t.trip.fare for t in trips])
        kept, dropped = _independent_columns(X)
        coef, _, _, _ = np.linalg.lstsq(X[:, kept], fares, rcond=None)
        self._kept_indices = kept
        self.dropped_columns_ = [names[j] for j in dropped]
        weights = dict(zip((names[j] for j in kept), coef))
        self.intercept_ = float(weights.pop("intercept", 0.0))
        self.coefficients_ = {k: float(v) for k, v in weights.items()}
        self.n_trips_ = len(trips)
        return self

    def predict(self, trips: Sequence[SurgeAnnotatedTrip]) -> np.ndarray:
        check_fitted(self, "coefficients_")
        featurizer = TripFeaturizer(self.area_buckets)
        X = featurizer.transform(trips)
        names = featurizer.feature_names()
        weights = np.zeros(X.shape[1])
        weights[0] = self.intercept_
        index = {name: j for j, name in enumerate(names)}
        for name, w in self.coefficients_.items():
            weights[index[name]] = w
        return np.maximum(X @ weights, self.price_floor)

    def to_json_dict(self) -> dict:
        check_fitted(self, "coefficients_")
        return {
            "intercept": self.intercept_,
            "coefficients": self.coefficients_,
            "dropped_columns": self.dropped_columns_,
            "area_buckets": self.area_buckets,
            "price_floor": self.price_floor,
            "n_trips": self.n_trips_,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "LinearFarePricer":
        model = cls(area_buckets=doc["area_buckets"], price_floor=doc["price_floor"])
        model.intercept_ = doc["intercept"]
        model.coefficients_ = dict(doc["coefficients"])
        model.dropped_columns_ = list(doc.get("dropped_columns", []))
        model.n_trips_ = doc.get("n_trips", 0)
        return model


class FairRidePricer(LinearFarePricer):
    """LinearFarePricer restricted to disadvantaged-cohort training data."""

    training_cohort = CohortLabel.EDA_TRIP

    def fit(self, trips: Sequence[SurgeAnnotatedTrip], y=None) -> "FairRidePricer":
        outsiders = sum(1 for t in trips if t.cohort is not self.training_cohort)
        if outsiders:
            raise ArgumentError(
                f"{outsiders} trips outside cohort {self.training_cohort.value}; "
                "this model trains on disadvantaged-cohort trips only"
            )
        check_min_samples(len(trips), MIN_FAIRRIDE_TRIPS, "cohort trips")
        return super().fit(trips)


def train_fairride(
    eda_trips: Sequence[SurgeAnnotatedTrip],
    area_buckets: int = DEFAULT_AREA_BUCKETS,
    price_floor: float = DEFAULT_PRICE_FLOOR,
) -> FairRidePricer:
    return FairRidePricer(area_buckets=area_buckets, price_floor=price_floor).fit(eda_trips)


def train_ols_baseline(
    all_trips: Sequence[SurgeAnnotatedTrip],
    area_buckets: int = DEFAULT_AREA_BUCKETS,
    price_floor: float = DEFAULT_PRICE_FLOOR,
) -> LinearFarePricer:
    """Comparison baseline: the same regression trained on every trip."""
    return LinearFarePricer(area_buckets=area_buckets, price_floor=price_floor).fit(all_trips)


# ---------------------------------------------------------------------------
# Discount policies


@dataclass(frozen=True)
class FlatDiscount:
    """Subtract a fixed dollar amount, clamped at the price floor."""

    amount: float

    def __post_init__(self) -> None:
        if self.amount < 0:
            raise ArgumentError("flat discount amount must be non-negative")


@dataclass(frozen=True)
class FixedDiscount:
    """Riders pay (1 - delta) times the observed fare, uncapped below.

    The driver floor for this mechanism is the aggregate revenue
    constraint, not a per-trip clamp, so the discount stays exact.
    """

    delta: float

    def __post_init__(self) -> None:
        if not (0.0 < self.delta < 1.0):
            raise ArgumentError(f"delta must be in (0, 1), got {self.delta}")


Policy = LinearFarePricer | FlatDiscount | FixedDiscount


def apply_policy(
    trips: Sequence[SurgeAnnotatedTrip],
    policy: Policy,
    price_floor: float = DEFAULT_PRICE_FLOOR,
) -> list[RepricedTrip]:
    """Assign each trip its policy price."""
    if isinstance(policy, LinearFarePricer):
        prices = policy.predict(trips)
    elif isinstance(policy, FlatDiscount):
        prices = [max(price_floor, t.trip.fare - policy.amount) for t in trips]
    elif isinstance(policy, FixedDiscount):
        prices = [(1.0 - policy.delta) * t.trip.fare for t in trips]
    else:
        raise ArgumentError(f"unsupported policy {policy!r}")
    return [RepricedTrip(annotated=t, new_price=float(p)) for t, p in zip(trips, prices)]


def policy_from_json(doc: Mapping) -> Policy:
    """Parse {type: "fairride" | "flat" | "fixed", ...} policy documents."""
    kind = doc.get("type")
    if kind == "flat":
        return FlatDiscount(amount=float(doc["amount"]))
    if kind == "fixed":
        return FixedDiscount(delta=float(doc["delta"]))
    if kind == "fairride":
        return FairRidePricer.from_json_dict(doc["model"])
    if kind == "ols":
        return LinearFarePricer.from_json_dict(doc["model"])
    raise ArgumentError(f"unknown policy type {kind!r}")


# ---------------------------------------------------------------------------
# Demand response


def demand_uplift(old_price: float, new_price: float, e_p: float, n_old: int) -> int:
    """Trips expected after a price change, from elasticity (half-up rounded)."""
    if old_price <= 0:
        raise ArgumentError(f"old_price must be positive, got {old_price}")
    if n_old < 0:
        raise ArgumentError(f"n_old must be non-negative, got {n_old}")
    pct_change = (new_price - old_price) / old_price * 100.0
    n_new = n_old * (1.0 + e_p * pct_change / 100.0)
    return max(0, math.floor(n_new + 0.5))


@dataclass(frozen=True)
class DemandStratum:
    """One (time bucket, location pair) cell of the demand double sum."""

    trip_count: int
    avg_price: float
    modal_surge: float


@dataclass
class DemandResponse:
    """Elasticities by displayed level plus demand strata for one cohort."""

    elasticities: dict[float, float]
    strata: dict[tuple, DemandStratum]

    @property
    def total_trips(self) -> int:
        return sum(s.trip_count for s in self.strata.values())

    @property
    def baseline_revenue(self) -> float:
        return sum(s.trip_count * s.avg_price for s in self.strata.values())


def build_demand_response(
    trips: Iterable[SurgeAnnotatedTrip],
    elasticities: Mapping[float, float],
) -> DemandResponse:
    """Stratify trips by (hour of day, pickup->dropoff location pair)."""
    cells: dict[tuple, list] = {}
    for at in trips:
        t = at.trip
        pickup = t.pickup_area if t.pickup_area is not None else t.pickup_tract
        dropoff = t.dropoff_area if t.dropoff_area is not None else t.dropoff_tract
        key = (t.start_time.hour, (pickup, dropoff))
        acc = cells.setdefault(key, [0, 0.0, {}])
        acc[0] += 1
        acc[1] += t.fare
        acc[2][at.surge_displayed] = acc[2].get(at.surge_displayed, 0) + 1
    if not cells:
        raise DataError("no trips to stratify")
    strata = {}
    for key, (count, fare_sum, level_counts) in sorted(cells.items(), key=lambda kv: str(kv[0])):
        # ties on the modal level break toward the lower level
        modal = max(sorted(level_counts), key=lambda lvl: level_counts[lvl])
        strata[key] = DemandStratum(
            trip_count=count, avg_price=fare_sum / count, modal_surge=modal
        )
    return DemandResponse(elasticities=dict(elasticities), strata=strata)


# ---------------------------------------------------------------------------
# FixedFairRide: constrained grid search over the discount fraction


class ScenarioKind(enum.Enum):
    GOVERNMENT_SUBSIDY = "GOVERNMENT_SUBSIDY"
    PLATFORM_FUNDED = "PLATFORM_FUNDED"


@dataclass(frozen=True)
class PricingScenario:
    """Constraint set for the fixed-discount search.

    GOVERNMENT_SUBSIDY caps the discount at the subsidy ceiling n; the
    platform is made whole, so revenue is unconstrained. PLATFORM_FUNDED
    requires rider-paid revenue to stay at or above both the status quo r
    and the driver floor (trips times the minimum viable trip price).
    """

    kind: ScenarioKind
    n: float | None = None
    p_min: float | None = None
    r: float | None = None
    grid_step: float = 0.01

    def __post_init__(self) -> None:
        if not (0 < self.grid_step < 1):
            raise ArgumentError("grid_step must be in (0, 1)")
        if self.kind is ScenarioKind.GOVERNMENT_SUBSIDY:
            if self.n is None or not (0 < self.n <= 1):
                raise ArgumentError("GOVERNMENT_SUBSIDY requires subsidy ceiling n in (0, 1]")
        elif self.kind is ScenarioKind.PLATFORM_FUNDED:
            if self.p_min is None or self.p_min <= 0:
                raise ArgumentError("PLATFORM_FUNDED requires p_min > 0")
            if self.r is not None and self.r <= 0:
                raise ArgumentError("baseline revenue r must be positive")

    def with_revenue(self, r: float) -> "PricingScenario":
        return PricingScenario(
            kind=self.kind, n=self.n, p_min=self.p_min, r=r, grid_step=self.grid_step
        )

    @classmethod
    def from_json(cls, doc: Mapping) -> "PricingScenario":
        return cls(
            kind=ScenarioKind(doc["kind"]),
            n=doc.get("n"),
            p_min=doc.get("p_min"),
            r=doc.get("r"),
            grid_step=doc.get("grid_step", 0.01),
        )


@dataclass(frozen=True)
class GridPoint:
    delta: float
    eta: int
    revenue: float
    feasible: bool


@dataclass
class DiscountSolution:
    """Chosen discount with the full grid audit behind the choice."""

    delta: float | None
    eta: int
    revenue: float
    feasible: bool
    grid_evaluations: list[GridPoint]
    summary: FairnessSummary | None = None

    def to_json_dict(self) -> dict:
        return {
            "delta": self.delta,
            "eta": self.eta,
            "revenue": self.revenue,
            "feasible": self.feasible,
            "summary": self.summary.to_json_dict() if self.summary else None,
            "grid": [
                {"delta": g.delta, "eta": g.eta, "revenue": g.revenue, "feasible": g.feasible}
                for g in self.grid_evaluations
            ],
        }


def evaluate_discount(
    demand: DemandResponse, delta: float, kind: ScenarioKind
) -> tuple[int, float]:
    """Trips and revenue at one discount level.

    Revenue is rider-paid for platform-funded scenarios and full price
    (rider payment plus subsidy top-up) for government-subsidized ones.
    """
    if not (0.0 <= delta < 1.0):
        raise ArgumentError(f"delta must be in [0, 1), got {delta}")
    eta = 0
    revenue = 0.0
    for stratum in demand.strata.values():
        new_price = (1.0 - delta) * stratum.avg_price
        e_p = elasticity_for_level(demand.elasticities, stratum.modal_surge)
        n_new = demand_uplift(stratum.avg_price, new_price, e_p, stratum.trip_count)
        eta += n_new
        if kind is ScenarioKind.GOVERNMENT_SUBSIDY:
            revenue += n_new * stratum.avg_price
        else:
            revenue += n_new * new_price
    return eta, revenue


def scenario_feasible(scenario: PricingScenario, delta: float, eta: int, revenue: float) -> bool:
    """Exact constraint check for one evaluated grid point."""
    if scenario.kind is ScenarioKind.GOVERNMENT_SUBSIDY:
        return 0.0 < delta < scenario.n
    floor = max(scenario.r, eta * scenario.p_min)
    return revenue >= floor and 0.0 < delta < 1.0


def scenario_grid(scenario: PricingScenario) -> list[float]:
    upper = scenario.n if scenario.kind is ScenarioKind.GOVERNMENT_SUBSIDY else 1.0
    deltas = []
    k = 1
    while True:
        delta = k * scenario.grid_step
        if delta >= upper - 1e-12:
            break
        deltas.append(delta)
        k += 1
    return deltas


def solve_fixedfairride(
    demand: DemandResponse,
    scenario: PricingScenario,
    context: "MarketContext | None" = None,
) -> DiscountSolution:
    """Audited grid sweep for the trip-maximizing feasible discount.

    Ties break toward the larger discount (more rider benefit at equal
    trip count). Infeasible scenarios return feasible=False with the
    complete audit rather than raising.
    """
    if not demand.strata:
        raise DataError("demand response has no strata")
    if scenario.kind is ScenarioKind.PLATFORM_FUNDED and scenario.r is None:
        raise ArgumentError("PLATFORM_FUNDED scenario needs baseline revenue r")

    evaluations: list[GridPoint] = []
    best: GridPoint | None = None
    for delta in scenario_grid(scenario):
        eta, revenue = evaluate_discount(demand, delta, scenario.kind)
        feasible = scenario_feasible(scenario, delta, eta, revenue)
        point = GridPoint(delta=delta, eta=eta, revenue=revenue, feasible=feasible)
        evaluations.append(point)
        if feasible and (best is None or eta >= best.eta):
            best = point

    if best is None:
        return DiscountSolution(
            delta=None, eta=0, revenue=0.0, feasible=False, grid_evaluations=evaluations
        )
    # Constraint honesty: re-validate the winner exactly as stated.
    if not scenario_feasible(scenario, best.delta, best.eta, best.revenue):
        raise EstimationError("solver selected an infeasible point; internal inconsistency")
    summary = None
    if context is not None:
        summary = context.summarize_fixed(best.delta, best.eta, best.revenue)
    return DiscountSolution(
        delta=best.delta,
        eta=best.eta,
        revenue=best.revenue,
        feasible=True,
        grid_evaluations=evaluations,
        summary=summary,
    )


# ---------------------------------------------------------------------------
# Policy evaluation into fairness summaries


@dataclass
class MarketContext:
    """Everything needed to turn a repricing into a Table-1-shaped row
    without touching raw trips again: per-level aggregates for the focus
    cohort, elasticities, populations, and the fixed counts of the
    comparison cohort.
    """

    regions: RegionMap
    levels: dict[float, dict[str, float]]  # level -> num_trips, avg_fare, optional model prices
    e_p_by_level: dict[float, float]
    non_focus_trips: int
    baseline_revenue: float
    focus: CohortLabel = CohortLabel.EDA_TRIP
    mode: SurplusMode = SurplusMode.CUMULATIVE
    min_level_trips: int = 100

    def summarize_prices(self, price_for_level) -> FairnessSummary:
        """Summary under new per-level prices (callable level, stats -> price)."""
        eta = 0
        revenue = 0.0
        new_levels: dict[float, dict[str, float]] = {}
        for level, stats in sorted(self.levels.items()):
            old_price = stats["avg_fare"]
            new_price = price_for_level(level, stats)
            e_p = elasticity_for_level(self.e_p_by_level, level)
            n_new = demand_uplift(old_price, new_price, e_p, int(stats["num_trips"]))
            eta += n_new
            revenue += n_new * new_price
            new_levels[level] = {"num_trips": n_new, "avg_fare": new_price}
        r2 = rideability_from_counts(eta, self.non_focus_trips, self.regions)
        surplus = consumer_surplus_from_levels(
            new_levels, self.e_p_by_level, self.focus, self.mode, self.min_level_trips
        )
        return FairnessSummary(
            r2=r2,
            eta=float(eta),
            surplus=surplus.total_surplus,
            avg_surplus=surplus.average_surplus,
            revenue=revenue,
        )

    def summarize_fixed(self, delta: float, eta: int, revenue: float) -> FairnessSummary:
        """Summary for a fixed-discount solution: trips and revenue come from
        the stratum-level search; surplus is recomputed at level granularity."""
        new_levels = {}
        for level, stats in self.levels.items():
            old_price = stats["avg_fare"]
            new_price = (1.0 - delta) * old_price
            e_p = elasticity_for_level(self.e_p_by_level, level)
            n_new = demand_uplift(old_price, new_price, e_p, int(stats["num_trips"]))
            new_levels[level] = {"num_trips": n_new, "avg_fare": new_price}
        r2 = rideability_from_counts(eta, self.non_focus_trips, self.regions)
        surplus = consumer_surplus_from_levels(
            new_levels, self.e_p_by_level, self.focus, self.mode, self.min_level_trips
        )
        return FairnessSummary(
            r2=r2,
            eta=float(eta),
            surplus=surplus.total_surplus,
            avg_surplus=surplus.average_surplus,
            revenue=revenue,
        )


def evaluate_policy(
    trips: Sequence[SurgeAnnotatedTrip],
    repriced: Sequence[RepricedTrip],
    demand: DemandResponse,
    regions: RegionMap,
    focus: CohortLabel = CohortLabel.EDA_TRIP,
    mode: SurplusMode = SurplusMode.CUMULATIVE,
    min_level_trips: int = 100,
) -> FairnessSummary:
    """Fairness summary for an arbitrary repricing of the focus cohort.

    Demand response is applied at displayed-surge-level granularity: each
    level's average new price against its average observed fare.
    """
    focus_prices: dict[float, list[float]] = {}
    for rt in repriced:
        if rt.annotated.cohort is not focus:
            continue
        acc = focus_prices.setdefault(rt.annotated.surge_displayed, [0.0, 0.0, 0.0])
        acc[0] += 1
        acc[1] += rt.annotated.trip.fare
        acc[2] += rt.new_price
    if not focus_prices:
        raise ArgumentError("repriced trips contain no focus-cohort records")
    non_focus = sum(1 for t in trips if t.cohort is not focus)
    levels = {
        level: {"num_trips": n, "avg_fare": fare_sum / n}
        for level, (n, fare_sum, _) in focus_prices.items()
    }
    new_price_by_level = {
        level: price_sum / n for level, (n, _, price_sum) in focus_prices.items()
    }
    context = MarketContext(
        regions=regions,
        levels=levels,
        e_p_by_level=dict(demand.elasticities),
        non_focus_trips=non_focus,
        baseline_revenue=sum(fs for _, fs, _ in focus_prices.values()),
        focus=focus,
        mode=mode,
        min_level_trips=min_level_trips,
    )
    return context.summarize_prices(lambda level, stats: new_price_by_level[level])
