"""Price elasticity at surge discontinuities and consumer surplus.

Riders near a displayed-level cutoff (say 1.45, where 1.4x becomes 1.5x)
are shown a 10%-of-level price jump for near-identical service, so the
drop in completed-trip density just right of the cutoff identifies the
demand response. Public trip records carry no request-level outcomes, so
ride probability is proxied by normalized per-bin trip counts inside a
narrow window around each cutoff; the discontinuity in that density is
exactly the drop the regression's jump coefficient captures. This proxy is
the only estimator constructible from trips-only data and is the main
caveat on every number downstream.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.linalg

from .errors import ArgumentError, EstimationError
from .types import CohortLabel, SurgeAnnotatedTrip

LPM_REGRESSORS = ("const", "i1*i2", "i1", "(1-i1)*i2", "(1-i2)*x1", "i2*x1")

DEFAULT_MIN_LEVEL_TRIPS = 100  # levels thinner than this are excluded everywhere


class SurplusMode(enum.Enum):
    """Inner-sum convention for the surplus accumulation.

    CUMULATIVE sums every higher level for each base level; SUCCESSIVE
    restricts to the immediately adjacent level. Cumulative is the default.
    """

    CUMULATIVE = "cumulative"
    SUCCESSIVE = "successive"


@dataclass(frozen=True)
class DiscontinuityWindow:
    """Estimation window around one displayed-surge cutoff.

    cutoff must be a midpoint between adjacent displayed levels (x.x5);
    bin_width must divide the window into an even number of bins so no bin
    straddles the cutoff.
    """

    cutoff: float
    half_width: float = 0.05
    near_band: float = 0.01
    bin_width: float = 0.002

    def __post_init__(self) -> None:
        if not (0 < self.near_band <= self.half_width):
            raise ArgumentError("need 0 < near_band <= half_width")
        n_bins = self.half_width / self.bin_width
        if abs(n_bins - round(n_bins)) > 1e-9 or round(n_bins) < 1:
            raise ArgumentError("bin_width must divide half_width evenly")
        # Interior points just inside each edge must discretize to two
        # distinct levels, i.e. the cutoff is a real displayed-level
        # boundary. The offset must exceed the discretizer's 1e-6 float
        # pre-rounding.
        left = discretized_level(self.cutoff - self.half_width + 1e-4)
        right = discretized_level(self.cutoff + self.half_width - 1e-4)
        if left == right:
            raise ArgumentError(
                f"window [{self.cutoff - self.half_width}, {self.cutoff + self.half_width}] "
                "does not span two displayed levels"
            )

    @property
    def bins_per_side(self) -> int:
        return round(self.half_width / self.bin_width)


def discretized_level(surge: float) -> float:
    return float(np.floor(np.round(surge * 10.0, 6) + 0.5) / 10.0)


@dataclass(frozen=True, slots=True)
class BinObservation:
    """One RDD bin: center surge, normalized count, cutoff indicators."""

    x1: float
    y: float
    i1: int
    i2: int


@dataclass(frozen=True)
class LpmFit:
    """Exact least-squares fit of the jump regression over bin observations."""

    alpha: float
    beta0: float
    beta1: float
    beta2: float
    beta3: float
    beta4: float
    residual_variance: float
    n_obs: int


@dataclass(frozen=True)
class ElasticityEstimate:
    """Per-cutoff elasticity: alpha scaled by level share and price step."""

    surge_left: float
    alpha: float
    n_p: float
    delta_p: float
    e_p: float
    n_obs: int


@dataclass
class SurplusReport:
    """Consumer surplus for one cohort, per displayed level and total."""

    cohort: CohortLabel
    per_level: dict[float, dict[str, float]]
    total_surplus: float
    average_surplus: float
    mode: SurplusMode
    excluded_levels: dict[float, int] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "cohort": self.cohort.value,
            "per_level": {
                f"{level:.1f}": stats for level, stats in sorted(self.per_level.items())
            },
            "total_surplus": self.total_surplus,
            "average_surplus": self.average_surplus,
            "mode": self.mode.value,
            "excluded_levels": {
                f"{level:.1f}": count for level, count in sorted(self.excluded_levels.items())
            },
        }


def build_rdd_dataset(
    trips: Iterable[SurgeAnnotatedTrip] | np.ndarray,
    window: DiscontinuityWindow,
) -> list[BinObservation]:
    """Bin continuous surge inside the window and normalize counts.

    Accepts annotated trips or a raw array of continuous surge values.
    Requires at least one trip on each side of the cutoff.
    """
    if isinstance(trips, np.ndarray):
        surge = trips.astype(np.float64)
    else:
        surge = np.array([t.surge_continuous for t in trips], dtype=np.float64)
    c, hw, bw = window.cutoff, window.half_width, window.bin_width
    in_window = (surge >= c - hw) & (surge < c + hw)
    surge = surge[in_window]

    per_side = window.bins_per_side
    # Index bins relative to the cutoff so no float boundary lands a trip in
    # the wrong half: idx in [-per_side, per_side).
    idx = np.floor((surge - c) / bw).astype(np.int64)
    idx = np.clip(idx, -per_side, per_side - 1)
    if not np.any(idx < 0):
        raise EstimationError(f"no trips left of cutoff {c}")
    if not np.any(idx >= 0):
        raise EstimationError(f"no trips right of cutoff {c}")

    counts = np.bincount(idx + per_side, minlength=2 * per_side).astype(np.float64)
    y = counts / counts.max()
    observations = []
    for k in range(2 * per_side):
        rel = k - per_side  # bin index relative to cutoff
        center = c + (rel + 0.5) * bw
        i2 = 1 if rel >= 0 else 0
        i1 = 1 if abs(rel + 0.5) * bw <= window.near_band + 1e-12 else 0
        observations.append(BinObservation(x1=float(center), y=float(y[k]), i1=i1, i2=i2))
    return observations


def lpm_design_matrix(bins: Sequence[BinObservation]) -> tuple[np.ndarray, np.ndarray]:
    """Design matrix of the jump regression.

    The running variable enters centered at the cutoff. Raw surge values
    (~1.4) against a 0.1-wide window make the slope columns nearly
    collinear with the side indicators and amplify bin noise into the jump
    coefficient by ~40x, which no realistic sample size can pay for;
    centering is the standard cure and leaves the jump coefficient of a
    pure density step unchanged.
    """
    x1 = np.array([b.x1 for b in bins])
    y = np.array([b.y for b in bins])
    i1 = np.array([b.i1 for b in bins], dtype=np.float64)
    i2 = np.array([b.i2 for b in bins], dtype=np.float64)
    left = x1[i2 == 0]
    right = x1[i2 == 1]
    if left.size and right.size:
        center = (left.max() + right.min()) / 2.0
    else:
        center = float(np.mean(x1))
    x = x1 - center
    design = np.column_stack(
        [
            np.ones(len(bins)),
            i1 * i2,
            i1,
            (1.0 - i1) * i2,
            (1.0 - i2) * x,
            i2 * x,
        ]
    )
    return design, y


def fit_lpm(bins: Sequence[BinObservation]) -> LpmFit:
    """Exact OLS of the jump regression; the i1*i2 coefficient is alpha."""
    if len(bins) < 10:
        raise EstimationError(f"need at least 10 bin observations, got {len(bins)}")
    design, y = lpm_design_matrix(bins)
    rank = np.linalg.matrix_rank(design)
    if rank < design.shape[1]:
        _, _, pivots = scipy.linalg.qr(design, pivoting=True, mode="economic")
        redundant = sorted(LPM_REGRESSORS[i] for i in pivots[rank:])
        raise EstimationError(f"design matrix is rank deficient; collinear columns: {redundant}")
    coef, residual_ss, _, _ = np.linalg.lstsq(design, y, rcond=None)
    dof = len(bins) - design.shape[1]
    if residual_ss.size:
        variance = float(residual_ss[0]) / dof if dof > 0 else 0.0
    else:
        variance = float(np.sum((y - design @ coef) ** 2)) / dof if dof > 0 else 0.0
    return LpmFit(
        alpha=float(coef[1]),
        beta0=float(coef[0]),
        beta1=float(coef[2]),
        beta2=float(coef[3]),
        beta3=float(coef[4]),
        beta4=float(coef[5]),
        residual_variance=variance,
        n_obs=len(bins),
    )


def estimate_elasticity(fit: LpmFit, surge_left: float, n_p: float) -> ElasticityEstimate:
    """Scale the fitted jump into an elasticity at this cutoff."""
    if n_p <= 0:
        raise ArgumentError(f"n_p must be positive, got {n_p}")
    delta_p = (0.1 / surge_left) * 100.0
    e_p = (fit.alpha / n_p) / delta_p
    return ElasticityEstimate(
        surge_left=surge_left,
        alpha=fit.alpha,
        n_p=n_p,
        delta_p=delta_p,
        e_p=e_p,
        n_obs=fit.n_obs,
    )


@dataclass
class ElasticityTable:
    """Estimates keyed by the upper displayed level of each cutoff."""

    estimates: dict[float, ElasticityEstimate]
    skipped: list[tuple[float, str]] = field(default_factory=list)

    def e_p(self, level: float) -> float:
        return elasticity_for_level(
            {lvl: est.e_p for lvl, est in self.estimates.items()}, level
        )


def estimate_elasticities(
    trips: Sequence[SurgeAnnotatedTrip],
    half_width: float = 0.05,
    near_band: float = 0.01,
    bin_width: float = 0.002,
    min_level_trips: int = DEFAULT_MIN_LEVEL_TRIPS,
) -> ElasticityTable:
    """Estimate an elasticity at every observed surge discontinuity.

    Each displayed level above the minimum observed gets the estimate from
    the cutoff directly below it (the jump a rider crosses to reach that
    level). Cutoffs that cannot be estimated are reported, never
    interpolated.
    """
    if not trips:
        raise ArgumentError("no trips to estimate from")
    surge = np.array([t.surge_continuous for t in trips], dtype=np.float64)
    displayed = np.array([t.surge_displayed for t in trips], dtype=np.float64)
    total = len(trips)
    tenths_arr = np.round(displayed * 10).astype(int)
    unique, counts = np.unique(tenths_arr, return_counts=True)
    counts_by_tenth = {int(t): int(c) for t, c in zip(unique, counts)}
    levels = sorted(counts_by_tenth)
    estimates: dict[float, ElasticityEstimate] = {}
    skipped: list[tuple[float, str]] = []
    for tenth in levels:
        if tenth == levels[0]:
            continue  # lowest level has no cutoff below it in the data
        level = tenth / 10.0
        left_level = (tenth - 1) / 10.0
        cutoff = (tenth - 0.5) / 10.0
        n_at_level = int(counts_by_tenth.get(tenth, 0))
        left_count = int(counts_by_tenth.get(tenth - 1, 0))
        if min_level_trips and (n_at_level < min_level_trips or left_count < min_level_trips):
            skipped.append((cutoff, f"fewer than {min_level_trips} trips at an adjacent level"))
            continue
        window = DiscontinuityWindow(
            cutoff=cutoff, half_width=half_width, near_band=near_band, bin_width=bin_width
        )
        try:
            bins = build_rdd_dataset(surge, window)
            fit = fit_lpm(bins)
        except EstimationError as exc:
            skipped.append((cutoff, str(exc)))
            continue
        n_p = left_count / total
        estimates[level] = estimate_elasticity(fit, surge_left=left_level, n_p=n_p)
    return ElasticityTable(estimates=estimates, skipped=skipped)


def elasticity_for_level(e_p_by_level: Mapping[float, float], level: float) -> float:
    """Elasticity applicable to a displayed level.

    Levels without their own cutoff estimate (notably the no-surge 1.0x
    level) borrow the nearest estimated level above, falling back to the
    nearest below at the top of the range.
    """
    if not e_p_by_level:
        raise EstimationError("no elasticities available")
    if level in e_p_by_level:
        return e_p_by_level[level]
    above = [lvl for lvl in e_p_by_level if lvl > level]
    if above:
        return e_p_by_level[min(above)]
    return e_p_by_level[max(e_p_by_level)]


def level_aggregates(
    trips: Iterable[SurgeAnnotatedTrip],
) -> dict[float, dict[str, float]]:
    """Per displayed level: trip count and average fare."""
    sums: dict[float, list[float]] = {}
    for t in trips:
        acc = sums.setdefault(t.surge_displayed, [0.0, 0.0])
        acc[0] += 1
        acc[1] += t.trip.fare
    return {
        level: {"num_trips": n, "avg_fare": total / n}
        for level, (n, total) in sorted(sums.items())
    }


def consumer_surplus_from_levels(
    levels: Mapping[float, Mapping[str, float]],
    e_p_by_level: Mapping[float, float],
    cohort: CohortLabel,
    mode: SurplusMode = SurplusMode.CUMULATIVE,
    min_level_trips: int = DEFAULT_MIN_LEVEL_TRIPS,
) -> SurplusReport:
    """Accumulate surplus from per-level aggregates.

    Elasticity magnitudes make every contribution non-negative: a dollar of
    surplus is the willingness-to-pay headroom revealed by riders who kept
    riding across a price jump.
    """
    included = {
        level: stats for level, stats in levels.items() if stats["num_trips"] >= min_level_trips
    }
    excluded = {
        level: int(stats["num_trips"])
        for level, stats in levels.items()
        if stats["num_trips"] < min_level_trips
    }
    if not included:
        return SurplusReport(
            cohort=cohort,
            per_level={},
            total_surplus=0.0,
            average_surplus=0.0,
            mode=mode,
            excluded_levels=excluded,
        )
    tenths = sorted(round(level * 10) for level in included)
    min_tenth = tenths[0]
    for tenth in tenths:
        if tenth > min_tenth and (tenth / 10.0) not in e_p_by_level:
            raise EstimationError(f"missing elasticity for displayed level {tenth / 10.0:.1f}")

    per_level: dict[float, dict[str, float]] = {}
    total = 0.0
    for s_tenth in tenths:
        s = s_tenth / 10.0
        avg_fare_s = included[s]["avg_fare"]
        if mode is SurplusMode.SUCCESSIVE:
            higher = [s_tenth + 1] if (s_tenth + 1) in tenths else []
        else:
            higher = [t for t in tenths if t > s_tenth]
        contribution = 0.0
        for i_tenth in higher:
            i = i_tenth / 10.0
            # Integer tenths keep the percent step exact (10% at 1.0 -> 1.1).
            pct = (i_tenth - s_tenth) * 100.0 / s_tenth
            contribution += (
                abs(e_p_by_level[i]) * included[i]["num_trips"] * pct * avg_fare_s
            )
        per_level[s] = {
            "num_trips": included[s]["num_trips"],
            "avg_fare": avg_fare_s,
            "surplus": contribution,
        }
        total += contribution
    n_trips = sum(stats["num_trips"] for stats in included.values())
    return SurplusReport(
        cohort=cohort,
        per_level=per_level,
        total_surplus=total,
        average_surplus=total / n_trips if n_trips else 0.0,
        mode=mode,
        excluded_levels=excluded,
    )


def consumer_surplus(
    trips: Sequence[SurgeAnnotatedTrip],
    elasticities: Mapping[float, ElasticityEstimate] | Mapping[float, float],
    mode: SurplusMode = SurplusMode.CUMULATIVE,
    cohort: CohortLabel | None = None,
    min_level_trips: int = DEFAULT_MIN_LEVEL_TRIPS,
) -> SurplusReport:
    """Total and per-level consumer surplus for one cohort's trips."""
    if cohort is None:
        cohorts = {t.cohort for t in trips}
        if len(cohorts) > 1:
            raise ArgumentError("trips span multiple cohorts; pass cohort explicitly")
        cohort = cohorts.pop() if cohorts else CohortLabel.EDA_TRIP
    e_p_by_level = {
        level: (est.e_p if isinstance(est, ElasticityEstimate) else float(est))
        for level, est in elasticities.items()
    }
    return consumer_surplus_from_levels(
        level_aggregates(trips), e_p_by_level, cohort, mode, min_level_trips
    )
