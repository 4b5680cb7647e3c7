"""Synthetic trip datasets with planted ground truth.

Real releases carry no surge ground truth, so every estimator here is
validated against data where the truth is planted: a known baseline fare
model, known displayed surge per trip, and known density drops at chosen
cutoffs (from which the jump coefficient and elasticity follow
analytically on the same normalized-density scale the estimator uses).

Two within-level layouts:

* "uniform" spreads continuous surge evenly across each displayed level,
  optionally with a declared fractional density drop at specific cutoffs
  (the elasticity oracle).
* "banded" concentrates continuous surge near each level's center. Fare
  noise and $2.50 rounding blur the recovered multiplier by a few percent,
  so recovery fixtures keep planted values away from the 0.05 boundaries
  the same way real platforms quote rounded multipliers.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import IO

import numpy as np

from .errors import ArgumentError, ConfigurationError
from .ingest import DEFAULT_COLUMN_MAP, DEFAULT_TIMESTAMP_FORMAT

WITHIN_LEVEL_MODES = ("uniform", "banded")


@dataclass
class SynthConfig:
    seed: int = 0
    n_trips: int = 10_000
    baseline_intercept: float = 2.50
    baseline_per_second: float = 0.002
    baseline_per_mile: float = 1.20
    surge_distribution: dict[float, float] = field(
        default_factory=lambda: {1.0: 0.70, 1.1: 0.15, 1.2: 0.08, 1.3: 0.04, 1.4: 0.02, 1.5: 0.01}
    )
    discontinuity_drops: dict[float, float] = field(default_factory=dict)
    eda_share: float = 0.35
    fare_noise_sigma: float = 0.0
    fare_rounding: float = 2.50
    duration_range: tuple[float, float] = (600.0, 3600.0)
    distance_range: tuple[float, float] = (1.0, 15.0)
    within_level: str = "uniform"
    level_jitter: float = 0.005
    no_surge_point_mass: bool = True  # uniform mode: the 1.0x level sits at exactly 1.0
    shared_share: float = 0.0
    n_eda_areas: int = 6
    n_non_eda_areas: int = 8
    start_date: datetime = field(default_factory=lambda: datetime(2021, 1, 1))
    end_date: datetime = field(default_factory=lambda: datetime(2021, 10, 31))

    def validate(self) -> None:
        if self.n_trips <= 0:
            raise ConfigurationError("n_trips must be positive")
        if self.within_level not in WITHIN_LEVEL_MODES:
            raise ConfigurationError(f"within_level must be one of {WITHIN_LEVEL_MODES}")
        total = sum(self.surge_distribution.values())
        if abs(total - 1.0) > 1e-9:
            raise ConfigurationError(f"surge shares must sum to 1, got {total}")
        if any(share < 0 for share in self.surge_distribution.values()):
            raise ConfigurationError("surge shares must be non-negative")
        if any(not (0 <= d < 1) for d in self.discontinuity_drops.values()):
            raise ConfigurationError("density drops must lie in [0, 1)")
        if not (0 <= self.eda_share <= 1):
            raise ConfigurationError("eda_share must lie in [0, 1]")
        if self.fare_noise_sigma < 0 or self.fare_rounding < 0:
            raise ConfigurationError("noise and rounding must be non-negative")
        for cutoff in self.discontinuity_drops:
            tenth_x2 = round(cutoff * 20)
            if tenth_x2 % 2 == 0 or tenth_x2 < 21:
                raise ConfigurationError(f"cutoff {cutoff} is not a level midpoint above 1.0")
            if tenth_x2 == 21 and self.no_surge_point_mass and self.within_level == "uniform":
                raise ConfigurationError(
                    "cannot plant a drop at 1.05: the no-surge level is a point mass "
                    "(set no_surge_point_mass=False to spread it)"
                )

    @classmethod
    def from_json(cls, doc: dict) -> "SynthConfig":
        kwargs = dict(doc)
        if "surge_distribution" in kwargs:
            kwargs["surge_distribution"] = {
                float(k): float(v) for k, v in kwargs["surge_distribution"].items()
            }
        if "discontinuity_drops" in kwargs:
            kwargs["discontinuity_drops"] = {
                float(k): float(v) for k, v in kwargs["discontinuity_drops"].items()
            }
        for key in ("duration_range", "distance_range"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        for key in ("start_date", "end_date"):
            if key in kwargs:
                kwargs[key] = datetime.fromisoformat(kwargs[key])
        return cls(**kwargs)


@dataclass
class SynthResult:
    trips_csv: str | None
    ground_truth: dict
    n_trips: int


def _half_masses(config: SynthConfig) -> dict[int, tuple[float, float]]:
    """Split each displayed level's share across its two halves.

    The lowest level keeps all mass in [level, level+0.05) because
    continuous surge never drops below 1.0. A declared drop at a cutoff
    scales the density entering the right side relative to the density
    leaving the left side; infeasible combinations (a drop demanding more
    mass than the next level's share) are configuration errors.
    """
    tenths = sorted(round(level * 10) for level in config.surge_distribution)
    shares = {round(level * 10): share for level, share in config.surge_distribution.items()}
    drops = {round(cutoff * 20): drop for cutoff, drop in config.discontinuity_drops.items()}
    masses: dict[int, tuple[float, float]] = {}
    for i, tenth in enumerate(tenths):
        share = shares[tenth]
        if tenth == 10:
            left, right = 0.0, share
        else:
            left, right = share / 2.0, share / 2.0
        cutoff_below = tenth * 2 - 1
        if cutoff_below in drops:
            prev = tenth - 1
            if prev not in masses:
                raise ConfigurationError(
                    f"drop declared at {cutoff_below / 20} but level {prev / 10} has no share"
                )
            left = (1.0 - drops[cutoff_below]) * masses[prev][1]
            right = share - left
            if right < -1e-12:
                raise ConfigurationError(
                    f"drop at {cutoff_below / 20} needs more mass than level {tenth / 10} has"
                )
            right = max(right, 0.0)
        masses[tenth] = (left, right)
    for cutoff_x20 in drops:
        upper = (cutoff_x20 + 1) // 2
        if upper not in masses:
            raise ConfigurationError(
                f"drop declared at {cutoff_x20 / 20} but level {upper / 10} has no share"
            )
    return masses


def _planted_cutoffs(config: SynthConfig, masses: dict[int, tuple[float, float]]) -> dict:
    """Analytic jump and elasticity at every adjacent-level cutoff."""
    out: dict[str, dict] = {}
    tenths = sorted(masses)
    for lower, upper in zip(tenths, tenths[1:]):
        if upper - lower != 1:
            continue
        if lower == 10 and config.no_surge_point_mass:
            continue  # point mass has no density ratio to record
        d_left = masses[lower][1]  # densities share a 0.05 half-width
        d_right = masses[upper][0]
        if max(d_left, d_right) <= 0:
            continue
        alpha = (d_right - d_left) / max(d_left, d_right)
        surge_left = lower / 10.0
        n_p = config.surge_distribution.get(surge_left, 0.0)
        delta_p = (0.1 / surge_left) * 100.0
        e_p = (alpha / n_p) / delta_p if n_p > 0 else None
        cutoff = (lower + 0.5) / 10.0
        out[f"{cutoff:.2f}"] = {
            "cutoff": cutoff,
            "alpha": alpha,
            "surge_left": surge_left,
            "n_p": n_p,
            "delta_p": delta_p,
            "e_p": e_p,
        }
    return out


def _sample_surge(config: SynthConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Continuous surge values and their planted displayed tenths."""
    tenths = np.array(sorted(round(level * 10) for level in config.surge_distribution))
    shares = np.array(
        [config.surge_distribution[t / 10.0] for t in tenths], dtype=np.float64
    )
    shares = shares / shares.sum()
    level_idx = rng.choice(len(tenths), size=config.n_trips, p=shares)
    level_tenths = tenths[level_idx]
    centers = level_tenths / 10.0
    position = rng.random(config.n_trips)

    if config.within_level == "banded":
        jitter = config.level_jitter
        offset = jitter * (2.0 * position - 1.0)
        # the no-surge level only jitters upward: multipliers start at 1.0
        offset = np.where(level_tenths == 10, jitter * position, offset)
        surge = centers + offset
    else:
        masses = _half_masses(config)
        p_left = np.array(
            [
                masses[t][0] / (masses[t][0] + masses[t][1]) if masses[t][0] + masses[t][1] > 0 else 0.0
                for t in tenths
            ]
        )
        go_left = rng.random(config.n_trips) < p_left[level_idx]
        inner = rng.random(config.n_trips)
        surge = np.where(
            go_left,
            centers - 0.05 + 0.05 * inner,
            centers + 0.05 * inner,
        )
        if config.no_surge_point_mass:
            # no surge means a multiplier of exactly 1; this is also what
            # gives the robust baseline fit a clean inlier plane
            surge = np.where(level_tenths == 10, 1.0, surge)
    surge = np.maximum(surge, 1.0)
    return surge, level_tenths


def sample_surge(config: SynthConfig, rng: np.random.Generator | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Draw (continuous surge, displayed level) pairs for a config.

    Same sampler the full generator uses; handy when only the surge
    distribution matters and the CSV machinery would be dead weight.
    """
    config.validate()
    if rng is None:
        rng = np.random.default_rng(config.seed)
    surge, level_tenths = _sample_surge(config, rng)
    return surge, level_tenths / 10.0


def generate(
    config: SynthConfig,
    trips_out: IO[str] | None = None,
    truth_out: IO[str] | None = None,
) -> SynthResult:
    """Emit a trips CSV in the ingest default schema plus a ground-truth doc.

    Byte-identical for identical configs (fixed seed, fixed draw order).
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    n = config.n_trips

    surge, level_tenths = _sample_surge(config, rng)
    # quantize to the emitted CSV precision so fares derive exactly from the
    # columns a consumer will parse back
    durations = np.round(rng.uniform(*config.duration_range, size=n))
    distances = np.round(rng.uniform(*config.distance_range, size=n), 2)
    base = (
        config.baseline_intercept
        + config.baseline_per_second * durations
        + config.baseline_per_mile * distances
    )
    noise = rng.standard_normal(n) * config.fare_noise_sigma if config.fare_noise_sigma else None
    fares = surge * base * (1.0 + noise) if noise is not None else surge * base
    if config.fare_rounding > 0:
        q = config.fare_rounding
        fares = np.floor(fares / q + 0.5) * q
    fares = np.maximum(fares, 0.0)

    eda = rng.random(n) < config.eda_share
    eda_variant = rng.integers(0, 3, size=n)  # 0 pickup, 1 dropoff, 2 both
    eda_pick = rng.integers(0, config.n_eda_areas, size=n)
    eda_drop = rng.integers(0, config.n_eda_areas, size=n)
    non_pick = rng.integers(0, config.n_non_eda_areas, size=n)
    non_drop = rng.integers(0, config.n_non_eda_areas, size=n)
    shared = rng.random(n) < config.shared_share if config.shared_share > 0 else np.zeros(n, bool)

    span = config.end_date - config.start_date
    quarter_hours = max(1, int(span.total_seconds() // 900))
    start_offsets = rng.integers(0, quarter_hours, size=n)

    eda_areas = [f"E{i:02d}" for i in range(config.n_eda_areas)]
    non_eda_areas = [f"N{i:02d}" for i in range(config.n_non_eda_areas)]

    header = [
        DEFAULT_COLUMN_MAP[k]
        for k in (
            "trip_id",
            "start_time",
            "end_time",
            "duration",
            "distance",
            "pickup_tract",
            "dropoff_tract",
            "pickup_area",
            "dropoff_area",
            "fare",
            "tip",
            "extra_charges",
            "shared_authorized",
        )
    ]

    own_buffer = trips_out is None
    buffer = io.StringIO() if own_buffer else trips_out
    buffer.write(",".join(header) + "\n")
    fmt = DEFAULT_TIMESTAMP_FORMAT
    base_dt = config.start_date
    trip_ids: list[str] = []
    for i in range(n):
        start = base_dt + timedelta(seconds=int(start_offsets[i]) * 900)
        end = start + timedelta(seconds=round(float(durations[i])))
        if eda[i]:
            pick = eda_areas[eda_pick[i]] if eda_variant[i] in (0, 2) else non_eda_areas[non_pick[i]]
            drop = eda_areas[eda_drop[i]] if eda_variant[i] in (1, 2) else non_eda_areas[non_drop[i]]
        else:
            pick = non_eda_areas[non_pick[i]]
            drop = non_eda_areas[non_drop[i]]
        trip_id = f"S{config.seed}-{i:07d}"
        trip_ids.append(trip_id)
        buffer.write(
            f"{trip_id},{start.strftime(fmt)},{end.strftime(fmt)},"
            f"{durations[i]:.0f},{distances[i]:.2f},"
            f"T{pick},T{drop},{pick},{drop},"
            f"{fares[i]:.2f},0.00,0.00,{'true' if shared[i] else 'false'}\n"
        )

    displayed = level_tenths / 10.0
    masses = _half_masses(config) if config.within_level == "uniform" else {}
    truth = {
        "config": {
            "seed": config.seed,
            "n_trips": n,
            "baseline": {
                "intercept": config.baseline_intercept,
                "per_second": config.baseline_per_second,
                "per_mile": config.baseline_per_mile,
            },
            "within_level": config.within_level,
            "fare_noise_sigma": config.fare_noise_sigma,
            "fare_rounding": config.fare_rounding,
            "eda_share": config.eda_share,
        },
        "per_trip": {
            "trip_id": trip_ids,
            "surge_continuous": [round(float(s), 6) for s in surge],
            "surge_displayed": [round(float(d), 1) for d in displayed],
            "eda": [bool(e) for e in eda],
        },
        "per_cutoff": _planted_cutoffs(config, masses) if masses else {},
        "level_shares": {
            f"{t / 10.0:.1f}": float(np.mean(level_tenths == t))
            for t in sorted(set(level_tenths.tolist()))
        },
        "regions": {
            "eda_tracts": [f"T{a}" for a in eda_areas],
            "eda_areas": eda_areas,
        },
    }
    if truth_out is not None:
        json.dump(truth, truth_out, indent=2)

    return SynthResult(
        trips_csv=buffer.getvalue() if own_buffer else None,
        ground_truth=truth,
        n_trips=n,
    )
