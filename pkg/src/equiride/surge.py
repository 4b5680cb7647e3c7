"""Infer latent surge multipliers via robust baseline-fare regression.

Trips priced with no surge are the inlier population of a linear fare model
in duration and distance; surged trips are the outliers. A RANSAC sweep
finds the inlier consensus, a least-squares refit on that consensus gives
the baseline model, and each trip's continuous surge is its fare over the
predicted baseline, clamped at 1.0 and discretized to the displayed 0.1
steps riders actually see.

The $2.50 fare rounding in the source data injects up to +/- $1.25 of noise
per trip; that rounding, not metering noise, dominates the error budget for
short cheap trips.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import lsq_linear
from sklearn.base import BaseEstimator, RegressorMixin

from .errors import ArgumentError, DataError
from .types import CohortLabel, SurgeAnnotatedTrip, TripRecord
from .validation import as_float_array, check_fitted, check_min_samples

MIN_FIT_TRIPS = 50

THRESHOLD_RULES = ("mad", "absolute")

# 1.4826 * MAD estimates a Gaussian sigma robustly; the factor widens the
# band enough to absorb the $2.50 fare rounding.
MAD_TO_SIGMA = 1.4826


def discretize_surge(surge_continuous: float) -> float:
    """Round a continuous surge to the nearest displayed 0.1 level, half-up."""
    if surge_continuous < 1.0:
        raise ArgumentError(f"surge must be >= 1.0, got {surge_continuous}")
    return float(_discretize_array(np.asarray([surge_continuous]))[0])


def _discretize_array(surge: np.ndarray) -> np.ndarray:
    # Half-up at the .x5 midpoint. Pre-rounding at 1e-6 removes binary float
    # noise (1.45 stored as 1.4499...9) without disturbing real data, which
    # carries at most ~1e-4 of meaningful precision.
    levels = np.floor(np.round(surge * 10.0, 6) + 0.5) / 10.0
    return np.maximum(levels, 1.0)


@dataclass
class AnnotationResult:
    """Annotated trips plus the count excluded for non-positive baselines."""

    trips: list[SurgeAnnotatedTrip]
    excluded: int


class BaselineFareRansac(BaseEstimator, RegressorMixin):
    """RANSAC regressor for the no-surge baseline fare.

    Model: fare ~ intercept + per_second * duration + per_mile * distance.
    The intercept absorbs base fare plus booking fee. Each iteration fits a
    minimal random sample; the candidate maximizing the inlier count at a
    single fixed threshold wins and is refit by least squares on its inlier
    set. Deterministic for a fixed seed.

    The threshold must be one fixed dollar value across candidates (a
    per-candidate threshold would let a sloppy fit with a wide residual
    spread out-count the true consensus), so rule "mad" takes the smallest
    robust residual spread any candidate achieves as the noise scale and
    multiplies it by threshold_factor. Surge only ever raises fares, so
    the spread is measured on the negative residual side, which stays
    clean even when surged trips outnumber no-surge trips; a plain MAD
    would inflate past 50% contamination.

    Parameters
    ----------
    iterations : number of random minimal samples to try.
    sample_size : rows per minimal sample (3-parameter model; 10 is plenty).
    threshold_rule : "mad" as above; "absolute" uses threshold_value dollars.
    threshold_factor : multiplier on the robust sigma for rule "mad".
    threshold_value : inlier threshold in dollars for rule "absolute".
    seed : RNG seed; identical inputs and seed give bit-identical fits.
    """

    def __init__(
        self,
        iterations: int = 200,
        sample_size: int = 10,
        threshold_rule: str = "mad",
        threshold_factor: float = 2.5,
        threshold_value: float | None = None,
        seed: int = 0,
    ):
        self.iterations = iterations
        self.sample_size = sample_size
        self.threshold_rule = threshold_rule
        self.threshold_factor = threshold_factor
        self.threshold_value = threshold_value
        self.seed = seed

    # fitted attributes
    intercept_: float
    per_second_: float
    per_mile_: float
    inlier_threshold_: float
    inlier_mask_: np.ndarray
    inlier_fraction_: float
    n_samples_: int

    def fit(self, X, y) -> "BaselineFareRansac":
        """Fit on X = [duration_seconds, distance_miles] columns, y = fare."""
        if self.threshold_rule not in THRESHOLD_RULES:
            raise ArgumentError(f"threshold_rule must be one of {THRESHOLD_RULES}")
        if self.threshold_rule == "absolute" and not self.threshold_value:
            raise ArgumentError("threshold_rule 'absolute' requires threshold_value")
        X = as_float_array(X, "X", ndim=2)
        y = as_float_array(y, "y", ndim=1)
        if X.shape[1] != 2:
            raise ArgumentError(f"X must have 2 columns (duration, distance), got {X.shape[1]}")
        check_min_samples(len(y), MIN_FIT_TRIPS, "trips with positive duration and distance")

        n = len(y)
        design = np.column_stack([np.ones(n), X])
        rng = np.random.default_rng(self.seed)

        candidates = []
        smallest_mad = np.inf
        for _ in range(self.iterations):
            coef = self._fit_minimal_sample(design, y, rng)
            candidates.append(coef)
            if self.threshold_rule == "mad":
                residuals = y - design @ coef
                negative = residuals[residuals < 0.0]
                if negative.size >= 10:
                    mad = float(np.median(-negative))
                else:
                    mad = float(np.median(np.abs(residuals - np.median(residuals))))
                smallest_mad = min(smallest_mad, mad)

        if self.threshold_rule == "absolute":
            threshold = float(self.threshold_value)
        else:
            threshold = self.threshold_factor * MAD_TO_SIGMA * smallest_mad
        if threshold <= 0.0:
            # Degenerate spread (e.g. exact synthetic fares): accept any
            # residual at float-noise scale.
            threshold = 1e-9 * max(1.0, float(np.max(np.abs(y))))

        best_count = -1
        best_mask: np.ndarray | None = None
        for coef in candidates:
            mask = np.abs(y - design @ coef) <= threshold
            count = int(mask.sum())
            if count > best_count:
                best_count = count
                best_mask = mask

        assert best_mask is not None
        best_threshold = threshold
        if best_count < 3:
            raise DataError("RANSAC found no usable consensus set")
        coef = self._refit(design[best_mask], y[best_mask])
        self.intercept_ = float(coef[0])
        self.per_second_ = float(coef[1])
        self.per_mile_ = float(coef[2])
        self.inlier_threshold_ = float(best_threshold)
        self.inlier_mask_ = best_mask
        self.inlier_fraction_ = best_count / n
        self.n_samples_ = n
        return self

    def _fit_minimal_sample(self, design: np.ndarray, y: np.ndarray, rng) -> np.ndarray:
        # Collinear draws (e.g. identical trips) are resampled, never surfaced.
        for _ in range(100):
            idx = rng.choice(len(y), size=min(self.sample_size, len(y)), replace=False)
            coef, _, rank, _ = np.linalg.lstsq(design[idx], y[idx], rcond=None)
            if rank == design.shape[1]:
                return coef
        raise DataError("could not draw a non-degenerate minimal sample")

    @staticmethod
    def _refit(design: np.ndarray, y: np.ndarray) -> np.ndarray:
        coef, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
        if coef[1] >= 0.0 and coef[2] >= 0.0:
            return coef
        # Fares must not decrease with duration or distance; project onto
        # the constrained solution only in the rare degenerate fit.
        bounds = (np.array([-np.inf, 0.0, 0.0]), np.array([np.inf, np.inf, np.inf]))
        return lsq_linear(design, y, bounds=bounds).x

    def predict(self, X) -> np.ndarray:
        check_fitted(self, "inlier_mask_")
        X = as_float_array(X, "X", ndim=2)
        return self.intercept_ + self.per_second_ * X[:, 0] + self.per_mile_ * X[:, 1]

    def to_json_dict(self) -> dict:
        check_fitted(self, "inlier_mask_")
        return {
            "intercept": self.intercept_,
            "per_second": self.per_second_,
            "per_mile": self.per_mile_,
            "inlier_threshold": self.inlier_threshold_,
            "inlier_fraction": self.inlier_fraction_,
            "inlier_count": int(self.inlier_mask_.sum()),
            "n_samples": self.n_samples_,
            "seed": self.seed,
            "iterations": self.iterations,
            "sample_size": self.sample_size,
            "threshold_rule": self.threshold_rule,
            "threshold_factor": self.threshold_factor,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "BaselineFareRansac":
        model = cls(
            iterations=doc.get("iterations", 200),
            sample_size=doc.get("sample_size", 10),
            threshold_rule=doc.get("threshold_rule", "mad"),
            threshold_factor=doc.get("threshold_factor", 2.5),
            seed=doc.get("seed", 0),
        )
        model.intercept_ = doc["intercept"]
        model.per_second_ = doc["per_second"]
        model.per_mile_ = doc["per_mile"]
        model.inlier_threshold_ = doc["inlier_threshold"]
        model.inlier_fraction_ = doc["inlier_fraction"]
        model.n_samples_ = doc.get("n_samples", 0)
        model.inlier_mask_ = np.zeros(0, dtype=bool)  # not persisted
        return model

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)

    @classmethod
    def load(cls, path) -> "BaselineFareRansac":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


def _trip_features(trips: Sequence[TripRecord]) -> tuple[np.ndarray, np.ndarray]:
    X = np.array([(t.duration, t.distance) for t in trips], dtype=np.float64)
    y = np.array([t.fare for t in trips], dtype=np.float64)
    return X, y


def fit_baseline_ransac(
    trips: Sequence[TripRecord],
    iterations: int = 200,
    sample_size: int = 10,
    threshold_rule: str = "mad",
    threshold_factor: float = 2.5,
    threshold_value: float | None = None,
    seed: int = 0,
) -> BaselineFareRansac:
    """Fit the baseline fare model on trips with positive duration and distance."""
    usable = [t for t in trips if t.duration > 0 and t.distance > 0]
    check_min_samples(len(usable), MIN_FIT_TRIPS, "trips with positive duration and distance")
    X, y = _trip_features(usable)
    model = BaselineFareRansac(
        iterations=iterations,
        sample_size=sample_size,
        threshold_rule=threshold_rule,
        threshold_factor=threshold_factor,
        threshold_value=threshold_value,
        seed=seed,
    )
    return model.fit(X, y)


def annotate_surge(
    labeled_trips: Iterable[tuple[TripRecord, CohortLabel]],
    model: BaselineFareRansac,
) -> AnnotationResult:
    """Attach continuous and displayed surge to each labeled trip.

    Trips whose predicted baseline fare is non-positive cannot carry a
    meaningful multiplier; they are excluded and counted.
    """
    check_fitted(model, "inlier_mask_")
    pairs = list(labeled_trips)
    if not pairs:
        return AnnotationResult(trips=[], excluded=0)
    X = np.array([(t.duration, t.distance) for t, _ in pairs], dtype=np.float64)
    fares = np.array([t.fare for t, _ in pairs], dtype=np.float64)
    baseline = model.predict(X)
    valid = baseline > 0.0
    surge = np.maximum(fares[valid] / baseline[valid], 1.0)
    displayed = _discretize_array(surge)

    annotated = []
    for j, i in enumerate(np.nonzero(valid)[0]):
        trip, cohort = pairs[i]
        annotated.append(
            SurgeAnnotatedTrip(
                trip=trip,
                cohort=cohort,
                surge_continuous=float(surge[j]),
                surge_displayed=float(displayed[j]),
            )
        )
    return AnnotationResult(trips=annotated, excluded=int((~valid).sum()))


def level_counts(trips: Iterable[SurgeAnnotatedTrip]) -> dict[float, int]:
    """Trip count per displayed surge level."""
    counts: dict[float, int] = {}
    for t in trips:
        counts[t.surge_displayed] = counts.get(t.surge_displayed, 0) + 1
    return dict(sorted(counts.items()))


def level_shares(trips: Sequence[SurgeAnnotatedTrip]) -> dict[float, float]:
    """Share of trips per displayed surge level."""
    counts = level_counts(trips)
    total = sum(counts.values())
    if total == 0:
        return {}
    return {level: c / total for level, c in counts.items()}
