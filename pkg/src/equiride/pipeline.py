"""Pipeline stages and persisted-artifact bookkeeping.

Each CLI subcommand runs one stage function here. Stages communicate only
through files under the output directory; state.json records every
artifact's content hash so a stage can refuse to build on silently edited
or regenerated inputs unless forced.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Sequence

from . import elasticity as elasticity_mod
from . import ingest as ingest_mod
from . import metrics as metrics_mod
from . import pricing as pricing_mod
from . import surge as surge_mod
from .elasticity import ElasticityEstimate, SurplusMode
from .errors import ArgumentError, ConfigurationError, DataError
from .types import CohortLabel, RegionMap, SurgeAnnotatedTrip, TripRecord

ANNOTATED_EXTRA_COLUMNS = ("Cohort", "surge_continuous", "surge_displayed")


class StaleArtifactError(DataError):
    """An upstream artifact changed since it was recorded."""


class MissingArtifactError(DataError):
    """A stage's upstream artifact has not been produced yet."""

    def __init__(self, artifact: str, stage: str):
        super().__init__(f"missing upstream artifact '{artifact}': run '{stage}' first")
        self.stage = stage


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class PipelineState:
    """Artifact registry for one output directory."""

    root: Path
    artifacts: dict[str, dict] = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    @classmethod
    def load(cls, root: Path) -> "PipelineState":
        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        state_path = root / "state.json"
        if state_path.exists():
            doc = json.loads(state_path.read_text())
            return cls(root=root, artifacts=doc.get("artifacts", {}), config=doc.get("config", {}))
        return cls(root=root)

    def save(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        payload = {"artifacts": self.artifacts, "config": self.config}
        (self.root / "state.json").write_text(json.dumps(payload, indent=2))

    def record(self, name: str, path: Path) -> None:
        self.artifacts[name] = {
            "path": str(path.relative_to(self.root)),
            "sha256": _sha256(path),
        }

    def path_of(self, name: str) -> Path:
        return self.root / self.artifacts[name]["path"]

    def require(self, name: str, produced_by: str, force: bool = False) -> Path:
        if name not in self.artifacts:
            raise MissingArtifactError(name, produced_by)
        path = self.path_of(name)
        if not path.exists():
            raise MissingArtifactError(name, produced_by)
        if not force and _sha256(path) != self.artifacts[name]["sha256"]:
            raise StaleArtifactError(
                f"artifact '{name}' at {path} does not match its recorded hash; "
                "rerun the producing stage or pass --force"
            )
        return path


# ---------------------------------------------------------------------------
# Config handling


DEFAULT_CONFIG = {
    "city_population": 2_700_000,
    "populations": None,  # derived from city_population when absent
    "date_range": None,  # [iso start, iso end]; None keeps everything
    "exclude_shared": True,
    "price_floor": pricing_mod.DEFAULT_PRICE_FLOOR,
    "min_level_trips": elasticity_mod.DEFAULT_MIN_LEVEL_TRIPS,
    "surplus_mode": "cumulative",
    "area_buckets": pricing_mod.DEFAULT_AREA_BUCKETS,
    # Smaller minimal samples than the estimator default: no-surge trips can
    # be under half the data, and an all-inlier draw of 10 is then vanishingly
    # rare (0.45^10), leaving every candidate plane contaminated.
    "ransac_iterations": 400,
    "ransac_sample_size": 4,
    "ransac_threshold_factor": 2.5,
    "seed": 0,
}


def load_config(path: Path | None) -> dict:
    config = dict(DEFAULT_CONFIG)
    if path is not None:
        config.update(json.loads(Path(path).read_text()))
    if not config.get("populations"):
        config["populations"] = RegionMap.default_populations(float(config["city_population"]))
    missing = [c.value for c in CohortLabel if c.value not in config["populations"]]
    if missing:
        raise ConfigurationError(f"config populations missing cohorts: {missing}")
    return config


def regions_from_config(config: dict, eda_tracts=(), eda_areas=()) -> RegionMap:
    return RegionMap(
        eda_tracts=frozenset(eda_tracts),
        eda_areas=frozenset(eda_areas),
        populations=dict(config["populations"]),
    )


def surplus_mode(config: dict) -> SurplusMode:
    return SurplusMode(config.get("surplus_mode", "cumulative"))


# ---------------------------------------------------------------------------
# Annotated-trip CSV round trip

_CANONICAL_FIELDS = list(ingest_mod.DEFAULT_COLUMN_MAP)


def _trip_row(trip: TripRecord) -> list[str]:
    fmt = ingest_mod.DEFAULT_TIMESTAMP_FORMAT
    return [
        trip.trip_id,
        trip.start_time.strftime(fmt),
        trip.end_time.strftime(fmt),
        f"{trip.duration:.0f}",
        f"{trip.distance:.2f}",
        trip.pickup_tract or "",
        trip.dropoff_tract or "",
        trip.pickup_area or "",
        trip.dropoff_area or "",
        f"{trip.fare:.2f}",
        f"{trip.tip:.2f}",
        f"{trip.extra_charges:.2f}",
        "true" if trip.shared_authorized else "false",
    ]


def write_classified_csv(path: Path, pairs: Sequence[tuple[TripRecord, CohortLabel]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([ingest_mod.DEFAULT_COLUMN_MAP[f] for f in _CANONICAL_FIELDS] + ["Cohort"])
        for trip, cohort in pairs:
            writer.writerow(_trip_row(trip) + [cohort.value])


def read_classified_csv(path: Path) -> list[tuple[TripRecord, CohortLabel]]:
    pairs = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            trip = _trip_from_row(row)
            pairs.append((trip, CohortLabel(row["Cohort"])))
    return pairs


def _trip_from_row(row: dict) -> TripRecord:
    col = ingest_mod.DEFAULT_COLUMN_MAP
    return TripRecord(
        trip_id=row[col["trip_id"]],
        start_time=ingest_mod.parse_timestamp(row[col["start_time"]]),
        end_time=ingest_mod.parse_timestamp(row[col["end_time"]]),
        duration=float(row[col["duration"]]),
        distance=float(row[col["distance"]]),
        pickup_tract=row[col["pickup_tract"]] or None,
        dropoff_tract=row[col["dropoff_tract"]] or None,
        pickup_area=row[col["pickup_area"]] or None,
        dropoff_area=row[col["dropoff_area"]] or None,
        fare=float(row[col["fare"]]),
        tip=float(row[col["tip"]] or 0.0),
        extra_charges=float(row[col["extra_charges"]] or 0.0),
        shared_authorized=(row[col["shared_authorized"]] or "").lower() in ("true", "t", "1", "y"),
    )


def write_annotated_csv(path: Path, trips: Sequence[SurgeAnnotatedTrip]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [ingest_mod.DEFAULT_COLUMN_MAP[f] for f in _CANONICAL_FIELDS]
            + list(ANNOTATED_EXTRA_COLUMNS)
        )
        for at in trips:
            writer.writerow(
                _trip_row(at.trip)
                + [at.cohort.value, f"{at.surge_continuous:.4f}", f"{at.surge_displayed:.1f}"]
            )


def read_annotated_csv(path: Path) -> list[SurgeAnnotatedTrip]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            out.append(
                SurgeAnnotatedTrip(
                    trip=_trip_from_row(row),
                    cohort=CohortLabel(row["Cohort"]),
                    surge_continuous=float(row["surge_continuous"]),
                    surge_displayed=float(row["surge_displayed"]),
                )
            )
    return out


# ---------------------------------------------------------------------------
# Elasticity table CSV

ELASTICITY_COLUMNS = ["level", "surge_left", "alpha", "n_p", "delta_p", "e_p", "n_obs", "skipped"]


def write_elasticity_csv(path: Path, table: elasticity_mod.ElasticityTable) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(ELASTICITY_COLUMNS)
        for level, est in sorted(table.estimates.items()):
            writer.writerow(
                [
                    f"{level:.1f}",
                    f"{est.surge_left:.1f}",
                    repr(float(est.alpha)),
                    repr(float(est.n_p)),
                    repr(float(est.delta_p)),
                    repr(float(est.e_p)),
                    int(est.n_obs),
                    "false",
                ]
            )
        for cutoff, reason in table.skipped:
            writer.writerow([f"{cutoff + 0.05:.1f}", f"{cutoff - 0.05:.1f}", "", "", "", "", 0, f"true: {reason}"])


def read_elasticity_csv(path: Path) -> elasticity_mod.ElasticityTable:
    estimates: dict[float, ElasticityEstimate] = {}
    skipped: list[tuple[float, str]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if row["skipped"].startswith("true"):
                skipped.append((float(row["level"]) - 0.05, row["skipped"][5:].strip()))
                continue
            estimates[float(row["level"])] = ElasticityEstimate(
                surge_left=float(row["surge_left"]),
                alpha=float(row["alpha"]),
                n_p=float(row["n_p"]),
                delta_p=float(row["delta_p"]),
                e_p=float(row["e_p"]),
                n_obs=int(row["n_obs"]),
            )
    return elasticity_mod.ElasticityTable(estimates=estimates, skipped=skipped)


# ---------------------------------------------------------------------------
# Stages


def stage_ingest(
    state: PipelineState,
    trips_path: Path,
    regions_path: Path,
    config: dict,
) -> dict:
    """Parse, filter and classify trips; persist trips_classified.csv."""
    with open(regions_path, encoding="utf-8") as fh:
        regions = ingest_mod.load_region_map(fh, config["populations"])
    with open(trips_path, encoding="utf-8") as fh:
        parsed = ingest_mod.parse_trips(fh)
    trips = parsed.trips
    if config.get("date_range"):
        bounds = tuple(
            ingest_mod.parse_timestamp(x) if "/" in x else datetime.fromisoformat(x)
            for x in config["date_range"]
        )
        trips = ingest_mod.filter_trips(trips, bounds, config["exclude_shared"])
    elif config["exclude_shared"]:
        trips = [t for t in trips if not t.shared_authorized]
    pairs = ingest_mod.classify_trips(trips, regions)

    out = state.root / "trips_classified.csv"
    write_classified_csv(out, pairs)
    meta = {
        "rows": parsed.row_count,
        "parsed": len(parsed.trips),
        "skipped": parsed.skipped,
        "kept_after_filter": len(trips),
        "eda_trips": sum(1 for _, c in pairs if c is CohortLabel.EDA_TRIP),
        "non_eda_trips": sum(1 for _, c in pairs if c is CohortLabel.NON_EDA_TRIP),
        "diagnostics": parsed.diagnostics,
        "eda_tracts": sorted(regions.eda_tracts),
        "eda_areas": sorted(regions.eda_areas),
    }
    meta_path = state.root / "ingest_meta.json"
    meta_path.write_text(json.dumps(meta, indent=2))
    state.config = dict(config)
    state.record("trips_classified", out)
    state.record("ingest_meta", meta_path)
    state.save()
    return meta


def stage_surge(state: PipelineState, force: bool = False, pooled: bool = False) -> dict:
    """Fit per-cohort baseline models and annotate every trip with surge."""
    classified = state.require("trips_classified", "ingest", force)
    pairs = read_classified_csv(classified)
    config = state.config
    annotated: list[SurgeAnnotatedTrip] = []
    models = {}
    excluded = 0
    groups: dict[CohortLabel, list] = {c: [] for c in CohortLabel}
    for trip, cohort in pairs:
        groups[cohort].append((trip, cohort))
    fit_targets = {"POOLED": pairs} if pooled else {c.value: g for c, g in groups.items() if g}
    for name, group in fit_targets.items():
        model = surge_mod.fit_baseline_ransac(
            [t for t, _ in group],
            iterations=int(config.get("ransac_iterations", 200)),
            sample_size=int(config.get("ransac_sample_size", 10)),
            threshold_factor=float(config.get("ransac_threshold_factor", 2.5)),
            seed=int(config.get("seed", 0)),
        )
        models[name] = model
        result = surge_mod.annotate_surge(group, model)
        annotated.extend(result.trips)
        excluded += result.excluded

    out = state.root / "trips_annotated.csv"
    write_annotated_csv(out, annotated)
    state.record("trips_annotated", out)
    for name, model in models.items():
        path = state.root / f"baseline_model_{name}.json"
        model.save(path)
        state.record(f"baseline_model_{name}", path)
    shares = {
        cohort.value: {
            f"{level:.1f}": share
            for level, share in surge_mod.level_shares(
                [a for a in annotated if a.cohort is cohort]
            ).items()
        }
        for cohort in CohortLabel
    }
    shares_path = state.root / "surge_shares.json"
    shares_path.write_text(json.dumps({"shares": shares, "excluded": excluded}, indent=2))
    state.record("surge_shares", shares_path)
    state.save()
    return {"annotated": len(annotated), "excluded": excluded, "models": list(models)}


def stage_elasticity(state: PipelineState, force: bool = False) -> dict:
    annotated = read_annotated_csv(state.require("trips_annotated", "surge", force))
    config = state.config
    info = {}
    for cohort in CohortLabel:
        cohort_trips = [a for a in annotated if a.cohort is cohort]
        if not cohort_trips:
            continue
        table = elasticity_mod.estimate_elasticities(
            cohort_trips, min_level_trips=int(config.get("min_level_trips", 100))
        )
        path = state.root / f"elasticity_{cohort.value}.csv"
        write_elasticity_csv(path, table)
        state.record(f"elasticity_{cohort.value}", path)
        info[cohort.value] = {
            "estimated": len(table.estimates),
            "skipped": [[c, reason] for c, reason in table.skipped],
        }
    state.save()
    return info


def stage_surplus(state: PipelineState, force: bool = False, mode: SurplusMode | None = None) -> dict:
    annotated = read_annotated_csv(state.require("trips_annotated", "surge", force))
    config = state.config
    mode = mode or surplus_mode(config)
    info = {}
    for cohort in CohortLabel:
        cohort_trips = [a for a in annotated if a.cohort is cohort]
        if not cohort_trips:
            continue
        table = read_elasticity_csv(
            state.require(f"elasticity_{cohort.value}", "elasticity", force)
        )
        report = elasticity_mod.consumer_surplus(
            cohort_trips,
            table.estimates,
            mode=mode,
            cohort=cohort,
            min_level_trips=int(config.get("min_level_trips", 100)),
        )
        path = state.root / f"surplus_{cohort.value}.json"
        path.write_text(json.dumps(report.to_json_dict(), indent=2))
        state.record(f"surplus_{cohort.value}", path)
        info[cohort.value] = {"total": report.total_surplus, "average": report.average_surplus}
    state.save()
    return info


def stage_metrics(state: PipelineState, force: bool = False) -> dict:
    annotated = read_annotated_csv(state.require("trips_annotated", "surge", force))
    surplus_path = state.require(f"surplus_{CohortLabel.EDA_TRIP.value}", "surplus", force)
    surplus_doc = json.loads(surplus_path.read_text())
    report = _surplus_from_json(surplus_doc)
    regions = regions_from_config(state.config)
    summary = metrics_mod.fairness_summary(annotated, report, regions)
    path = state.root / "summary.json"
    path.write_text(json.dumps(summary.to_json_dict(), indent=2))
    state.record("summary", path)
    state.save()
    return summary.to_json_dict()


def _surplus_from_json(doc: dict) -> elasticity_mod.SurplusReport:
    return elasticity_mod.SurplusReport(
        cohort=CohortLabel(doc["cohort"]),
        per_level={float(k): v for k, v in doc["per_level"].items()},
        total_surplus=doc["total_surplus"],
        average_surplus=doc["average_surplus"],
        mode=SurplusMode(doc["mode"]),
        excluded_levels={float(k): v for k, v in doc.get("excluded_levels", {}).items()},
    )


def build_market_context(
    state: PipelineState,
    annotated: Sequence[SurgeAnnotatedTrip],
    table: elasticity_mod.ElasticityTable,
    mode: SurplusMode,
) -> tuple[pricing_mod.DemandResponse, pricing_mod.MarketContext]:
    config = state.config
    eda = [a for a in annotated if a.cohort is CohortLabel.EDA_TRIP]
    non_eda_count = len(annotated) - len(eda)
    if not eda:
        raise DataError("no disadvantaged-cohort trips to price")
    e_p = {level: est.e_p for level, est in table.estimates.items()}
    demand = pricing_mod.build_demand_response(eda, e_p)
    context = pricing_mod.MarketContext(
        regions=regions_from_config(config),
        levels=elasticity_mod.level_aggregates(eda),
        e_p_by_level=e_p,
        non_focus_trips=non_eda_count,
        baseline_revenue=demand.baseline_revenue,
        mode=mode,
        min_level_trips=int(config.get("min_level_trips", 100)),
    )
    return demand, context


def stage_price(
    state: PipelineState,
    scenario: pricing_mod.PricingScenario,
    force: bool = False,
    mode: SurplusMode | None = None,
) -> dict:
    """Solve the scenario, persist the solution and the serving caches."""
    annotated = read_annotated_csv(state.require("trips_annotated", "surge", force))
    table = read_elasticity_csv(
        state.require(f"elasticity_{CohortLabel.EDA_TRIP.value}", "elasticity", force)
    )
    config = state.config
    mode = mode or surplus_mode(config)
    demand, context = build_market_context(state, annotated, table, mode)
    if scenario.kind is pricing_mod.ScenarioKind.PLATFORM_FUNDED and scenario.r is None:
        scenario = scenario.with_revenue(demand.baseline_revenue)
    solution = pricing_mod.solve_fixedfairride(demand, scenario, context)

    solution_path = state.root / "solution.json"
    solution_path.write_text(json.dumps(solution.to_json_dict(), indent=2))
    state.record("solution", solution_path)

    # Serving caches: strata for the solver, per-level aggregates (plus
    # model prices) for summaries, and scalar context.
    eda = [a for a in annotated if a.cohort is CohortLabel.EDA_TRIP]
    levels = {level: dict(stats) for level, stats in context.levels.items()}
    models_meta = {}
    if len(eda) >= pricing_mod.MIN_FAIRRIDE_TRIPS:
        fairride = pricing_mod.train_fairride(
            eda,
            area_buckets=int(config.get("area_buckets", 32)),
            price_floor=float(config.get("price_floor", 2.5)),
        )
        ols = pricing_mod.train_ols_baseline(
            annotated,
            area_buckets=int(config.get("area_buckets", 32)),
            price_floor=float(config.get("price_floor", 2.5)),
        )
        fairride_prices = fairride.predict(eda)
        ols_prices = ols.predict(eda)
        sums: dict[float, list[float]] = {}
        for at, fr_price, ols_price in zip(eda, fairride_prices, ols_prices):
            acc = sums.setdefault(at.surge_displayed, [0.0, 0.0, 0.0])
            acc[0] += 1
            acc[1] += float(fr_price)
            acc[2] += float(ols_price)
        for level, (count, fr_sum, ols_sum) in sums.items():
            levels[level]["avg_fairride_price"] = fr_sum / count
            levels[level]["avg_ols_price"] = ols_sum / count
        fairride_path = state.root / "model_fairride.json"
        fairride_path.write_text(json.dumps(fairride.to_json_dict(), indent=2))
        state.record("model_fairride", fairride_path)
        ols_path = state.root / "model_ols.json"
        ols_path.write_text(json.dumps(ols.to_json_dict(), indent=2))
        state.record("model_ols", ols_path)
        models_meta = {"fairride": fairride.to_json_dict()["dropped_columns"]}

    strata_doc = [
        {
            "hour": key[0],
            "pickup": key[1][0],
            "dropoff": key[1][1],
            "trip_count": stratum.trip_count,
            "avg_price": stratum.avg_price,
            "modal_surge": stratum.modal_surge,
        }
        for key, stratum in demand.strata.items()
    ]
    strata_path = state.root / "strata.json"
    strata_path.write_text(json.dumps(strata_doc, indent=2))
    state.record("strata", strata_path)

    levels_path = state.root / "levels.json"
    levels_path.write_text(
        json.dumps({f"{level:.1f}": stats for level, stats in sorted(levels.items())}, indent=2)
    )
    state.record("levels", levels_path)

    context_doc = {
        "populations": config["populations"],
        "non_focus_trips": context.non_focus_trips,
        "baseline_eta": demand.total_trips,
        "baseline_revenue": demand.baseline_revenue,
        "mode": mode.value,
        "min_level_trips": context.min_level_trips,
        "price_floor": float(config.get("price_floor", 2.5)),
        "elasticities": {f"{level:.1f}": e for level, e in sorted(context.e_p_by_level.items())},
    }
    context_path = state.root / "context.json"
    context_path.write_text(json.dumps(context_doc, indent=2))
    state.record("context", context_path)
    state.save()
    return {"solution": solution.to_json_dict(), "models": models_meta}


def load_market_context(state: PipelineState) -> tuple[pricing_mod.DemandResponse, pricing_mod.MarketContext]:
    """Rebuild the demand response and summary context from serving caches."""
    strata_doc = json.loads(state.require("strata", "price").read_text())
    context_doc = json.loads(state.require("context", "price").read_text())
    levels_doc = json.loads(state.require("levels", "price").read_text())
    elasticities = {float(k): float(v) for k, v in context_doc["elasticities"].items()}
    strata = {
        (row["hour"], (row["pickup"], row["dropoff"])): pricing_mod.DemandStratum(
            trip_count=row["trip_count"],
            avg_price=row["avg_price"],
            modal_surge=row["modal_surge"],
        )
        for row in strata_doc
    }
    demand = pricing_mod.DemandResponse(elasticities=elasticities, strata=strata)
    regions = RegionMap(
        eda_tracts=frozenset(),
        eda_areas=frozenset(),
        populations={k: float(v) for k, v in context_doc["populations"].items()},
    )
    context = pricing_mod.MarketContext(
        regions=regions,
        levels={float(k): v for k, v in levels_doc.items()},
        e_p_by_level=elasticities,
        non_focus_trips=int(context_doc["non_focus_trips"]),
        baseline_revenue=float(context_doc["baseline_revenue"]),
        mode=SurplusMode(context_doc["mode"]),
        min_level_trips=int(context_doc["min_level_trips"]),
    )
    return demand, context
