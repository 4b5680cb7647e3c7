"""Pricing-bias analytics and fair repricing for ride-hailing trip data."""

from .elasticity import (
    BinObservation,
    DiscontinuityWindow,
    ElasticityEstimate,
    ElasticityTable,
    LpmFit,
    SurplusMode,
    SurplusReport,
    build_rdd_dataset,
    consumer_surplus,
    estimate_elasticities,
    estimate_elasticity,
    fit_lpm,
)
from .errors import (
    ArgumentError,
    ConfigurationError,
    DataError,
    EquirideError,
    EstimationError,
    UndefinedRatioError,
)
from .ingest import (
    ParseResult,
    classify_trip,
    classify_trips,
    filter_trips,
    load_region_map,
    parse_trips,
)
from .metrics import FairnessSummary, GroupTripStats, fairness_summary, relative_rideability
from .pricing import (
    DemandResponse,
    DemandStratum,
    DiscountSolution,
    FairRidePricer,
    FixedDiscount,
    FlatDiscount,
    LinearFarePricer,
    MarketContext,
    PricingScenario,
    ScenarioKind,
    TripFeaturizer,
    apply_policy,
    build_demand_response,
    demand_uplift,
    evaluate_discount,
    evaluate_policy,
    solve_fixedfairride,
    train_fairride,
    train_ols_baseline,
)
from .surge import (
    AnnotationResult,
    BaselineFareRansac,
    annotate_surge,
    discretize_surge,
    fit_baseline_ransac,
)
from .synth import SynthConfig, SynthResult, generate
from .types import CohortLabel, RegionMap, RepricedTrip, SurgeAnnotatedTrip, TripRecord

__version__ = "0.1.0"

__all__ = [
    "AnnotationResult",
    "ArgumentError",
    "BaselineFareRansac",
    "BinObservation",
    "CohortLabel",
    "ConfigurationError",
    "DataError",
    "DemandResponse",
    "DemandStratum",
    "DiscontinuityWindow",
    "DiscountSolution",
    "ElasticityEstimate",
    "ElasticityTable",
    "EquirideError",
    "EstimationError",
    "FairRidePricer",
    "FairnessSummary",
    "FixedDiscount",
    "FlatDiscount",
    "GroupTripStats",
    "LinearFarePricer",
    "LpmFit",
    "MarketContext",
    "ParseResult",
    "PricingScenario",
    "RegionMap",
    "RepricedTrip",
    "ScenarioKind",
    "SurgeAnnotatedTrip",
    "SurplusMode",
    "SurplusReport",
    "SynthConfig",
    "SynthResult",
    "TripFeaturizer",
    "TripRecord",
    "UndefinedRatioError",
    "annotate_surge",
    "apply_policy",
    "build_demand_response",
    "build_rdd_dataset",
    "classify_trip",
    "classify_trips",
    "consumer_surplus",
    "demand_uplift",
    "discretize_surge",
    "estimate_elasticities",
    "estimate_elasticity",
    "evaluate_discount",
    "evaluate_policy",
    "fairness_summary",
    "filter_trips",
    "fit_baseline_ransac",
    "fit_lpm",
    "generate",
    "load_region_map",
    "parse_trips",
    "relative_rideability",
    "solve_fixedfairride",
    "train_fairride",
    "train_ols_baseline",
]
