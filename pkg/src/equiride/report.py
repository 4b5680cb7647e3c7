"""Report artifacts: policy comparison, discount sweep, shares, surplus.

Reports are emitted as plottable CSV + JSON pairs rather than rendered
images; drawing belongs to the UI.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

from . import pricing as pricing_mod
from .elasticity import SurplusMode
from .metrics import FairnessSummary, fairness_summary
from .pipeline import (
    PipelineState,
    _surplus_from_json,
    build_market_context,
    read_annotated_csv,
    read_elasticity_csv,
    regions_from_config,
    surplus_mode,
)
from .types import CohortLabel

PMIN_SWEEP = [5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15]


def _pct_change(new: float, old: float) -> float | None:
    if old == 0:
        return None
    return (new - old) / old * 100.0


def _table1_row(name: str, summary: FairnessSummary, base: FairnessSummary) -> dict:
    return {
        "model": name,
        "eta": summary.eta,
        "eta_pct_change": _pct_change(summary.eta, base.eta),
        "r2": summary.r2,
        "r2_pct_change": _pct_change(summary.r2, base.r2),
        "surplus": summary.surplus,
        "surplus_pct_change": _pct_change(summary.surplus, base.surplus),
        "revenue": summary.revenue,
    }


def _write_rows(path_base: Path, rows: list[dict]) -> list[Path]:
    json_path = path_base.with_suffix(".json")
    csv_path = path_base.with_suffix(".csv")
    json_path.write_text(json.dumps(rows, indent=2))
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        if rows:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
    return [csv_path, json_path]


def stage_report(
    state: PipelineState,
    scenario: pricing_mod.PricingScenario | None = None,
    force: bool = False,
) -> dict:
    """Emit the four report artifacts from the persisted pipeline outputs."""
    config = state.config
    mode = surplus_mode(config)
    annotated = read_annotated_csv(state.require("trips_annotated", "surge", force))
    table = read_elasticity_csv(
        state.require(f"elasticity_{CohortLabel.EDA_TRIP.value}", "elasticity", force)
    )
    surplus_doc = json.loads(
        state.require(f"surplus_{CohortLabel.EDA_TRIP.value}", "surplus", force).read_text()
    )
    regions = regions_from_config(config)
    demand, context = build_market_context(state, annotated, table, mode)
    eda = [a for a in annotated if a.cohort is CohortLabel.EDA_TRIP]
    price_floor = float(config.get("price_floor", 2.5))
    min_level_trips = int(config.get("min_level_trips", 100))

    baseline = fairness_summary(annotated, _surplus_from_json(surplus_doc), regions)
    rows = [_table1_row("Original", baseline, baseline)]

    def evaluated(policy) -> FairnessSummary:
        repriced = pricing_mod.apply_policy(eda, policy, price_floor)
        return pricing_mod.evaluate_policy(
            annotated, repriced, demand, regions, mode=mode, min_level_trips=min_level_trips
        )

    policies: list[tuple[str, pricing_mod.Policy]] = []
    if len(eda) >= pricing_mod.MIN_FAIRRIDE_TRIPS:
        policies.append(
            (
                "FairRide",
                pricing_mod.train_fairride(
                    eda,
                    area_buckets=int(config.get("area_buckets", 32)),
                    price_floor=price_floor,
                ),
            )
        )
        policies.append(
            (
                "OLS (all trips)",
                pricing_mod.train_ols_baseline(
                    annotated,
                    area_buckets=int(config.get("area_buckets", 32)),
                    price_floor=price_floor,
                ),
            )
        )
    policies.append(("Baseline (-$5)", pricing_mod.FlatDiscount(5.0)))
    for name, policy in policies:
        rows.append(_table1_row(name, evaluated(policy), baseline))

    if scenario is None:
        scenario = pricing_mod.PricingScenario(
            kind=pricing_mod.ScenarioKind.PLATFORM_FUNDED, p_min=12.0, r=demand.baseline_revenue
        )
    elif scenario.kind is pricing_mod.ScenarioKind.PLATFORM_FUNDED and scenario.r is None:
        scenario = scenario.with_revenue(demand.baseline_revenue)
    solution = pricing_mod.solve_fixedfairride(demand, scenario, context)
    if solution.feasible and solution.summary is not None:
        label = (
            f"FixedFairRide(p_min = {scenario.p_min:g})"
            if scenario.kind is pricing_mod.ScenarioKind.PLATFORM_FUNDED
            else f"FixedFairRide(n = {scenario.n:g})"
        )
        rows.append(_table1_row(label, solution.summary, baseline))

    artifacts = _write_rows(state.root / "report_table1", rows)

    # Discount sweep over the driver-floor price
    sweep_rows = []
    for p_min in PMIN_SWEEP:
        sweep_scenario = pricing_mod.PricingScenario(
            kind=pricing_mod.ScenarioKind.PLATFORM_FUNDED,
            p_min=float(p_min),
            r=demand.baseline_revenue,
            grid_step=scenario.grid_step,
        )
        sol = pricing_mod.solve_fixedfairride(demand, sweep_scenario)
        sweep_rows.append(
            {
                "p_min": p_min,
                "delta": sol.delta,
                "eta": sol.eta,
                "revenue": sol.revenue,
                "feasible": sol.feasible,
            }
        )
    artifacts += _write_rows(state.root / "report_table2", sweep_rows)

    shares_doc = json.loads(state.require("surge_shares", "surge", force).read_text())
    share_rows = [
        {"cohort": cohort, "level": level, "share": share}
        for cohort, shares in shares_doc["shares"].items()
        for level, share in sorted(shares.items())
    ]
    artifacts += _write_rows(state.root / "report_fig1a", share_rows)

    surplus_rows = []
    for cohort in CohortLabel:
        key = f"surplus_{cohort.value}"
        if key not in state.artifacts:
            continue
        doc = json.loads(state.require(key, "surplus", force).read_text())
        surplus_rows.append(
            {
                "cohort": cohort.value,
                "total_surplus": doc["total_surplus"],
                "average_surplus": doc["average_surplus"],
                "mode": doc["mode"],
            }
        )
    artifacts += _write_rows(state.root / "report_fig1b", surplus_rows)

    for path in artifacts:
        state.record(path.stem + path.suffix.replace(".", "_"), path)
    state.save()
    return {"artifacts": [str(p) for p in artifacts], "table1": rows, "table2": sweep_rows}
