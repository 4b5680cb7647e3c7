"""Read-only what-if HTTP API over precomputed pipeline artifacts.

All computation runs against the strata and per-level caches written by
the pricing stage, never against raw trips, so interactive requests stay
sub-second regardless of dataset size. No endpoint mutates state;
identical requests produce identical responses.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Literal

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import pricing as pricing_mod
from .errors import EquirideError
from .pipeline import PipelineState, load_market_context, read_elasticity_csv
from .types import CohortLabel

DEFAULT_BIND = "127.0.0.1:8787"
BIND_ENV_VAR = "EQUIRIDE_BIND"


class WhatIfScenario(BaseModel):
    kind: Literal["GOVERNMENT_SUBSIDY", "PLATFORM_FUNDED"]
    n: float | None = None
    p_min: float | None = None
    r: float | None = None
    grid_step: float = 0.01


class WhatIfRequest(BaseModel):
    mechanism: Literal["fixed", "fairride", "flat"]
    scenario: WhatIfScenario | None = None
    delta: float | None = None
    amount: float | None = None  # flat mechanism: dollars off each fare


def _solution_payload(solution: pricing_mod.DiscountSolution) -> dict:
    summary = solution.summary
    return {
        "delta": solution.delta,
        "eta": solution.eta if solution.feasible else 0,
        "r2": summary.r2 if summary else None,
        "surplus": summary.surplus if summary else None,
        "avg_surplus": summary.avg_surplus if summary else None,
        "revenue": solution.revenue if solution.feasible else 0.0,
        "feasible": solution.feasible,
        "grid": [
            {"delta": g.delta, "eta": g.eta, "revenue": g.revenue, "feasible": g.feasible}
            for g in solution.grid_evaluations
        ],
    }


def _summary_payload(summary, delta: float | None, grid: list[dict]) -> dict:
    return {
        "delta": delta,
        "eta": summary.eta,
        "r2": summary.r2,
        "surplus": summary.surplus,
        "avg_surplus": summary.avg_surplus,
        "revenue": summary.revenue,
        "feasible": True,
        "grid": grid,
    }


def create_app(artifact_dir: str | Path, ui_origin: str | None = None) -> FastAPI:
    """Build the service over one pipeline output directory."""
    state = PipelineState.load(Path(artifact_dir))
    summary_doc = json.loads(state.require("summary", "metrics").read_text())
    shares_doc = json.loads(state.require("surge_shares", "surge").read_text())
    context_doc = json.loads(state.require("context", "price").read_text())
    demand, context = load_market_context(state)
    elasticity_tables = {}
    for cohort in CohortLabel:
        key = f"elasticity_{cohort.value}"
        if key in state.artifacts:
            rows = []
            table = read_elasticity_csv(state.require(key, "elasticity"))
            for level, est in sorted(table.estimates.items()):
                rows.append(
                    {
                        "level": level,
                        "surge_left": est.surge_left,
                        "alpha": est.alpha,
                        "n_p": est.n_p,
                        "delta_p": est.delta_p,
                        "e_p": est.e_p,
                        "n_obs": est.n_obs,
                    }
                )
            elasticity_tables[cohort.value] = rows

    price_floor = float(context_doc.get("price_floor", pricing_mod.DEFAULT_PRICE_FLOOR))

    app = FastAPI(title="equiride what-if service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=[ui_origin] if ui_origin else ["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        errors = [
            {"field": ".".join(str(loc) for loc in err["loc"][1:]), "message": err["msg"]}
            for err in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"errors": errors})

    @app.get("/api/summary")
    def api_summary() -> dict:
        return summary_doc

    @app.get("/api/surge-shares")
    def api_surge_shares() -> dict:
        return shares_doc

    @app.get("/api/elasticities")
    def api_elasticities() -> dict:
        return elasticity_tables

    @app.post("/api/whatif")
    def api_whatif(body: WhatIfRequest):
        try:
            return _whatif(body)
        except EquirideError as exc:
            return JSONResponse(
                status_code=400, content={"errors": [{"field": "", "message": str(exc)}]}
            )

    def _whatif(body: WhatIfRequest) -> dict:
        if body.mechanism == "fixed":
            if body.scenario is None:
                raise EquirideError("mechanism 'fixed' requires a scenario")
            scenario = pricing_mod.PricingScenario(
                kind=pricing_mod.ScenarioKind(body.scenario.kind),
                n=body.scenario.n,
                p_min=body.scenario.p_min,
                r=body.scenario.r,
                grid_step=body.scenario.grid_step,
            )
            if (
                scenario.kind is pricing_mod.ScenarioKind.PLATFORM_FUNDED
                and scenario.r is None
            ):
                scenario = scenario.with_revenue(context.baseline_revenue)
            if body.delta is not None:
                # explicit delta: evaluate exactly there, no search
                eta, revenue = pricing_mod.evaluate_discount(demand, body.delta, scenario.kind)
                feasible = pricing_mod.scenario_feasible(scenario, body.delta, eta, revenue)
                point = {
                    "delta": body.delta,
                    "eta": eta,
                    "revenue": revenue,
                    "feasible": feasible,
                }
                if not feasible:
                    return {
                        "delta": body.delta,
                        "eta": eta,
                        "r2": None,
                        "surplus": None,
                        "avg_surplus": None,
                        "revenue": revenue,
                        "feasible": False,
                        "grid": [point],
                    }
                summary = context.summarize_fixed(body.delta, eta, revenue)
                return _summary_payload(summary, body.delta, [point])
            solution = pricing_mod.solve_fixedfairride(demand, scenario, context)
            return _solution_payload(solution)

        if body.mechanism == "flat":
            if body.amount is None:
                raise EquirideError("mechanism 'flat' requires 'amount' in dollars")
            amount = float(body.amount)
            if amount < 0:
                raise EquirideError("'amount' must be non-negative")
            summary = context.summarize_prices(
                lambda level, stats: max(price_floor, stats["avg_fare"] - amount)
            )
            return _summary_payload(summary, None, [])

        # fairride: per-level average model prices precomputed by the
        # pricing stage
        if any("avg_fairride_price" not in stats for stats in context.levels.values()):
            raise EquirideError(
                "fairride prices were not precomputed; rerun the price stage "
                "with enough disadvantaged-cohort trips"
            )
        summary = context.summarize_prices(
            lambda level, stats: stats["avg_fairride_price"]
        )
        return _summary_payload(summary, None, [])

    return app


def resolve_bind(flag_value: str | None) -> tuple[str, int]:
    bind = flag_value or os.environ.get(BIND_ENV_VAR) or DEFAULT_BIND
    host, _, port = bind.rpartition(":")
    return host or "127.0.0.1", int(port)
