"""Command-line pipeline driver.

Stages run in order: synth (optional) -> ingest -> surge -> elasticity ->
surplus -> metrics -> price -> report. Each stage persists its artifacts
under --out and refuses to run on missing or silently modified upstream
files unless --force is given.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import pricing as pricing_mod
from . import synth as synth_mod
from .elasticity import SurplusMode
from .errors import EquirideError
from .pipeline import (
    PipelineState,
    load_config,
    stage_elasticity,
    stage_ingest,
    stage_metrics,
    stage_price,
    stage_surplus,
    stage_surge,
)
from .report import stage_report


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _state(out: str) -> PipelineState:
    return PipelineState.load(Path(out))


@click.group()
def main() -> None:
    """Ride-hailing pricing-bias analysis and fair-pricing policies."""


@main.command("synth")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", type=int, default=None, help="override the config seed")
@click.option("--n-trips", type=int, default=None, help="override the config trip count")
def cmd_synth(config_path, out, seed, n_trips) -> None:
    """Generate a synthetic trip dataset with planted ground truth."""
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = json.loads(Path(config_path).read_text()) if config_path else {}
    try:
        config = synth_mod.SynthConfig.from_json(doc)
        if seed is not None:
            config.seed = seed
        if n_trips is not None:
            config.n_trips = n_trips
        trips_path = out_dir / "synth_trips.csv"
        truth_path = out_dir / "synth_truth.json"
        with open(trips_path, "w", encoding="utf-8") as trips_fh, open(
            truth_path, "w", encoding="utf-8"
        ) as truth_fh:
            result = synth_mod.generate(config, trips_fh, truth_fh)
        regions_path = out_dir / "synth_regions.json"
        regions_path.write_text(json.dumps(result.ground_truth["regions"], indent=2))
    except EquirideError as exc:
        _fail(str(exc))
    click.echo(f"wrote {result.n_trips} trips to {trips_path}")
    click.echo(f"wrote ground truth to {truth_path} and regions to {regions_path}")


@main.command("ingest")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--regions", "regions_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", required=True, type=click.Path())
def cmd_ingest(input_path, regions_path, config_path, out) -> None:
    """Parse, filter and classify trips."""
    state = _state(out)
    try:
        config = load_config(Path(config_path) if config_path else None)
        meta = stage_ingest(state, Path(input_path), Path(regions_path), config)
    except EquirideError as exc:
        _fail(str(exc))
    click.echo(
        f"parsed {meta['parsed']} trips ({meta['skipped']} skipped), "
        f"{meta['eda_trips']} EDA / {meta['non_eda_trips']} non-EDA"
    )


@main.command("surge")
@click.option("--out", required=True, type=click.Path())
@click.option("--force", is_flag=True)
@click.option("--pooled", is_flag=True, help="fit one pooled model instead of per cohort")
def cmd_surge(out, force, pooled) -> None:
    """Fit baseline fare models and annotate trips with surge."""
    try:
        info = stage_surge(_state(out), force=force, pooled=pooled)
    except EquirideError as exc:
        _fail(str(exc))
    click.echo(f"annotated {info['annotated']} trips ({info['excluded']} excluded)")


@main.command("elasticity")
@click.option("--out", required=True, type=click.Path())
@click.option("--force", is_flag=True)
def cmd_elasticity(out, force) -> None:
    """Estimate price elasticity at every surge discontinuity."""
    try:
        info = stage_elasticity(_state(out), force=force)
    except EquirideError as exc:
        _fail(str(exc))
    for cohort, stats in info.items():
        click.echo(f"{cohort}: {stats['estimated']} cutoffs estimated, {len(stats['skipped'])} skipped")


@main.command("surplus")
@click.option("--out", required=True, type=click.Path())
@click.option("--mode", type=click.Choice(["cumulative", "successive"]), default=None)
@click.option("--force", is_flag=True)
def cmd_surplus(out, mode, force) -> None:
    """Compute per-cohort consumer surplus."""
    try:
        info = stage_surplus(
            _state(out), force=force, mode=SurplusMode(mode) if mode else None
        )
    except EquirideError as exc:
        _fail(str(exc))
    for cohort, stats in info.items():
        click.echo(f"{cohort}: total ${stats['total']:,.2f}, average ${stats['average']:,.2f}")


@main.command("metrics")
@click.option("--out", required=True, type=click.Path())
@click.option("--force", is_flag=True)
def cmd_metrics(out, force) -> None:
    """Assemble the baseline fairness summary."""
    try:
        summary = stage_metrics(_state(out), force=force)
    except EquirideError as exc:
        _fail(str(exc))
    click.echo(json.dumps(summary, indent=2))


@main.command("price")
@click.option("--out", required=True, type=click.Path())
@click.option("--scenario", "scenario_path", required=True, type=click.Path(exists=True))
@click.option("--grid-step", type=float, default=None)
@click.option("--mode", type=click.Choice(["cumulative", "successive"]), default=None)
@click.option("--force", is_flag=True)
def cmd_price(out, scenario_path, grid_step, mode, force) -> None:
    """Solve the fixed-discount scenario and build serving caches."""
    try:
        doc = json.loads(Path(scenario_path).read_text())
        if grid_step is not None:
            doc["grid_step"] = grid_step
        scenario = pricing_mod.PricingScenario.from_json(doc)
        info = stage_price(
            _state(out), scenario, force=force, mode=SurplusMode(mode) if mode else None
        )
    except EquirideError as exc:
        _fail(str(exc))
    solution = info["solution"]
    if solution["feasible"]:
        click.echo(
            f"optimal delta {solution['delta']:.2f}: eta {solution['eta']}, "
            f"revenue ${solution['revenue']:,.2f}"
        )
    else:
        click.echo("no feasible discount; full grid audit written")


@main.command("report")
@click.option("--out", required=True, type=click.Path())
@click.option("--scenario", "scenario_path", type=click.Path(exists=True), default=None)
@click.option("--force", is_flag=True)
def cmd_report(out, scenario_path, force) -> None:
    """Emit policy-comparison, discount-sweep, share and surplus reports."""
    try:
        scenario = None
        if scenario_path:
            scenario = pricing_mod.PricingScenario.from_json(
                json.loads(Path(scenario_path).read_text())
            )
        info = stage_report(_state(out), scenario=scenario, force=force)
    except EquirideError as exc:
        _fail(str(exc))
    for path in info["artifacts"]:
        click.echo(f"wrote {path}")


@main.command("serve")
@click.option("--out", required=True, type=click.Path())
@click.option("--bind", default=None, help="host:port (or env EQUIRIDE_BIND)")
@click.option("--ui-origin", default=None, help="CORS origin for the policy UI")
def cmd_serve(out, bind, ui_origin) -> None:
    """Serve the what-if API over the pipeline artifacts."""
    import uvicorn

    from .service import create_app, resolve_bind

    try:
        app = create_app(Path(out), ui_origin=ui_origin)
    except EquirideError as exc:
        _fail(str(exc))
    host, port = resolve_bind(bind)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
