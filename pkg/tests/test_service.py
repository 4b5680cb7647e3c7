"""What-if HTTP API over precomputed artifacts."""

import hashlib
import json
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from equiride.pipeline import PipelineState
from equiride.pricing import PricingScenario, ScenarioKind, solve_fixedfairride
from equiride.pipeline import load_market_context
from equiride.service import create_app, resolve_bind

from test_pipeline_cli import build_market


@pytest.fixture(scope="module")
def served(tmp_path_factory):
    state = build_market(tmp_path_factory.mktemp("svc"))
    app = create_app(state.root)
    return state, TestClient(app)


def _tree_hashes(root: Path) -> dict:
    return {
        str(p): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


class TestReadEndpoints:
    def test_summary_schema(self, served):
        _, client = served
        doc = client.get("/api/summary").json()
        assert set(doc) == {"r2", "eta", "surplus", "avg_surplus", "revenue"}

    def test_surge_shares(self, served):
        _, client = served
        doc = client.get("/api/surge-shares").json()
        assert "EDA_TRIP" in doc["shares"]
        shares = doc["shares"]["EDA_TRIP"]
        assert abs(sum(shares.values()) - 1.0) < 1e-9

    def test_elasticities(self, served):
        _, client = served
        doc = client.get("/api/elasticities").json()
        assert "EDA_TRIP" in doc
        row = doc["EDA_TRIP"][0]
        assert {"level", "surge_left", "alpha", "n_p", "delta_p", "e_p", "n_obs"} <= set(row)


class TestWhatIf:
    def test_fixed_subsidy_feasible_under_ceiling(self, served):
        _, client = served
        body = {"mechanism": "fixed", "scenario": {"kind": "GOVERNMENT_SUBSIDY", "n": 0.3}}
        doc = client.post("/api/whatif", json=body).json()
        assert doc["feasible"] is True
        assert 0 < doc["delta"] < 0.3
        assert doc["grid"], "expected the full grid audit"
        assert doc["eta"] > 0 and doc["revenue"] > 0
        assert doc["r2"] is not None and doc["surplus"] is not None

    def test_fixed_agrees_exactly_with_offline_solver(self, served):
        state, client = served
        body = {"mechanism": "fixed", "scenario": {"kind": "GOVERNMENT_SUBSIDY", "n": 0.3}}
        api = client.post("/api/whatif", json=body).json()
        demand, context = load_market_context(PipelineState.load(state.root))
        offline = solve_fixedfairride(
            demand,
            PricingScenario(kind=ScenarioKind.GOVERNMENT_SUBSIDY, n=0.3),
            context,
        )
        assert api["delta"] == offline.delta
        assert api["eta"] == offline.eta
        assert api["revenue"] == offline.revenue
        assert api["r2"] == offline.summary.r2
        assert api["surplus"] == offline.summary.surplus
        assert len(api["grid"]) == len(offline.grid_evaluations)

    def test_explicit_delta_evaluates_without_search(self, served):
        _, client = served
        body = {
            "mechanism": "fixed",
            "scenario": {"kind": "GOVERNMENT_SUBSIDY", "n": 0.3},
            "delta": 0.12,
        }
        doc = client.post("/api/whatif", json=body).json()
        assert doc["delta"] == 0.12
        assert len(doc["grid"]) == 1
        assert doc["grid"][0]["delta"] == 0.12

    def test_explicit_delta_outside_ceiling_is_infeasible_200(self, served):
        _, client = served
        body = {
            "mechanism": "fixed",
            "scenario": {"kind": "GOVERNMENT_SUBSIDY", "n": 0.3},
            "delta": 0.5,
        }
        response = client.post("/api/whatif", json=body)
        assert response.status_code == 200
        assert response.json()["feasible"] is False

    def test_infeasible_platform_scenario_returns_audit(self, served):
        _, client = served
        # demand on this market is inelastic at small deltas: a huge p_min
        # forces infeasibility everywhere
        body = {
            "mechanism": "fixed",
            "scenario": {"kind": "PLATFORM_FUNDED", "p_min": 10_000.0},
        }
        response = client.post("/api/whatif", json=body)
        assert response.status_code == 200
        doc = response.json()
        assert doc["feasible"] is False
        assert doc["delta"] is None
        assert len(doc["grid"]) == 99

    def test_flat_mechanism(self, served):
        _, client = served
        doc = client.post("/api/whatif", json={"mechanism": "flat", "amount": 5.0}).json()
        assert doc["feasible"] is True
        assert doc["delta"] is None
        assert doc["eta"] > 0

    def test_fairride_mechanism(self, served):
        _, client = served
        doc = client.post("/api/whatif", json={"mechanism": "fairride"}).json()
        assert doc["feasible"] is True
        assert doc["eta"] > 0

    def test_identical_posts_identical_bodies(self, served):
        _, client = served
        body = {"mechanism": "fixed", "scenario": {"kind": "GOVERNMENT_SUBSIDY", "n": 0.25}}
        a = client.post("/api/whatif", json=body).content
        b = client.post("/api/whatif", json=body).content
        assert a == b

    def test_invalid_body_is_400_with_field(self, served):
        _, client = served
        response = client.post("/api/whatif", json={"mechanism": "warp-drive"})
        assert response.status_code == 400
        errors = response.json()["errors"]
        assert errors and errors[0]["field"].startswith("mechanism")

    def test_missing_scenario_for_fixed_is_400(self, served):
        _, client = served
        response = client.post("/api/whatif", json={"mechanism": "fixed"})
        assert response.status_code == 400

    def test_api_calls_leave_artifacts_unchanged(self, served):
        state, client = served
        before = _tree_hashes(state.root)
        client.get("/api/summary")
        client.post(
            "/api/whatif",
            json={"mechanism": "fixed", "scenario": {"kind": "GOVERNMENT_SUBSIDY", "n": 0.3}},
        )
        client.post("/api/whatif", json={"mechanism": "flat", "amount": 3.0})
        assert _tree_hashes(state.root) == before


def test_resolve_bind(monkeypatch):
    assert resolve_bind("0.0.0.0:9000") == ("0.0.0.0", 9000)
    monkeypatch.setenv("EQUIRIDE_BIND", "10.1.2.3:7000")
    assert resolve_bind(None) == ("10.1.2.3", 7000)
    monkeypatch.delenv("EQUIRIDE_BIND")
    assert resolve_bind(None) == ("127.0.0.1", 8787)
