"""HTTP surface, exercised through FastAPI's test client."""

import pytest
from fastapi.testclient import TestClient

from app.core.data_loader import load_series
from app.main import app


@pytest.fixture
def client():
    with TestClient(app) as client:
        yield client


def test_available_options(client):
    response = client.get("/available-options")
    assert response.status_code == 200
    options = response.json()
    assert "hdt_mcauliffe_road_test" in options["vehicles"]
    assert "ldv2_trail" in options["datasets"]
    assert options["reproduce_targets"] == ["table2", "headways", "savings_summary"]


def test_status_reports_a_valid_configuration(client):
    response = client.get("/status")
    assert response.status_code == 200
    assert response.json()["config_valid"] is True


def test_fit_drag_ratios(client, dataset_path):
    points = [list(p) for p in load_series(dataset_path("bus2_trail")).points]
    response = client.post("/fit", json={"points": points, "platoon_size": 2, "vehicle_class": "Bus"})
    assert response.status_code == 200
    body = response.json()
    assert body["status"] == "success"
    assert body["model"]["vehicle_class"] == "Bus"
    assert body["model"]["g_o_m"] == pytest.approx(268.79, rel=0.05)
    assert body["report"]["converged"] is True


def test_fit_with_too_few_points_is_unprocessable(client):
    response = client.post("/fit", json={"points": [[1, 0.5], [2, 0.6], [3, 0.7]]})
    assert response.status_code == 422
    assert "at least 4 points" in response.json()["detail"]


def test_fit_with_infeasible_bounds_reports_the_category(client):
    points = [[5, 0.7], [10, 0.8], [15, 0.85], [20, 0.9]]
    response = client.post("/fit", json={"points": points, "g_o_bounds": [50, 40]})
    assert response.status_code == 422
    assert response.json()["category"] == "invalid_problem"


def test_invert_zero_change(client):
    points = [[5, 0.0], [10, 0.0], [15, 0.0], [20, 0.0]]
    response = client.post("/invert", json={"points": points, "speed_kmh": 100, "spec": "hdt_mcauliffe_road_test"})
    assert response.status_code == 200
    assert [ratio for _, ratio in response.json()["points"]] == pytest.approx([1.0] * 4, abs=1e-9)


def test_invert_below_idle_is_a_pointwise_error(client):
    points = [[5, 0.05], [10, 0.04], [15, 0.99], [20, 0.01]]
    response = client.post("/invert", json={"points": points, "speed_kmh": 100, "spec": "hdt_mcauliffe_road_test"})
    assert response.status_code == 422
    body = response.json()
    assert body["category"] == "pointwise"
    assert body["detail"].startswith("point 2")


def test_curve(client):
    response = client.post("/curve", json={"spec": "hdt_x_laden", "abscissa": "time_s",
                                           "x_range": [0.5, 2.0], "step": 1.5})
    assert response.status_code == 200
    body = response.json()
    assert body["positions"] == ["lead", "middle_2", "trail"]
    assert [s["x"] for s in body["samples"]] == [0.5, 2.0]
    assert 100 * body["samples"][0]["average"] == pytest.approx(-7.0480, abs=1e-3)


def test_curve_outside_the_domain(client):
    response = client.post("/curve", json={"spec": "bus_m", "x_range": [1, 99999], "step": 1})
    assert response.status_code == 422
    assert response.json()["category"] == "domain"


def test_headways(client):
    response = client.get("/headways", params={"gap_time_s": 0.5, "speed_kmh": 100})
    assert response.status_code == 200
    rows = response.json()["rows"]
    assert [round(r["headway_s"], 3) for r in rows] == [0.678, 0.932, 1.318]


def test_reproduce(client):
    response = client.get("/reproduce/savings_summary")
    assert response.status_code == 200
    body = response.json()
    assert body["passed"] is False
    assert len(body["items"]) == 8
    assert sum(not item["passed"] for item in body["items"]) == 2


def test_reproduce_headways_passes(client):
    response = client.get("/reproduce/headways")
    assert response.status_code == 200
    assert response.json()["passed"] is True


def test_reproduce_unknown_target(client):
    response = client.get("/reproduce/table9")
    assert response.status_code == 422
    assert response.json()["category"] == "invalid_problem"
