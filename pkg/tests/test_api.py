import pytest

from sfgsim.models import RunRecord

PAIR_SCENARIO = {
    "schema_version": 1,
    "name": "api-pair",
    "species": {"C": "P-control", "Q": "N-qubit"},
    "placements": [
        {"label": "C1", "species": "C", "position": [0.0, 0.0, 0.0]},
        {"label": "Q1", "species": "Q", "position": [8.0, 0.0, 0.0]},
        {"label": "Q2", "species": "Q", "position": [-8.0, 0.0, 0.0]},
    ],
    "spectral": {"homogeneous_width": 1.0},
    "epr": {"offsets": {"Q1": -50.0, "Q2": 50.0}},
    "gates": {"configure": False},
}


def test_presets(client):
    response = client.get("/api/presets")
    data = response.get_json()
    assert response.status_code == 200
    assert data["status"] == "ok"
    assert "table1" in data["scenarios"]
    assert data["species"]["N-qubit"]["radius_scale_factor"] == 0.5


def test_lattice_count(client):
    response = client.post("/api/lattice/count", json={"radii": [10, 2.6], "concentration": 0.01})
    rows = response.get_json()["rows"]
    assert [row["sites_with_center"] for row in rows] == [729, 17]
    assert rows[0]["expected_dopants"] == pytest.approx(7.29)


def test_lattice_count_needs_radii(client):
    response = client.post("/api/lattice/count", json={})
    assert response.status_code == 400
    assert response.get_json()["status"] == "error"


def test_emt_from_preset_and_binding_energy(client):
    model = client.post("/api/emt", json={"preset": "P-control"}).get_json()["model"]
    assert model["transition_energy_meV"] == pytest.approx(450.0)
    model = client.post("/api/emt", json={"binding_energy": 0.4}).get_json()["model"]
    assert model["orbital_radius_angstrom"] == pytest.approx(3.158, abs=1e-3)


@pytest.mark.parametrize(
    "body, status",
    [({}, 400), ({"binding_energy": -1.0}, 400), ({"preset": "Si:P"}, 400)],
)
def test_emt_errors(client, body, status):
    response = client.post("/api/emt", json=body)
    assert response.status_code == status
    assert response.get_json()["status"] == "error"


def test_emt_needs_a_json_body(client):
    response = client.post("/api/emt", data="not json", content_type="text/plain")
    assert response.status_code == 400
    assert response.get_json()["message"] == "Invalid JSON body"


def test_exchange_curve(client):
    response = client.post("/api/exchange_curve", json={"control": "P-control", "qubit": "N-qubit", "r": [8.0, 12.0]})
    data = response.get_json()
    assert response.status_code == 200
    assert data["columns"] == ["R_angstrom", "J_ground_meV", "J_excited_meV"]
    assert [row[0] for row in data["rows"]] == [8.0, 12.0]


def test_exchange_curve_errors(client):
    assert client.post("/api/exchange_curve", json={"control": "P-control"}).status_code == 400
    response = client.post("/api/exchange_curve", json={"control": "P-control", "qubit": "N-qubit", "r": [5.0, 4.0]})
    assert response.status_code == 400
    assert "strictly increasing" in response.get_json()["message"]


def test_feasibility_is_recorded(client, app):
    response = client.post("/api/feasibility", json={"scenario": PAIR_SCENARIO})
    data = response.get_json()
    assert response.status_code == 200
    run_id = data["run_id"]
    assert len(data["report"]["gates"]) == 1
    assert data["report"]["adjacency"] is None

    assert RunRecord.query.count() == 1
    listed = client.get("/api/runs").get_json()["runs"]
    assert [run["unique_id"] for run in listed] == [run_id]
    assert listed[0]["scenario"] == "api-pair"

    detail = client.get(f"/api/runs/{run_id}").get_json()["run"]
    assert detail["digest"] == data["report"]["digest"]
    assert detail["scenario_json"]["name"] == "api-pair"
    assert detail["report"]["digest"] == data["report"]["digest"]


def test_feasibility_seed_override(client):
    data = client.post("/api/feasibility", json={"scenario": PAIR_SCENARIO, "seed": 11}).get_json()
    assert data["report"]["seed"] == 11


def test_feasibility_errors(client):
    assert client.post("/api/feasibility", json={}).status_code == 400
    bad = dict(PAIR_SCENARIO, schema_version=2)
    response = client.post("/api/feasibility", json={"scenario": bad})
    assert response.status_code == 400
    assert "schema_version" in response.get_json()["message"]
    assert RunRecord.query.count() == 0


def test_unknown_run(client):
    response = client.get("/api/runs/not-a-run")
    assert response.status_code == 404
    assert response.get_json() == {"status": "error", "message": "Run not found"}
