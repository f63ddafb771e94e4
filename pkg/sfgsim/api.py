from flask import Blueprint, current_app, jsonify, request
from werkzeug.exceptions import HTTPException

from . import donors, harness, integrals, lattice
from .constants import DIAMOND_DIELECTRIC_CONSTANT, DIAMOND_LATTICE_CONSTANT
from .errors import SfgError
from .models import RunRecord, record_run
from .scenario import list_presets, load_preset, scenario_from_dict

api = Blueprint("api", __name__)


@api.errorhandler(SfgError)
def handle_simulator_error(error):
    current_app.logger.warning("api request failed: %s", error)
    return jsonify({"status": "error", "message": str(error)}), 400


@api.errorhandler(Exception)
def handle_unexpected_error(error):
    if isinstance(error, HTTPException):
        return error
    current_app.logger.exception("api request crashed")
    return jsonify({"status": "error", "message": f"internal error: {error.__class__.__name__}"}), 500


def _payload():
    data = request.get_json(silent=True)
    if not isinstance(data, dict):
        return None
    return data


def _scenario(data):
    # Either a preset name or an inline scenario object
    if "preset" in data:
        scenario = load_preset(str(data["preset"]))
    elif isinstance(data.get("scenario"), dict):
        scenario = scenario_from_dict(data["scenario"])
    else:
        return None
    if "seed" in data:
        scenario = scenario.with_random_seed(int(data["seed"]))
    return scenario


@api.route("/api/presets", methods=["GET"])
def presets():
    return jsonify(
        {
            "status": "ok",
            "scenarios": list_presets(),
            "species": {name: donors.model_to_dict(model) for name, model in donors.load_presets().items()},
        }
    )


@api.route("/api/lattice/count", methods=["POST"])
def lattice_count():
    data = _payload()
    if data is None or not data.get("radii"):
        return jsonify({"status": "error", "message": "Provide a list of radii"}), 400

    rows = lattice.sphere_count_table(
        [float(r) for r in data["radii"]],
        float(data.get("lattice_constant", DIAMOND_LATTICE_CONSTANT)),
        data.get("concentration"),
    )
    return jsonify({"status": "ok", "rows": rows})


@api.route("/api/emt", methods=["POST"])
def emt():
    data = _payload()
    if data is None:
        return jsonify({"status": "error", "message": "Invalid JSON body"}), 400

    if "preset" in data:
        model = donors.get_preset(str(data["preset"]))
    elif "binding_energy" in data:
        model = donors.model_from_ionization(
            float(data["binding_energy"]),
            float(data.get("dielectric_constant", DIAMOND_DIELECTRIC_CONSTANT)),
            float(data.get("central_cell_split", 0.0)),
        )
    else:
        return jsonify({"status": "error", "message": "Provide a preset or a binding_energy"}), 400

    out = donors.model_to_dict(model)
    out.update(
        orbital_radius_angstrom=model.orbital_radius,
        transition_energy_meV=model.transition_energy,
        effective_mass_ratio=model.effective_mass_ratio,
    )
    return jsonify({"status": "ok", "model": out})


@api.route("/api/exchange_curve", methods=["POST"])
def exchange_curve():
    data = _payload()
    if data is None or not data.get("control") or not data.get("qubit"):
        return jsonify({"status": "error", "message": "Provide control and qubit presets"}), 400

    control = donors.get_preset(str(data["control"]))
    qubit = donors.get_preset(str(data["qubit"]))
    r_grid = [float(r) for r in data.get("r", [5.0, 10.0, 15.0, 20.0])]
    n_terms = int(data.get("n_terms", current_app.config["GAUSSIAN_TERMS"]))
    ground = integrals.exchange_curve(control, qubit, False, r_grid, n_terms=n_terms)
    excited = integrals.exchange_curve(
        control, qubit, True, r_grid, orientation=data.get("orientation", "inter_center"), n_terms=n_terms
    )
    rows = [[r, g.exchange_splitting, e.exchange_splitting] for r, g, e in zip(r_grid, ground, excited)]
    return jsonify({"status": "ok", "columns": ["R_angstrom", "J_ground_meV", "J_excited_meV"], "rows": rows})


@api.route("/api/feasibility", methods=["POST"])
def feasibility():
    data = _payload()
    scenario = _scenario(data) if data is not None else None
    if scenario is None:
        return jsonify({"status": "error", "message": "Provide a preset name or a scenario object"}), 400

    report = harness.run_feasibility(scenario)
    report_dict = report.to_dict()
    record = record_run("feasibility", scenario, scenario.seed, report_dict, report.digest)
    current_app.logger.info("recorded feasibility run %s for %s", record.rr_unique_id, scenario.name)
    return jsonify({"status": "ok", "run_id": record.rr_unique_id, "report": report_dict})


@api.route("/api/runs", methods=["GET"])
def runs():
    records = RunRecord.query.order_by(RunRecord.rr_created_at.desc(), RunRecord.rr_id.desc()).all()
    return jsonify({"status": "ok", "runs": [r.to_summary() for r in records]})


@api.route("/api/runs/<string:unique_id>", methods=["GET"])
def run_detail(unique_id):
    record = RunRecord.query.filter_by(rr_unique_id=unique_id).first()
    if not record:
        return jsonify({"status": "error", "message": "Run not found"}), 404
    return jsonify({"status": "ok", "run": record.to_dict()})
