import json
import math

import numpy as np
import pytest

from sfgsim import harness, integrals
from sfgsim.constants import HBAR_MEV_PS
from sfgsim.errors import PreconditionError, StageError
from sfgsim.scenario import load_preset, scenario_from_dict

J = 5.0


def _tables(j=J, cutoff=20.0):
    grid = [harness.TABLE_START, cutoff]
    return harness.PairTables(
        exchange={("C", "Q"): integrals.ExchangeTable(grid, [j, j])},
        transfer={("C", "C"): integrals.ExchangeTable(grid, [0.0, 0.0])},
    )


def _scenario(**extra):
    data = {
        "schema_version": 1,
        "name": "two-gates",
        "species": {"C": "P-control", "Q": "N-qubit"},
        "placements": [
            {"label": "C1", "species": "C", "position": [0.0, 0.0, 0.0]},
            {"label": "Q1", "species": "Q", "position": [8.0, 0.0, 0.0]},
            {"label": "Q2", "species": "Q", "position": [0.0, 8.0, 0.0]},
            {"label": "C2", "species": "C", "position": [100.0, 0.0, 0.0], "transition_shift": 5.0},
            {"label": "Q3", "species": "Q", "position": [108.0, 0.0, 0.0]},
        ],
        "integrals": {"mode": "table", "orientation": "averaged", "cutoff": 20.0},
        "spectral": {"homogeneous_width": 1.0},
        "epr": {"offsets": {"Q1": -50.0, "Q2": 0.0, "Q3": 50.0}},
    }
    data.update(extra)
    return scenario_from_dict(data)


@pytest.fixture(scope="module")
def report():
    return harness.run_feasibility(_scenario(), tables=_tables())


def test_stage_wraps_errors():
    with pytest.raises(StageError) as excinfo:
        with harness.stage("spins"):
            raise ValueError("boom")
    assert excinfo.value.stage == "spins"
    assert str(excinfo.value) == "[spins] boom"
    with pytest.raises(StageError) as excinfo:
        with harness.stage("outer"):
            with harness.stage("inner"):
                raise ValueError("boom")
    assert excinfo.value.stage == "inner"


def test_clean_makes_values_json_ready():
    cleaned = harness._clean({"a": np.float64("nan"), 1: np.arange(2), "b": (np.int64(3), 1.5)})
    assert cleaned == {"a": None, "1": [0, 1], "b": [3, 1.5]}


def test_exchange_only_within_the_cutoff(report):
    pairs = {(row["control"], row["qubit"]) for row in report.exchange_table}
    assert pairs == {("C1", "Q1"), ("C1", "Q2"), ("C2", "Q3")}
    assert all(row["exchange_meV"] == pytest.approx(J) for row in report.exchange_table)
    assert report.lattice["mode"] == "explicit"
    assert report.lattice["n_controls"] == 2


def test_transitions_and_counts(report):
    energies = {t["control"]: t["energy_meV"] for t in report.transitions}
    assert energies["C1"] == pytest.approx(450.0)
    assert energies["C2"] == pytest.approx(455.0)
    assert all(t["resolvable"] for t in report.transitions)
    assert report.resolvable_gate_count == 2
    # only C1 reaches two qubits
    assert report.usable_gate_count == 1


def test_gate_entries(report):
    gates = {g["control"]: g for g in report.gates}
    assert gates["C2"]["status"] == "not_a_gate"
    c1 = gates["C1"]
    assert c1["status"] == "clean"
    assert c1["qubits"] == ["Q1", "Q2"]
    assert c1["j_eff"][0]["j_eff_meV"] == pytest.approx(J * J / 600.0)
    first = 4.0 * math.pi * HBAR_MEV_PS / (3.0 * J)
    assert min(abs(c1["duration_ps"] - first), abs(c1["duration_ps"] - 2 * first)) < 1e-4 * first
    assert c1["coherence_budget_s"] == pytest.approx(1e-3)
    assert c1["time_budget_ratio"] == pytest.approx(c1["duration_ps"] / 1e9)


def test_adjacency_is_recovered(report):
    adjacency = report.adjacency
    assert adjacency["recovered"] is True
    assert adjacency["inferred"] == {"C1": ["Q1", "Q2"], "C2": ["Q3"]}
    assert adjacency["truth"] == adjacency["inferred"]
    (calibration,) = adjacency["calibration"]
    assert calibration["control"] == "C1"
    assert calibration["fidelity"] > 0.99


def test_report_serialization(report):
    data = report.to_dict()
    assert data["report_version"] == harness.REPORT_VERSION
    assert data["digest"] == report.digest
    assert "generated_at" in data
    assert "generated_at" not in report.to_dict(include_timestamp=False)
    assert json.loads(report.to_json()) == json.loads(json.dumps(data))


def test_reports_are_reproducible(report):
    again = harness.run_feasibility(_scenario(), tables=_tables())
    assert again.digest == report.digest


def test_skipping_simulation_and_configuration():
    scenario = _scenario(gates={"simulate": False, "configure": False})
    result = harness.run_feasibility(scenario, tables=_tables())
    statuses = {g["control"]: g["status"] for g in result.gates}
    assert statuses == {"C1": "candidate", "C2": "not_a_gate"}
    assert result.adjacency is None


def test_too_many_qubits_are_skipped():
    scenario = _scenario(gates={"max_qubits": 1, "configure": False})
    result = harness.run_feasibility(scenario, tables=_tables())
    assert {g["control"]: g["status"] for g in result.gates}["C1"] == "skipped"


def test_weak_couplings_fall_below_detection():
    result = harness.run_feasibility(_scenario(gates={"configure": False}), tables=_tables(j=0.5))
    assert result.usable_gate_count == 0
    assert all(g["status"] == "not_a_gate" for g in result.gates)


def test_missing_epr_offsets_fail_in_configure():
    scenario = _scenario(epr={"offsets": {"Q1": -50.0, "Q2": 0.0}})
    with pytest.raises(StageError) as excinfo:
        harness.run_feasibility(scenario, tables=_tables())
    assert excinfo.value.stage == "configure"
    assert "Q3" in str(excinfo.value)


def test_table_mode_needs_a_cutoff():
    scenario = _scenario(integrals={"mode": "table"})
    with pytest.raises(StageError) as excinfo:
        harness.run_feasibility(scenario)
    assert excinfo.value.stage == "integrals"
    assert isinstance(excinfo.value.cause, PreconditionError)


def test_scan_of_a_prepared_scenario():
    state = harness.prepare(_scenario(), tables=_tables())
    assert state.coupled == {"C1": ["Q1", "Q2"], "C2": ["Q3"]}
    scan = harness.scenario_scan(state)
    assert scan.qubit_lines == {"Q1": -50.0, "Q2": 0.0, "Q3": 50.0}


def test_sampled_epr_offsets_are_seeded():
    scenario = _scenario(epr={"spread": 200.0, "min_spacing": 40.0})
    first = harness.scenario_scan(harness.prepare(scenario, tables=_tables())).qubit_lines
    again = harness.scenario_scan(harness.prepare(scenario, tables=_tables())).qubit_lines
    assert first == again
    assert min(np.diff(sorted(first.values()))) >= 40.0


def test_resolvability_distribution():
    result = harness.run_feasibility(load_preset("shen-nv"))
    assert result.transitions == []
    assert result.gates == []
    assert result.adjacency is None
    stats = result.resolvability
    assert stats["ratio"] == pytest.approx(5.0 / 0.36)
    assert 8 <= stats["mean"] <= 12
    assert sum(stats["histogram"].values()) == 1000


def _patch_template(**extra):
    data = {
        "schema_version": 1,
        "name": "small-patch",
        "seed": 3,
        "lattice": {"bounding_radius": 8.0},
        "species": {"C": "P-control", "Q": "N-qubit"},
        "random": {"concentration": 0.05, "species_mix": {"C": 0.5, "Q": 0.5}},
        "integrals": {"mode": "table", "cutoff": 20.0},
        "spectral": {"homogeneous_width": 1.0, "disorder": [{"name": "strain", "width": 15.0}]},
        "gates": {"simulate": False, "configure": False},
        "targets": {"n_gates": 2},
    }
    data.update(extra)
    return scenario_from_dict(data)


def test_random_placements_are_labelled_by_role():
    template = _patch_template()
    placements, info = harness.resolve_placements(template)
    assert info["mode"] == "random"
    assert info["n_dopants"] == len(placements)
    controls = [p.label for p in placements if p.species == "C"]
    assert controls == [f"C{i + 1}" for i in range(len(controls))]


def test_patch_statistics_do_not_depend_on_workers():
    template = _patch_template()
    serial = harness.patch_statistics(template, n_patches=4, workers=1, tables=_tables())
    threaded = harness.patch_statistics(template, n_patches=4, workers=2, tables=_tables())
    assert serial.counts == threaded.counts
    assert len(serial.counts) == 4
    assert sum(serial.distribution.values()) == pytest.approx(1.0)
    assert serial.fraction_meeting_target == pytest.approx(np.mean(np.array(serial.counts) >= 2))
    assert serial.to_dict()["seed"] == 3


def test_patch_statistics_preconditions():
    with pytest.raises(PreconditionError):
        harness.patch_statistics(_scenario(), n_patches=2, tables=_tables())
    with pytest.raises(PreconditionError):
        harness.patch_statistics(_patch_template(), n_patches=0, tables=_tables())


def _curve_scenario(curve):
    return scenario_from_dict(
        {"schema_version": 1, "name": "curve", "species": {"C": "P-control", "Q": "N-qubit"}, "curve": curve}
    )


def test_splitting_curve():
    result = harness.run_curve(_curve_scenario({"kind": "splitting", "r_min": 8.0, "r_max": 10.0, "r_step": 1.0}))
    assert result.columns == ["R_angstrom", "E_lower_meV", "E_upper_meV", "splitting_meV"]
    assert [row[0] for row in result.rows] == pytest.approx([8.0, 9.0, 10.0])
    for _, lower, upper, splitting in result.rows:
        assert lower + upper == pytest.approx(900.0)
        assert splitting == pytest.approx(upper - lower)
    assert result.extras["transition_energy_meV"] == pytest.approx(450.0)


def test_exchange_curve():
    result = harness.run_curve(
        _curve_scenario({"kind": "exchange", "control": "C", "qubit": "Q", "r_min": 6.0, "r_max": 8.0, "r_step": 1.0})
    )
    assert result.columns == ["R_angstrom", "J_ground_meV", "J_excited_meV"]
    assert len(result.rows) == 3
    assert result.extras["orientation"] == "inter_center"
    assert result.to_dict()["name"] == "curve"


def test_curve_needs_a_curve_section():
    with pytest.raises(PreconditionError):
        harness.run_curve(_scenario())


def test_last_crossing():
    r = np.array([1.0, 2.0, 3.0, 4.0])
    assert harness._last_crossing(r, np.array([-1.0, 1.0, -1.0, 3.0])) == pytest.approx(3.25)
    assert harness._last_crossing(r, np.array([1.0, 2.0, 3.0, 4.0])) is None


def test_empty_scenario_reports_no_gates():
    report = harness.run_feasibility(_scenario(placements=[], epr={}))
    assert report.lattice["n_dopants"] == 0
    assert report.exchange_table == []
    assert report.transitions == []
    assert report.resolvable_gate_count == 0
    assert report.usable_gate_count == 0
    assert report.gates == []
    assert report.adjacency is None


def test_first_maximum():
    r = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    assert harness._first_maximum(r, np.array([1.0, 3.0, 2.0, 4.0, 0.0])) == pytest.approx(2.0)
    assert harness._first_maximum(r, np.array([5.0, 4.0, 3.0, 2.0, 1.0])) is None


def test_curve_extras_carry_the_seed():
    scenario = _curve_scenario({"kind": "exchange", "r_min": 6.0, "r_max": 7.0, "r_step": 1.0})
    result = harness.run_curve(scenario.with_random_seed(7))
    assert result.extras["seed"] == 7
    assert result.extras["dominance_factor"] == pytest.approx(integrals.DOMINANCE_FACTOR)


@pytest.mark.slow
@pytest.mark.parametrize(
    "preset, crossover, dominance",
    [("fig2a", 4.6, (6.0, 12.0)), ("fig2b", 6.9, (13.0, 23.0))],
)
def test_excited_exchange_dominates_beyond_a_few_radii(preset, crossover, dominance):
    extras = harness.run_curve(load_preset(preset)).extras
    assert extras["crossover_radius_angstrom"] == pytest.approx(crossover, abs=0.4)
    assert dominance[0] <= extras["dominance_radius_angstrom"] <= dominance[1]
    assert extras["crossover_radius_angstrom"] < extras["dominance_radius_angstrom"]


@pytest.mark.slow
def test_soft_control_dominates_at_a_larger_radius():
    hard = harness.run_curve(load_preset("fig2a")).extras["dominance_radius_angstrom"]
    soft = harness.run_curve(load_preset("fig2b")).extras["dominance_radius_angstrom"]
    assert soft > hard


@pytest.mark.slow
def test_splitting_falls_after_its_first_maximum():
    result = harness.run_curve(load_preset("fig3"))
    r = np.array([row[0] for row in result.rows])
    splitting = np.array([row[3] for row in result.rows])
    first = result.extras["first_maximum_angstrom"]
    assert 14.5 <= first <= 17.5
    assert np.all(np.diff(splitting[r >= first]) < 0)
    assert np.all(np.diff(splitting[r <= 13.0]) < 0)
    window = splitting[(r >= 10.0) & (r <= 25.0)]
    assert 40.0 <= window.max() - window.min() <= 48.0


@pytest.fixture(scope="module")
def table1_report():
    return harness.run_feasibility(load_preset("table1"))


@pytest.mark.slow
def test_table1_exchange_ranking(table1_report):
    reference = load_preset("table1").metadata["reference_exchange_meV"]
    pairs = [row["control"] + row["qubit"] for row in table1_report.exchange_table]
    assert pairs == ["C2Q3", "C1Q1", "C1Q2", "C2Q2", "C1Q3", "C2Q1"]
    for row in table1_report.exchange_table:
        expected = reference[row["control"] + row["qubit"]]
        assert expected / 3.0 <= row["exchange_meV"] <= expected * 3.0, row


@pytest.mark.slow
def test_table1_gates_and_adjacency(table1_report):
    gates = {g["control"]: g for g in table1_report.gates}
    assert gates["C1"]["qubits"] == ["Q1", "Q2"]
    assert gates["C2"]["qubits"] == ["Q3", "Q2"]
    for control, expected in (("C1", 0.7), ("C2", 0.4)):
        (pair,) = gates[control]["j_eff"]
        assert expected / 2.0 <= pair["j_eff_meV"] <= expected * 2.0
    assert table1_report.adjacency["inferred"] == {"C1": ["Q1", "Q2"], "C2": ["Q2", "Q3"]}
    assert table1_report.adjacency["recovered"] is True
