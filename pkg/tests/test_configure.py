import numpy as np
import pytest

from sfgsim import configure
from sfgsim.errors import DependencyError, PreconditionError
from sfgsim.spectra import SpectralModel

COUPLINGS = {
    ("C2", "Q3"): 41.2,
    ("C1", "Q1"): 32.3,
    ("C1", "Q2"): 10.5,
    ("C2", "Q2"): 5.6,
    ("C1", "Q3"): 0.2,
    ("C2", "Q1"): 0.01,
}
LINES = {"C1": 447.0, "C2": 453.0}


@pytest.fixture(scope="module")
def scan():
    epr = configure.EprModel({"Q1": -60.0, "Q2": 0.0, "Q3": 60.0})
    return configure.simulate_scan(LINES, COUPLINGS, SpectralModel(450.0, 1.0), epr)


def test_offsets_keep_their_spacing():
    offsets = configure.sample_epr_offsets(["a", "b", "c", "d"], spread=200.0, min_spacing=40.0, seed=3)
    values = sorted(offsets.values())
    assert min(np.diff(values)) >= 40.0
    assert all(-100.0 <= v <= 100.0 for v in values)
    assert configure.sample_epr_offsets(["a", "b", "c", "d"], 200.0, 40.0, seed=3) == offsets


def test_offsets_that_cannot_fit():
    with pytest.raises(PreconditionError):
        configure.sample_epr_offsets(["a", "b", "c"], spread=10.0, min_spacing=40.0, max_attempts=50)


def test_scan_axes_cover_every_line(scan):
    assert scan.optical_axis[0] <= 444.0 + 1e-9
    assert scan.optical_axis[-1] >= 455.5
    assert scan.epr_axis[0] < -60.0 - 16.15
    assert scan.epr_axis[-1] > 60.0 + 20.6
    assert scan.response.shape == (len(scan.optical_axis), len(scan.epr_axis))


def test_off_resonance_rows_show_bare_lines(scan):
    row = scan.response[0]
    for offset in (-60.0, 0.0, 60.0):
        assert row[np.argmin(np.abs(scan.epr_axis - offset))] == pytest.approx(1.0, abs=1e-2)


def test_resonant_row_splits_the_coupled_lines(scan):
    r = int(np.argmin(np.abs(scan.optical_axis - LINES["C1"])))
    row = scan.response[r]

    def at(x):
        return row[np.argmin(np.abs(scan.epr_axis - x))]

    # Q1 at -60 splits by 32.3 into -76.15 and -43.85
    assert at(-60.0) < 0.01
    assert at(-76.15) == pytest.approx(0.5, abs=0.05)
    assert at(-43.85) == pytest.approx(0.5, abs=0.05)


def test_scan_needs_lines_and_offsets():
    epr = configure.EprModel({"Q1": 0.0})
    with pytest.raises(DependencyError):
        configure.simulate_scan({}, {("C1", "Q1"): 1.0}, SpectralModel(450.0, 1.0), epr)
    with pytest.raises(DependencyError):
        configure.simulate_scan({"C1": 450.0}, {("C1", "Q9"): 1.0}, SpectralModel(450.0, 1.0), epr)
    with pytest.raises(PreconditionError):
        configure.simulate_scan({}, {}, SpectralModel(450.0, 1.0), configure.EprModel({}, linewidth=0.0))


def test_inference_recovers_the_couplings(scan):
    hypothesis = configure.infer_adjacency(scan, detection_threshold=1.0)
    assigned = hypothesis.assign(LINES)
    assert set(assigned) == {"C1", "C2"}
    c1, c2 = assigned["C1"], assigned["C2"]
    assert c1.qubits == ("Q1", "Q2")
    assert c2.qubits == ("Q2", "Q3")
    assert c1.couplings["Q1"] == pytest.approx(32.3, rel=1e-3)
    assert c1.couplings["Q2"] == pytest.approx(10.5, rel=1e-3)
    assert c2.couplings["Q3"] == pytest.approx(41.2, rel=1e-3)
    assert c2.couplings["Q2"] == pytest.approx(5.6, rel=1e-3)
    assert c1.flags == [] and c2.flags == []
    assert c1.optical_energy == pytest.approx(447.0, abs=0.1)
    assert hypothesis.as_mapping(LINES) == {"C1": {"Q1", "Q2"}, "C2": {"Q2", "Q3"}}


def test_threshold_drops_weak_couplings(scan):
    hypothesis = configure.infer_adjacency(scan, detection_threshold=8.0)
    assert hypothesis.as_mapping(LINES) == {"C1": {"Q1", "Q2"}, "C2": {"Q3"}}


def test_overlapping_lines_are_flagged():
    epr = configure.EprModel({"Q1": -30.0, "Q2": 30.0})
    lines = {"C1": 450.0, "C2": 450.6}
    couplings = {("C1", "Q1"): 12.0, ("C2", "Q2"): 9.0}
    scan = configure.simulate_scan(lines, couplings, SpectralModel(450.0, 1.0), epr)
    entries = configure.infer_adjacency(scan).entries
    assert len(entries) == 2
    assert all("ambiguous" in e.flags for e in entries)


def test_controls_within_one_homogeneous_width_are_excited():
    epr = configure.EprModel({"Q1": 0.0})
    lines = {"C1": 450.0, "C2": 449.2}
    couplings = {("C1", "Q1"): 8.0, ("C2", "Q1"): 20.0}
    scan = configure.simulate_scan(lines, couplings, SpectralModel(450.0, 1.0), epr, optical_axis=[450.8])
    bare = configure.simulate_scan({}, {}, SpectralModel(450.0, 1.0), epr, epr_axis=scan.epr_axis).response[0]
    row = scan.response[0]
    assert not np.allclose(row, bare)
    # C1 is 0.8 widths from the drive, C2 is 1.6 widths away
    assert row[np.argmin(np.abs(scan.epr_axis - 4.0))] == pytest.approx(0.5, abs=0.05)
    assert row[np.argmin(np.abs(scan.epr_axis - 10.0))] < 0.01

    entries = configure.infer_adjacency(scan).entries
    assert len(entries) == 1
    assert entries[0].couplings["Q1"] == pytest.approx(8.0, rel=1e-3)


def test_uncoupled_scan_has_no_entries():
    epr = configure.EprModel({"Q1": 0.0})
    scan = configure.simulate_scan({"C1": 450.0}, {}, SpectralModel(450.0, 1.0), epr)
    assert configure.infer_adjacency(scan).entries == []


def test_csv_round_trip(scan, tmp_path):
    path = scan.to_csv(str(tmp_path / "scan.csv"))
    loaded = configure.ScanMap.from_csv(path)
    assert np.array_equal(loaded.optical_axis, scan.optical_axis)
    assert np.array_equal(loaded.epr_axis, scan.epr_axis)
    assert np.array_equal(loaded.response, scan.response)
    assert loaded.qubit_lines == scan.qubit_lines
    assert loaded.metadata == scan.metadata
    hypothesis = configure.infer_adjacency(loaded)
    assert hypothesis.as_mapping(LINES) == {"C1": {"Q1", "Q2"}, "C2": {"Q2", "Q3"}}


def test_assign_respects_the_tolerance():
    entry = configure.AdjacencyEntry(460.0, ("Q1",), {"Q1": 2.0})
    hypothesis = configure.AdjacencyHypothesis([entry], 1.0)
    assert hypothesis.assign(LINES) == {"C2": entry}
    assert hypothesis.assign(LINES, tolerance=1.0) == {}


def test_exact_couplings_calibrate_perfectly():
    couplings = {"Q1": 1.0, "Q2": 1.0}
    report = configure.calibrate_gate_time(couplings, couplings, "C1")
    assert report.fidelity_to_target == pytest.approx(1.0, abs=1e-6)
    assert report.control_residual_entanglement < 1e-6


def test_scaled_couplings_still_calibrate():
    truth = {"Q1": 1.0, "Q2": 1.0}
    inferred = {q: 1.05 * j for q, j in truth.items()}
    report = configure.calibrate_gate_time(inferred, truth, "C1")
    assert report.fidelity_to_target >= 0.95
    assert report.entangling_power > 0


def test_calibration_needs_two_qubits():
    with pytest.raises(PreconditionError):
        configure.calibrate_gate_time({"Q1": 1.0}, {"Q1": 1.0}, "C1")


@pytest.mark.slow
def test_inference_recovers_random_scans():
    rng = np.random.default_rng(11)
    qubits = ["Q1", "Q2", "Q3"]
    for seed in range(100):
        lines = {"C1": 450.0, "C2": 450.0 + rng.uniform(2.5, 10.0)}
        epr = configure.EprModel(configure.sample_epr_offsets(qubits, 400.0, 40.0, seed=seed))
        couplings = {}
        for control in lines:
            for qubit in qubits:
                strong = rng.random() < 0.5
                couplings[(control, qubit)] = rng.uniform(6.0, 30.0) if strong else rng.uniform(0.0, 0.2)
        scan = configure.simulate_scan(lines, couplings, SpectralModel(450.0, 1.0), epr)
        assigned = configure.infer_adjacency(scan, detection_threshold=1.0).assign(lines, tolerance=1.0)
        for control in lines:
            expected = {q: j for (c, q), j in couplings.items() if c == control and j >= 1.0}
            entry = assigned.get(control, configure.AdjacencyEntry(lines[control], (), {}))
            assert entry.qubits == tuple(sorted(expected)), (seed, control)
            for qubit, j in expected.items():
                assert entry.couplings[qubit] == pytest.approx(j, rel=1e-3), (seed, control, qubit)
