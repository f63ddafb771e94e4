import math

import numpy as np
import pytest

from sfgsim import spins
from sfgsim.constants import HBAR_MEV_PS
from sfgsim.errors import NoCleanGateError, PreconditionError, ShapeError, SystemSizeError

CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
SQRT_SWAP = np.array(
    [[1, 0, 0, 0], [0, 0.5 + 0.5j, 0.5 - 0.5j, 0], [0, 0.5 - 0.5j, 0.5 + 0.5j, 0], [0, 0, 0, 1]], dtype=complex
)


def _total_sz(n):
    values = np.zeros(2 ** n)
    for index in range(2 ** n):
        bits = [(index >> (n - 1 - k)) & 1 for k in range(n)]
        values[index] = sum(0.5 if b == 0 else -0.5 for b in bits)
    return values


@pytest.fixture
def triangle():
    return spins.SpinSystem(
        labels=["c", "q1", "q2"],
        roles=["control", "qubit", "qubit"],
        couplings={("c", "q1"): 1.3, ("c", "q2"): 0.7, ("q1", "q2"): 0.2},
        zeeman=[0.5, -0.1, 0.0],
    )


def test_spin_system_normalizes_couplings(triangle):
    assert triangle.coupling("q1", "c") == 1.3
    assert triangle.coupling(2, 0) == 0.7
    assert triangle.dimension == 8
    moved = triangle.reordered([2, 0, 1])
    assert moved.labels == ["q2", "c", "q1"]
    assert moved.coupling("q2", "c") == 0.7
    assert moved.zeeman == [0.0, 0.5, -0.1]


def test_spin_system_rejects_bad_couplings():
    with pytest.raises(PreconditionError):
        spins.SpinSystem(["a", "b"], ["qubit", "qubit"], {("a", "a"): 1.0})
    with pytest.raises(PreconditionError):
        spins.SpinSystem(["a", "b"], ["qubit", "qubit"], {("a", "b"): float("nan")})
    with pytest.raises(PreconditionError):
        spins.SpinSystem(["a", "b"], ["qubit"])


def test_two_spin_hamiltonian():
    system = spins.SpinSystem(["a", "b"], ["qubit", "qubit"], {("a", "b"): 2.0}, zeeman=[1.0, 0.0])
    expected = np.array(
        [
            [0.5 + 0.5, 0, 0, 0],
            [0, -0.5 + 0.5, 1.0, 0],
            [0, 1.0, -0.5 - 0.5, 0],
            [0, 0, 0, 0.5 - 0.5],
        ]
    )
    assert np.allclose(spins.build_hamiltonian(system), expected)


def test_dense_limit():
    n = spins.MAX_SPINS + 1
    system = spins.SpinSystem([str(i) for i in range(n)], ["qubit"] * n)
    with pytest.raises(SystemSizeError):
        spins.build_hamiltonian(system)


def test_propagator_is_unitary(triangle):
    u = spins.propagator(spins.build_hamiltonian(triangle), 3.7)
    assert np.allclose(u.conj().T @ u, np.eye(8), atol=1e-10)


def test_exchange_swaps_a_pair_after_pi_hbar_over_j():
    j = 0.8
    h = spins.build_hamiltonian(spins.SpinSystem(["a", "b"], ["qubit", "qubit"], {("a", "b"): j}))
    up_down = np.array([0, 1, 0, 0], dtype=complex)
    out = spins.evolve(up_down, h, spins.characteristic_gate_time(j))
    assert abs(out[2]) == pytest.approx(1.0, abs=1e-10)


def test_total_sz_is_conserved(triangle):
    rng = np.random.default_rng(4)
    state = rng.normal(size=8) + 1j * rng.normal(size=8)
    state /= np.linalg.norm(state)
    sz = _total_sz(3)
    rows = spins.evolve(state, spins.build_hamiltonian(triangle), np.linspace(0.0, 20.0, 7))
    values = (np.abs(rows) ** 2) @ sz
    assert np.allclose(values, values[0], atol=1e-12)


def test_evolve_needs_a_normalized_state(triangle):
    with pytest.raises(PreconditionError):
        spins.evolve(np.ones(8), spins.build_hamiltonian(triangle), 1.0)


def test_qubits_swap_through_a_detuned_control():
    # control Zeeman 600 meV, J = 20 meV to each qubit; the virtual level sits 590 meV up
    system = spins.SpinSystem(
        ["c", "q1", "q2"], ["control", "qubit", "qubit"], {("c", "q1"): 20.0, ("c", "q2"): 20.0}, zeeman=[600.0, 0, 0]
    )
    start = np.zeros(8, dtype=complex)
    start[0b101] = 1.0
    j_eff = spins.effective_coupling(20.0, 20.0, 590.0)
    out = spins.evolve(start, spins.build_hamiltonian(system), 2.0 * spins.characteristic_gate_time(j_eff))
    assert abs(out[0b110]) ** 2 > 0.9


def test_effective_coupling_and_gate_time():
    assert spins.effective_coupling(20.0, 20.0, 600.0) == pytest.approx(2.0 / 3.0)
    assert spins.characteristic_gate_time(0.5) == pytest.approx(math.pi * HBAR_MEV_PS / 0.5)
    assert spins.characteristic_gate_time(-0.5) == pytest.approx(4.1356, abs=1e-3)
    with pytest.raises(PreconditionError):
        spins.effective_coupling(1.0, 1.0, 0.0)


@pytest.mark.parametrize(
    "unitary, expected",
    [(np.eye(4), 0.0), (spins.SWAP, 0.0), (CNOT, 2.0 / 9.0), (SQRT_SWAP, 1.0 / 6.0)],
)
def test_entangling_power(unitary, expected):
    assert spins.entangling_power(np.asarray(unitary, dtype=complex)) == pytest.approx(expected, abs=1e-12)


def test_entangling_power_matches_product_state_average():
    estimate = spins.linear_entangling_power_mc(SQRT_SWAP, n_samples=400000, seed=1)
    assert estimate == pytest.approx(spins.entangling_power(SQRT_SWAP), abs=1e-3)


def test_entangling_power_shape():
    with pytest.raises(ShapeError):
        spins.entangling_power(np.eye(8))


def test_state_metrics():
    bell = np.array([1, 0, 0, 1], dtype=complex) / math.sqrt(2.0)
    metrics = spins.entanglement_metrics(bell)
    assert metrics.concurrence == pytest.approx(1.0)
    assert metrics.entropy == pytest.approx(1.0)
    product = spins.entanglement_metrics(np.array([1, 0, 0, 0], dtype=complex))
    assert product.concurrence == pytest.approx(0.0)
    assert product.entropy == pytest.approx(0.0)


def test_density_and_unitary_metrics():
    bell = np.array([1, 0, 0, 1], dtype=complex) / math.sqrt(2.0)
    rho = np.outer(bell, bell.conj())
    assert spins.entanglement_metrics(rho).concurrence == pytest.approx(1.0, abs=1e-6)
    mixed = spins.entanglement_metrics(np.eye(4) / 4.0, kind="density")
    assert mixed.concurrence == pytest.approx(0.0)
    assert mixed.entropy == pytest.approx(1.0)
    gate = spins.entanglement_metrics(CNOT)
    assert gate.entropy == pytest.approx(1.0)
    assert gate.entangling_power == pytest.approx(2.0 / 9.0)


def test_metrics_reject_other_shapes():
    with pytest.raises(ShapeError):
        spins.entanglement_metrics(np.ones(3) / math.sqrt(3.0))
    with pytest.raises(ShapeError):
        spins.entanglement_metrics(np.ones((2, 3)))


def test_average_gate_fidelity():
    assert spins.average_gate_fidelity(CNOT, CNOT) == pytest.approx(1.0)
    x_on_first = np.kron([[0, 1], [1, 0]], np.eye(2))
    assert spins.average_gate_fidelity(x_on_first, np.eye(4)) == pytest.approx(0.2)


def _symmetric_system(j=1.0):
    return spins.SpinSystem(
        ["c", "q1", "q2"], ["control", "qubit", "qubit"], {("c", "q1"): j, ("c", "q2"): j}
    )


def test_sfg_gate_finds_a_clean_entangling_time():
    report = spins.sfg_gate(_symmetric_system(), "c")
    assert report.status == "clean"
    assert report.control_residual_entanglement < 1e-6
    assert report.entangling_power > 1e-3
    # the control decouples when the S12 = 1 levels rephase: tau = 4 pi n hbar / 3J
    first = 4.0 * math.pi * HBAR_MEV_PS / 3.0
    assert min(abs(report.duration - first), abs(report.duration - 2.0 * first)) < 1e-4 * first
    assert report.qubit_labels == ["q1", "q2"]
    u = report.qubit_unitary
    assert np.allclose(u.conj().T @ u, np.eye(4), atol=1e-8)


def test_sfg_gate_scores_against_a_target():
    report = spins.sfg_gate(_symmetric_system(), "c", target=np.eye(4))
    assert 0.0 <= report.fidelity_to_target < 1.0
    assert report.to_dict()["fidelity_to_target"] == report.fidelity_to_target


def test_sfg_gate_without_a_clean_time():
    system = _symmetric_system()
    with pytest.raises(NoCleanGateError) as excinfo:
        spins.sfg_gate(system, "c", tau_range=(0.1, 0.2))
    assert excinfo.value.best.status == "no_clean_gate"
    best = spins.sfg_gate(system, "c", tau_range=(0.1, 0.2), require_clean=False)
    assert best.status == "no_clean_gate"
    assert best.control_residual_entanglement > 1e-6


def test_sfg_gate_preconditions():
    pair = spins.SpinSystem(["c", "q"], ["control", "qubit"], {("c", "q"): 1.0})
    with pytest.raises(PreconditionError):
        spins.sfg_gate(pair, "c")
    system = spins.SpinSystem(
        ["c", "q1", "q2"], ["control", "qubit", "qubit"], {("c", "q1"): 1.0, ("q1", "q2"): 0.5}
    )
    with pytest.raises(PreconditionError):
        spins.sfg_gate(system, "c")
    with pytest.raises(PreconditionError):
        spins.sfg_gate(spins.SpinSystem(["c", "q1", "q2"], ["control", "qubit", "qubit"]), "c")
