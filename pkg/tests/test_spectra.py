import math

import numpy as np
import pytest

from sfgsim import spectra
from sfgsim.errors import DependencyError, PreconditionError


def _model(widths=(), homogeneous=1.0, base=450.0):
    return spectra.SpectralModel(
        base_transition_energy=base,
        homogeneous_width=homogeneous,
        disorder_components=[spectra.DisorderComponent(f"d{i}", w) for i, w in enumerate(widths)],
    )


def test_nm_widths_convert_at_the_zero_phonon_line():
    assert spectra.nm_width_to_mev(0.36) == pytest.approx(1.1000, abs=1e-3)
    assert spectra.nm_width_to_mev(5.0) == pytest.approx(15.278, abs=1e-2)


def test_nv_model_broadening_ratio():
    model = spectra.shen_nv_model()
    assert model.broadening_ratio == pytest.approx(5.0 / 0.36)
    assert model.base_transition_energy == pytest.approx(1946.4, abs=0.1)


def test_disorder_widths_add_in_quadrature():
    assert _model((3.0, 4.0)).inhomogeneous_width == pytest.approx(5.0)
    assert _model().inhomogeneous_width == 0.0


@pytest.mark.parametrize(
    "model",
    [
        _model(homogeneous=0.0),
        _model((-1.0,)),
        spectra.SpectralModel(450.0, 1.0, [spectra.DisorderComponent("x", 1.0, kind="lorentzian")]),
        spectra.SpectralModel(450.0, 1.0, resolution_factor=0.5),
    ],
)
def test_invalid_models(model):
    with pytest.raises(PreconditionError):
        model.validate()


def test_overlap_shifts_of_a_pair():
    shifts = spectra.control_overlap_shifts(["a", "b"], {("b", "a"): 2.0})
    assert sorted(shifts.values()) == pytest.approx([-2.0, 2.0])
    assert spectra.control_overlap_shifts(["a"], {}) == {"a": 0.0}


def test_overlap_shifts_keep_the_trace():
    labels = ["a", "b", "c"]
    shifts = spectra.control_overlap_shifts(labels, {("a", "b"): 3.0, ("b", "c"): 0.1, ("a", "c"): 0.0})
    assert set(shifts) == set(labels)
    assert sum(shifts.values()) == pytest.approx(0.0, abs=1e-12)
    # c barely couples so it keeps the small level
    assert abs(shifts["c"]) < 0.1


def test_overlap_shifts_need_every_pair():
    with pytest.raises(DependencyError):
        spectra.control_overlap_shifts(["a", "b", "c"], {("a", "b"): 1.0})


def test_transitions_without_disorder():
    lines = spectra.gate_transitions(["a", "b"], _model(), transfer={("a", "b"): 1.5}, static_shifts={"a": 3.0})
    energies = {line.gate_id: line.energy for line in lines}
    assert sorted([energies["a"] - 3.0, energies["b"]]) == pytest.approx([448.5, 451.5])
    assert lines[0].shift_breakdown["static"] == 3.0
    assert lines[1].shift_breakdown["static"] == 0.0
    assert all(line.width == 1.0 for line in lines)


def test_transitions_are_seeded():
    model = _model((10.0,))
    first = spectra.gate_transitions(["a"], model, seed=5)
    again = spectra.gate_transitions(["a"], model, seed=5)
    other = spectra.gate_transitions(["a"], model, seed=6)
    assert first[0].energy == again[0].energy
    assert first[0].energy != other[0].energy
    assert first[0].shift_breakdown["d0"] == pytest.approx(first[0].energy - 450.0)


def test_breakdown_adds_up_to_the_energy():
    model = _model((10.0, 4.0))
    lines = spectra.gate_transitions(
        ["a", "b", "c"], model, transfer={("a", "b"): 1.1, ("a", "c"): 0.3, ("b", "c"): 0.7}, seed=9,
        static_shifts={"a": 0.1, "c": -0.2},
    )
    for line in lines:
        assert set(line.shift_breakdown) == {"overlap", "static", "d0", "d1"}
        assert 450.0 + math.fsum(line.shift_breakdown.values()) == line.energy
        assert sum(line.shift_breakdown.values()) == pytest.approx(line.energy - 450.0, abs=1e-9)


def test_transitions_need_transfer_for_several_controls():
    with pytest.raises(DependencyError):
        spectra.gate_transitions(["a", "b"], _model())


def test_single_control_spread_matches_the_disorder_width():
    model = _model((10.0,))
    energies = [spectra.gate_transitions(["a"], model, seed=s)[0].energy for s in range(1000)]
    assert np.std(energies) * spectra.FWHM_PER_SIGMA == pytest.approx(10.0, rel=0.1)
    assert np.mean(energies) == pytest.approx(450.0, abs=1.0)


def test_greedy_selection():
    kept = spectra.resolvable_lines([3.0, 0.0, 1.5, 1.0], homogeneous_width=1.0, k=1.5)
    assert kept == [0.0, 1.5, 3.0]
    assert spectra.resolvable_gate_count([0.0, 0.2, 0.4], 1.0) == 1
    assert spectra.resolvable_gate_count([5.0], 1.0) == 1
    with pytest.raises(PreconditionError):
        spectra.resolvable_gate_count([], 1.0)


def test_greedy_selection_accepts_transition_lines():
    lines = spectra.gate_transitions(["a", "b"], _model(), transfer={("a", "b"): 2.0})
    assert spectra.resolvable_gate_count(lines, 1.0) == 2
    assert spectra.resolvable_gate_count(lines, 3.0) == 1


def test_resolvable_count_distribution():
    counts = spectra.resolvable_count_distribution(20, 14.0, k=1.5, n_draws=1000, seed=0)
    assert counts.shape == (1000,)
    assert 8 <= counts.mean() <= 12
    assert counts.max() <= 20
    narrow = spectra.resolvable_count_distribution(20, 0.01, n_draws=50)
    assert set(narrow.tolist()) == {1}
