"""Control transition energies under disorder and spectral resolvability."""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .constants import HC_EV_NM, NV_ZPL_NM, wavelength_to_mev
from .errors import DependencyError, PreconditionError

logger = logging.getLogger(__name__)

DEFAULT_RESOLUTION_FACTOR = 1.5
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
# separations this close to k * delta_h still count as resolved
_SEPARATION_RTOL = 1e-9


@dataclass(frozen=True)
class DisorderComponent:
    name: str
    width: float  # FWHM, meV
    kind: str = "gaussian"


@dataclass
class SpectralModel:
    base_transition_energy: float
    homogeneous_width: float
    disorder_components: list = field(default_factory=list)
    resolution_factor: float = DEFAULT_RESOLUTION_FACTOR

    def validate(self):
        if not self.homogeneous_width > 0:
            raise PreconditionError("homogeneous width must be positive")
        if self.resolution_factor < 1:
            raise PreconditionError("resolution factor must be >= 1")
        for component in self.disorder_components:
            if component.width < 0:
                raise PreconditionError(f"disorder width of {component.name!r} is negative")
            if component.kind != "gaussian":
                raise PreconditionError(f"unsupported disorder distribution {component.kind!r}")
        return self

    @property
    def inhomogeneous_width(self):
        """FWHM of the combined Gaussian disorder, meV."""
        return math.sqrt(sum(c.width ** 2 for c in self.disorder_components))

    @property
    def broadening_ratio(self):
        return self.inhomogeneous_width / self.homogeneous_width

    def to_dict(self):
        return {
            "base_transition_energy": self.base_transition_energy,
            "homogeneous_width": self.homogeneous_width,
            "disorder": [{"name": c.name, "width": c.width, "kind": c.kind} for c in self.disorder_components],
            "resolution_factor": self.resolution_factor,
        }


@dataclass
class TransitionLine:
    gate_id: str
    energy: float
    width: float
    shift_breakdown: dict = field(default_factory=dict)


def nm_width_to_mev(width_nm, wavelength_nm=NV_ZPL_NM):
    """Convert a line width in nm at ``wavelength_nm`` to meV (dE = hc dL / L^2)."""
    return HC_EV_NM * width_nm / wavelength_nm ** 2 * 1000.0


def spectral_model_from_nm(homogeneous_nm, disorder_nm, wavelength_nm=NV_ZPL_NM, resolution_factor=DEFAULT_RESOLUTION_FACTOR):
    """
    SpectralModel from wavelength-denominated widths.

    :param homogeneous_nm: homogeneous line width in nm
    :param disorder_nm: mapping component name -> FWHM in nm
    :param wavelength_nm: transition wavelength fixing the conversion and the base energy
    """
    return SpectralModel(
        base_transition_energy=wavelength_to_mev(wavelength_nm),
        homogeneous_width=nm_width_to_mev(homogeneous_nm, wavelength_nm),
        disorder_components=[
            DisorderComponent(name, nm_width_to_mev(width, wavelength_nm)) for name, width in disorder_nm.items()
        ],
        resolution_factor=resolution_factor,
    ).validate()


def shen_nv_model():
    """0.36 nm homogeneous width against a 5 nm strain spread at the NV- zero-phonon line."""
    return spectral_model_from_nm(0.36, {"strain": 5.0})


def _pair_key(a, b):
    return (a, b) if a <= b else (b, a)


def control_overlap_shifts(labels, transfer):
    """
    Excited-state level shifts of coupled controls.

    The symmetric transfer matrix between the controls' excited orbitals is
    diagonalized and each eigenlevel is assigned to the control carrying most
    of its weight.

    :param labels: control labels
    :param transfer: mapping (label_i, label_j) -> t in meV for every pair
    :return: dict label -> shift in meV
    """
    n = len(labels)
    if n < 2:
        return {label: 0.0 for label in labels}
    lookup = {_pair_key(*key): value for key, value in transfer.items()}
    matrix = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            key = _pair_key(labels[i], labels[j])
            if key not in lookup:
                raise DependencyError(f"missing transfer integral for controls {key[0]}, {key[1]}")
            matrix[i, j] = matrix[j, i] = lookup[key]
    levels, vectors = np.linalg.eigh(matrix)
    rows, cols = optimize.linear_sum_assignment(-(vectors * vectors))
    return {labels[r]: float(levels[c]) for r, c in zip(rows, cols)}


def gate_transitions(controls, spectral_model, transfer=None, seed=0, static_shifts=None):
    """
    Transition line of every control.

    Each line's ``shift_breakdown`` holds the overlap, static and disorder
    shifts. The energy is ``base + math.fsum(shift_breakdown.values())``, so a
    plain ``sum`` of the breakdown matches ``energy - base`` only up to float
    rounding.

    :param controls: control labels in scenario order
    :param spectral_model: SpectralModel
    :param transfer: mapping (label_i, label_j) -> transfer integral (meV); required with two or more controls
    :param seed: seed for the random disorder components
    :param static_shifts: optional mapping label -> fixed local shift (meV)
    :return: list of TransitionLine
    """
    spectral_model.validate()
    labels = list(controls)
    if len(labels) > 1 and transfer is None:
        raise DependencyError("transfer integrals are required for more than one control")
    overlap = control_overlap_shifts(labels, transfer or {})
    rng = np.random.default_rng(seed)
    draws = {
        c.name: rng.normal(0.0, c.width / FWHM_PER_SIGMA, size=len(labels)) if c.width > 0 else np.zeros(len(labels))
        for c in spectral_model.disorder_components
    }
    lines = []
    for i, label in enumerate(labels):
        breakdown = {"overlap": overlap[label]}
        if static_shifts:
            breakdown["static"] = float(static_shifts.get(label, 0.0))
        for name, values in draws.items():
            breakdown[name] = float(values[i])
        energy = spectral_model.base_transition_energy + math.fsum(breakdown.values())
        lines.append(TransitionLine(str(label), float(energy), spectral_model.homogeneous_width, breakdown))
    return lines


def resolvable_lines(lines, homogeneous_width, k=DEFAULT_RESOLUTION_FACTOR):
    """
    Lines kept by the greedy separation rule.

    Lines are sorted by energy and accepted left to right whenever they sit at
    least k * delta_h above the last accepted line.
    """
    ordered = sorted(lines, key=lambda line: float(getattr(line, "energy", line)))
    if not ordered:
        raise PreconditionError("at least one line is required")
    gap = k * homogeneous_width * (1.0 - _SEPARATION_RTOL)
    kept = [ordered[0]]
    last = float(getattr(ordered[0], "energy", ordered[0]))
    for line in ordered[1:]:
        energy = float(getattr(line, "energy", line))
        if energy - last >= gap:
            kept.append(line)
            last = energy
    return kept


def resolvable_gate_count(lines, homogeneous_width, k=DEFAULT_RESOLUTION_FACTOR):
    """Size of the greedy subset of lines pairwise separated by at least k * delta_h."""
    return len(resolvable_lines(lines, homogeneous_width, k))


def resolvable_count_distribution(n_lines, ratio, k=DEFAULT_RESOLUTION_FACTOR, n_draws=1000, seed=0):
    """Greedy counts for ``n_draws`` sets of Gaussian lines with FWHM spread ratio * delta_h."""
    rng = np.random.default_rng(seed)
    energies = rng.normal(0.0, ratio / FWHM_PER_SIGMA, size=(n_draws, n_lines))
    return np.array([resolvable_gate_count(row, 1.0, k) for row in energies], dtype=int)
