"""Configuration scans: EPR spectra versus optical excitation frequency.

Measurement model: a control is excited when the optical frequency lies within
one homogeneous width of its transition line. Every qubit EPR line splits
into a doublet at +/- J/2 for each excited control it couples to, each
component carrying half the intensity. Lines are Lorentzians of peak height 1.
"""
import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, signal

from .errors import DependencyError, PreconditionError
from .spins import (
    Propagator,
    SpinSystem,
    average_gate_fidelity,
    build_hamiltonian,
    dominant_qubit_factor,
    entangling_power,
    entropy_bits,
    operator_schmidt,
    sfg_gate,
)

logger = logging.getLogger(__name__)

DEFAULT_EPR_LINEWIDTH = 0.2
DEFAULT_DETECTION_THRESHOLD = 1.0
OPTICAL_STEPS_PER_WIDTH = 10
EPR_STEPS_PER_LINEWIDTH = 2
AXIS_MARGIN = 3.0
# relative change that marks a scan row as perturbed
_ROW_TOLERANCE = 1e-9
FIT_RESIDUAL_LIMIT = 1e-3


@dataclass
class EprModel:
    offsets: dict
    linewidth: float = DEFAULT_EPR_LINEWIDTH  # Lorentzian HWHM, meV

    def validate(self):
        if not self.linewidth > 0:
            raise PreconditionError("EPR linewidth must be positive")
        return self


@dataclass
class ScanMap:
    optical_axis: np.ndarray
    epr_axis: np.ndarray
    response: np.ndarray
    qubit_lines: dict
    ground_truth_hidden: bool = True
    metadata: dict = field(default_factory=dict)

    def csv_text(self):
        """One row per optical frequency; EPR axis in the header row."""
        buffer = io.StringIO()
        buffer.write("# qubit_lines: " + ";".join(f"{k}={float(v)!r}" for k, v in self.qubit_lines.items()) + "\n")
        buffer.write("# metadata: " + ";".join(f"{k}={float(v)!r}" for k, v in self.metadata.items()) + "\n")
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["optical_meV"] + [repr(float(x)) for x in self.epr_axis])
        for omega, row in zip(self.optical_axis, self.response):
            writer.writerow([repr(float(omega))] + [repr(float(x)) for x in row])
        return buffer.getvalue()

    def to_csv(self, path):
        with open(path, "w", newline="") as handle:
            handle.write(self.csv_text())
        return path

    def to_dict(self):
        return {
            "optical_axis": self.optical_axis.tolist(),
            "epr_axis": self.epr_axis.tolist(),
            "response": self.response.tolist(),
            "qubit_lines": dict(self.qubit_lines),
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_csv(cls, path):
        def pairs(line):
            body = line.split(":", 1)[1].strip()
            return [item.split("=", 1) for item in body.split(";") if item]

        with open(path, newline="") as handle:
            qubit_lines = {k: float(v) for k, v in pairs(handle.readline())}
            metadata = {k: float(v) for k, v in pairs(handle.readline())}
            rows = list(csv.reader(handle))
        header, body = rows[0], np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))
        return cls(
            optical_axis=body[:, 0],
            epr_axis=np.array(header[1:], dtype=float),
            response=body[:, 1:],
            qubit_lines=qubit_lines,
            metadata=metadata,
        )


@dataclass
class AdjacencyEntry:
    optical_energy: float
    qubits: tuple
    couplings: dict
    flags: list = field(default_factory=list)


@dataclass
class AdjacencyHypothesis:
    entries: list
    detection_threshold: float

    def assign(self, lines, tolerance=None):
        """
        Map entries to controls by nearest transition line.

        :param lines: mapping control label -> transition energy (meV)
        :param tolerance: maximum distance accepted, defaults to unlimited
        :return: dict control label -> AdjacencyEntry
        """
        out = {}
        for entry in self.entries:
            if not lines:
                break
            label = min(lines, key=lambda k: abs(lines[k] - entry.optical_energy))
            if tolerance is None or abs(lines[label] - entry.optical_energy) <= tolerance:
                out[label] = entry
        return out

    def as_mapping(self, lines):
        return {label: set(entry.qubits) for label, entry in self.assign(lines).items()}


def sample_epr_offsets(labels, spread, min_spacing, seed=0, max_attempts=10000):
    """Per-qubit EPR offsets uniform in [-spread/2, spread/2] with a minimum pairwise spacing."""
    labels = list(labels)
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        values = rng.uniform(-spread / 2.0, spread / 2.0, size=len(labels))
        if len(values) < 2 or np.diff(np.sort(values)).min() >= min_spacing:
            return {label: float(v) for label, v in zip(labels, values)}
    raise PreconditionError(f"cannot place {len(labels)} EPR lines {min_spacing} meV apart within {spread} meV")


def _lorentzian(axis, center, linewidth):
    return linewidth ** 2 / ((axis - center) ** 2 + linewidth ** 2)


def _qubit_spectrum(axis, center, splits, linewidth):
    """EPR line at ``center`` split into doublets by every half-splitting in ``splits``."""
    components = np.array([center])
    weights = np.array([1.0])
    for s in splits:
        components = np.concatenate([components - s, components + s])
        weights = np.concatenate([weights, weights]) / 2.0
    return (weights[:, None] * _lorentzian(axis[None, :], components[:, None], linewidth)).sum(axis=0)


def default_axes(lines, couplings, spectral_model, epr_model):
    """Optical and EPR axes covering every line with a margin."""
    energies = list(lines.values())
    width = spectral_model.homogeneous_width
    if energies:
        lo, hi = min(energies) - AXIS_MARGIN * width, max(energies) + AXIS_MARGIN * width
    else:
        lo, hi = spectral_model.base_transition_energy - width, spectral_model.base_transition_energy + width
    step = width / OPTICAL_STEPS_PER_WIDTH
    optical = lo + step * np.arange(int(math.floor((hi - lo) / step)) + 1)

    gamma = epr_model.linewidth
    reach = sum(abs(j) for j in couplings.values()) / 2.0 + 25.0 * gamma
    offsets = list(epr_model.offsets.values()) or [0.0]
    lo, hi = min(offsets) - reach, max(offsets) + reach
    step = gamma / EPR_STEPS_PER_LINEWIDTH
    epr = lo + step * np.arange(int(math.floor((hi - lo) / step)) + 1)
    return optical, epr


def simulate_scan(lines, couplings, spectral_model, epr_model, optical_axis=None, epr_axis=None):
    """
    EPR spectrum at each optical frequency.

    :param lines: mapping control label -> transition energy (meV)
    :param couplings: mapping (control label, qubit label) -> J in meV
    :param spectral_model: SpectralModel (homogeneous width sets the excitation window)
    :param epr_model: EprModel with one offset per qubit
    :return: ScanMap
    """
    epr_model.validate()
    for control, qubit in couplings:
        if control not in lines:
            raise DependencyError(f"no transition line for control {control}")
        if qubit not in epr_model.offsets:
            raise DependencyError(f"no EPR offset for qubit {qubit}")
    default_optical, default_epr = default_axes(lines, couplings, spectral_model, epr_model)
    optical = np.asarray(default_optical if optical_axis is None else optical_axis, dtype=float)
    epr = np.asarray(default_epr if epr_axis is None else epr_axis, dtype=float)
    window = spectral_model.homogeneous_width

    response = np.zeros((len(optical), len(epr)))
    for r, omega in enumerate(optical):
        excited = [c for c, energy in lines.items() if abs(omega - energy) <= window]
        for qubit, offset in epr_model.offsets.items():
            splits = [abs(couplings.get((c, qubit), 0.0)) / 2.0 for c in excited]
            splits = [s for s in splits if s > 0]
            response[r] += _qubit_spectrum(epr, offset, splits, epr_model.linewidth)
    logger.debug("scan of %d optical x %d EPR points", len(optical), len(epr))
    return ScanMap(
        optical_axis=optical,
        epr_axis=epr,
        response=response,
        qubit_lines=dict(epr_model.offsets),
        metadata={"epr_linewidth": epr_model.linewidth, "homogeneous_width": spectral_model.homogeneous_width},
    )


def _plateaus(scan, baseline):
    """Runs of identical perturbed rows, grouped into resonances separated by baseline rows."""
    scale = max(float(np.abs(baseline).max()), 1.0)
    perturbed = np.abs(scan.response - baseline[None, :]).max(axis=1) > _ROW_TOLERANCE * scale
    resonances = []
    current = []
    for r in range(len(scan.optical_axis)):
        if not perturbed[r]:
            if current:
                resonances.append(current)
                current = []
            continue
        if current and np.allclose(scan.response[r], scan.response[current[-1][-1]], rtol=0, atol=_ROW_TOLERANCE * scale):
            current[-1].append(r)
        else:
            current.append([r])
    if current:
        resonances.append(current)
    return resonances


def _unperturbed(scan):
    """Bare EPR spectrum and linewidth; rebuilt from the line positions when the linewidth is known."""
    if "epr_linewidth" in scan.metadata:
        linewidth = float(scan.metadata["epr_linewidth"])
        baseline = np.zeros(len(scan.epr_axis))
        for offset in scan.qubit_lines.values():
            baseline += _qubit_spectrum(scan.epr_axis, offset, [], linewidth)
        return baseline, linewidth
    baseline = np.median(scan.response, axis=0)
    return baseline, _estimate_linewidth(scan, baseline)


def _estimate_linewidth(scan, baseline):
    peaks, _ = signal.find_peaks(baseline)
    widths = signal.peak_widths(baseline, peaks, rel_height=0.5)[0]
    step = float(np.diff(scan.epr_axis).mean())
    return float(np.median(widths) * step / 2.0)


def _line_centers(scan, baseline):
    """Qubit labels and EPR positions, checked against the peaks of the unperturbed spectrum."""
    labels = list(scan.qubit_lines)
    peaks, _ = signal.find_peaks(baseline, height=0.5)
    if len(peaks) != len(labels):
        logger.warning("baseline shows %d EPR peaks for %d qubits", len(peaks), len(labels))
    return labels, np.array([scan.qubit_lines[q] for q in labels], dtype=float)


def _fit_splittings(axis, row, centers, linewidth):
    """Half-splittings (one per qubit) reproducing a single-control scan row."""
    limit = (axis[-1] - axis[0]) / 2.0
    peaks = axis[signal.find_peaks(row)[0]]
    # unresolved doublets need a fine grid; resolved ones sit on a peak of the row
    near = np.arange(0.0, 2.0 * linewidth, linewidth / 4.0)
    candidates = [
        np.unique(np.clip(np.concatenate([near, np.abs(peaks - center)]), 0.0, limit)) for center in centers
    ]
    splits = np.zeros(len(centers))

    def model(values):
        return sum(_qubit_spectrum(axis, c, [s], linewidth) for c, s in zip(centers, values))

    # coordinate descent over the candidates, then a joint least-squares polish
    for _ in range(2):
        for q, (center, grid) in enumerate(zip(centers, candidates)):
            others = model(splits) - _qubit_spectrum(axis, center, [splits[q]], linewidth)
            doublets = 0.5 * (
                _lorentzian(axis[None, :], center - grid[:, None], linewidth)
                + _lorentzian(axis[None, :], center + grid[:, None], linewidth)
            )
            errors = ((others[None, :] + doublets - row[None, :]) ** 2).sum(axis=1)
            splits[q] = grid[int(np.argmin(errors))]

    fit = optimize.least_squares(lambda v: model(v) - row, splits, bounds=(0.0, limit), xtol=1e-14, ftol=1e-14)
    residual = float(np.linalg.norm(fit.fun) / max(np.linalg.norm(row), 1e-300))
    return np.abs(fit.x), residual


def infer_adjacency(scan, detection_threshold=DEFAULT_DETECTION_THRESHOLD):
    """
    Recover which EPR lines each optical resonance moves, and by how much.

    The unperturbed spectrum is rebuilt from the qubit lines when the scan
    records its EPR linewidth, else taken as the per-column median. Perturbed
    rows are grouped into plateaus of identical response; a plateau is one set
    of excited controls. Each single-control plateau is fitted with one
    doublet half-splitting per qubit, and coupling = 2 x half-splitting.

    :param scan: ScanMap
    :param detection_threshold: smallest coupling reported, meV
    :return: AdjacencyHypothesis
    """
    if scan.response.size == 0 or not scan.qubit_lines:
        return AdjacencyHypothesis([], detection_threshold)
    baseline, linewidth = _unperturbed(scan)
    labels, centers = _line_centers(scan, baseline)
    step = float(np.diff(scan.optical_axis).mean()) if len(scan.optical_axis) > 1 else 0.0
    window = scan.metadata.get("homogeneous_width")

    entries = []
    for resonance in _plateaus(scan, baseline):
        flags = []
        groups = resonance
        if len(resonance) > 1:
            flags.append("ambiguous")
            groups = [resonance[0], resonance[-1]]
        for rows in groups:
            entry_flags = list(flags)
            span = scan.optical_axis[rows[-1]] - scan.optical_axis[rows[0]]
            if window is not None and span > 2.0 * window + 2.0 * step:
                entry_flags.append("ambiguous")
            splits, residual = _fit_splittings(scan.epr_axis, scan.response[rows[0]], centers, linewidth)
            if residual > FIT_RESIDUAL_LIMIT:
                entry_flags.append("fit_residual")
                logger.warning("poor fit at %.3f meV (relative residual %.2e)", scan.optical_axis[rows[0]], residual)
            couplings = {
                label: float(2.0 * s) for label, s in zip(labels, splits) if 2.0 * s >= detection_threshold
            }
            entries.append(
                AdjacencyEntry(
                    optical_energy=float(np.mean(scan.optical_axis[rows])),
                    qubits=tuple(sorted(couplings)),
                    couplings=couplings,
                    flags=sorted(set(entry_flags)),
                )
            )
    entries.sort(key=lambda e: e.optical_energy)
    return AdjacencyHypothesis(entries, detection_threshold)


def calibrate_gate_time(inferred, true_couplings, control_label, require_clean=True, **gate_options):
    """
    Gate time from inferred couplings, scored against the true couplings.

    The duration comes from :func:`sfg_gate` on the inferred couplings. That
    pulse is then applied with the true couplings and the resulting qubit
    gate compared with the gate the true couplings give within 25% of that
    duration.

    :param inferred: mapping qubit label -> inferred coupling (meV)
    :param true_couplings: mapping qubit label -> true coupling (meV)
    :param control_label: label of the control
    :param require_clean: propagate NoCleanGateError from the inferred search
    :return: GateReport with fidelity_to_target set
    """
    qubits = sorted(inferred)
    if len(qubits) < 2:
        raise PreconditionError(f"control {control_label} couples fewer than two qubits")
    labels = [control_label] + qubits
    roles = ["control"] + ["qubit"] * len(qubits)

    def system(values):
        return SpinSystem(labels, roles, {(control_label, q): values.get(q, 0.0) for q in qubits})

    planned = sfg_gate(system(inferred), control_label, require_clean=require_clean, **gate_options)
    # true couplings' best gate near the planned pulse
    truth_options = dict(gate_options)
    truth_options.setdefault("tau_range", (0.75 * planned.duration, 1.25 * planned.duration))
    truth = sfg_gate(system(true_couplings), control_label, require_clean=False, **truth_options)

    unitary = Propagator(build_hamiltonian(system(true_couplings))).unitary(planned.duration)
    qubit_dim = 2 ** len(qubits)
    applied = dominant_qubit_factor(unitary, qubit_dim)
    fidelity = average_gate_fidelity(applied, truth.qubit_unitary)
    logger.info("control %s: tau %.4f ps, fidelity %.6f", control_label, planned.duration, fidelity)
    planned.qubit_unitary = applied
    planned.control_residual_entanglement = entropy_bits(operator_schmidt(unitary, 2))
    planned.entangling_power = entangling_power(applied) if len(qubits) == 2 else None
    planned.fidelity_to_target = fidelity
    return planned
