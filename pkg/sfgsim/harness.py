"""Feasibility pipeline: lattice -> integrals -> spectra -> spins -> configure."""
import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from itertools import combinations
from typing import Optional

import numpy as np
from scipy import spatial

from . import integrals
from .configure import EprModel, calibrate_gate_time, infer_adjacency, sample_epr_offsets, simulate_scan
from .errors import DependencyError, PreconditionError, StageError
from .gaussians import OrbitalSpec
from .lattice import CENTER_CONVENTION, place_dopants
from .scenario import Placement
from .spectra import gate_transitions, resolvable_count_distribution, resolvable_lines
from .spins import SpinSystem, effective_coupling, sfg_gate

logger = logging.getLogger(__name__)

REPORT_VERSION = 1
TABLE_START = 2.0
PS_PER_S = 1e12


@contextmanager
def stage(name):
    """Attribute any failure inside the block to pipeline stage ``name``."""
    logger.info("stage %s", name)
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def _clean(value):
    """JSON-ready copy with numpy scalars and arrays converted."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


@dataclass
class FeasibilityReport:
    scenario: dict
    seed: int
    lattice: dict = field(default_factory=dict)
    exchange_table: list = field(default_factory=list)
    transitions: list = field(default_factory=list)
    resolvable_gate_count: int = 0
    usable_gate_count: int = 0
    gates: list = field(default_factory=list)
    adjacency: Optional[dict] = None
    resolvability: Optional[dict] = None
    generated_at: str = ""

    def payload(self):
        return _clean(
            {
                "report_version": REPORT_VERSION,
                "scenario": self.scenario,
                "seed": self.seed,
                "lattice": self.lattice,
                "exchange_table": self.exchange_table,
                "transitions": self.transitions,
                "resolvable_gate_count": self.resolvable_gate_count,
                "usable_gate_count": self.usable_gate_count,
                "gates": self.gates,
                "adjacency": self.adjacency,
                "resolvability": self.resolvability,
            }
        )

    @property
    def digest(self):
        text = json.dumps(self.payload(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def to_dict(self, include_timestamp=True):
        out = self.payload()
        out["digest"] = self.digest
        if include_timestamp:
            out["generated_at"] = self.generated_at
        return out

    def to_json(self, include_timestamp=True):
        return json.dumps(self.to_dict(include_timestamp), indent=2, sort_keys=True) + "\n"


@dataclass
class PairTables:
    """Interpolated excited-control exchange and control-control transfer versus separation."""

    exchange: dict
    transfer: dict


@dataclass
class PatchStatistics:
    counts: list
    target: int
    fraction_meeting_target: float
    distribution: dict
    n_patches: int
    seed: int

    def to_dict(self):
        return _clean(vars(self))


def _sub_seeds(seed, n):
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def resolve_placements(scenario):
    """Explicit placements, or a random doping of the scenario's lattice region."""
    if scenario.random is None:
        return list(scenario.placements), {"mode": "explicit", "n_dopants": len(scenario.placements)}
    region = place_dopants(
        scenario.lattice, scenario.random.concentration, scenario.random.species_mix, scenario.random.seed
    )
    counters = {"control": 0, "qubit": 0}
    placements = []
    for position, species in zip(region.positions, region.species):
        role = scenario.role_of(species)
        counters[role] += 1
        prefix = "C" if role == "control" else "Q"
        placements.append(Placement(f"{prefix}{counters[role]}", str(species), tuple(float(x) for x in position)))
    info = {
        "mode": "random",
        "n_sites": region.n_sites,
        "n_dopants": region.n_dopants,
        "concentration": region.concentration,
        "nominal_concentration": region.nominal_concentration,
        "convention": CENTER_CONVENTION,
    }
    return placements, info


def _control_transfer(model_a, model_b, center_a, center_b, n_terms):
    center_a = np.asarray(center_a, dtype=float)
    center_b = np.asarray(center_b, dtype=float)
    axis = tuple(center_b - center_a)
    a = OrbitalSpec("p2", model_a.orbital_radius, tuple(center_a), axis)
    b = OrbitalSpec("p2", model_b.orbital_radius, tuple(center_b), axis)
    return integrals.pair_integrals(
        a, b, model_a.dielectric_constant, n_terms=n_terms, reference_radius=model_a.effective_bohr_radius
    )


def build_tables(scenario, workers=None):
    """PairTables for every control/qubit species pair on a grid up to the cutoff."""
    options = scenario.integrals
    if options.cutoff is None:
        raise PreconditionError("table mode needs an integrals cutoff")
    r_grid = np.arange(TABLE_START, options.cutoff + options.table_step / 2.0, options.table_step)
    controls = [k for k, m in scenario.species.items() if m.role == "control"]
    qubits = [k for k, m in scenario.species.items() if m.role == "qubit"]
    exchange = {
        (c, q): integrals.ExchangeTable.exchange(
            scenario.species[c], scenario.species[q], r_grid,
            orientation=options.orientation, n_terms=options.n_terms, workers=workers,
        )
        for c in controls
        for q in qubits
    }
    transfer = {}
    for a, b in [(a, b) for i, a in enumerate(controls) for b in controls[i:]]:
        ma, mb = scenario.species[a], scenario.species[b]
        values = integrals.map_points(
            lambda r: _control_transfer(ma, mb, (0, 0, 0), (r, 0, 0), options.n_terms).transfer, r_grid, workers
        )
        transfer[(a, b)] = transfer[(b, a)] = integrals.ExchangeTable(r_grid, values)
    logger.info("built pair tables on %d separations up to %.1f A", len(r_grid), options.cutoff)
    return PairTables(exchange, transfer)


def _pairs_within(positions_a, positions_b, cutoff):
    """Index pairs (i, j) with |a_i - b_j| <= cutoff, or all pairs without a cutoff."""
    if not len(positions_a) or not len(positions_b):
        return []
    if cutoff is None:
        return [(i, j) for i in range(len(positions_a)) for j in range(len(positions_b))]
    tree = spatial.cKDTree(positions_b)
    hits = tree.query_ball_point(positions_a, r=cutoff)
    return [(i, j) for i, row in enumerate(hits) for j in sorted(row)]


def _pair_stage(scenario, controls, qubits, tables):
    options = scenario.integrals
    pos_c = np.array([c.position for c in controls], dtype=float).reshape(-1, 3)
    pos_q = np.array([q.position for q in qubits], dtype=float).reshape(-1, 3)

    exchange = {}
    rows = []
    for i, j in _pairs_within(pos_c, pos_q, options.cutoff):
        c, q = controls[i], qubits[j]
        r = float(np.linalg.norm(pos_q[j] - pos_c[i]))
        if tables is not None:
            value, overlap = float(tables.exchange[(c.species, q.species)](r)), None
        else:
            result = integrals.control_qubit_integrals(
                scenario.species[c.species], scenario.species[q.species], pos_c[i], pos_q[j],
                excited=True, orientation=options.orientation, n_terms=options.n_terms,
            )
            value, overlap = result.exchange_splitting, result.overlap
        exchange[(c.label, q.label)] = value
        rows.append({"control": c.label, "qubit": q.label, "separation": r, "exchange_meV": value, "overlap": overlap})
    rows.sort(key=lambda row: (-row["exchange_meV"], row["control"], row["qubit"]))

    transfer = {}
    for i, k in combinations(range(len(controls)), 2):
        a, b = controls[i], controls[k]
        r = float(np.linalg.norm(pos_c[k] - pos_c[i]))
        if options.cutoff is not None and r > options.cutoff:
            value = 0.0
        elif tables is not None:
            value = float(tables.transfer[(a.species, b.species)](r))
        else:
            value = _control_transfer(
                scenario.species[a.species], scenario.species[b.species], pos_c[i], pos_c[k], options.n_terms
            ).transfer
        transfer[(a.label, b.label)] = value
    return exchange, rows, transfer


def _coherence_budget(scenario, placements):
    budgets = [scenario.species[p.species].coherence_budget for p in placements]
    budgets = [b for b in budgets if b]
    return min(budgets) if budgets else None


def _gate_entry(scenario, control, coupled, exchange, placements_by_label):
    qubits = sorted(coupled, key=lambda q: (-exchange[(control.label, q)], q))
    couplings = {q: exchange[(control.label, q)] for q in qubits}
    j_eff = [
        {"qubits": [a, b], "j_eff_meV": effective_coupling(couplings[a], couplings[b], scenario.gates.excitation_energy)}
        for a, b in combinations(qubits, 2)
    ]
    entry = {"control": control.label, "qubits": qubits, "couplings_meV": couplings, "j_eff": j_eff, "status": "not_a_gate"}
    if len(qubits) < 2:
        return entry
    if len(qubits) > scenario.gates.max_qubits:
        entry["status"] = "skipped"
        return entry
    if not scenario.gates.simulate:
        entry["status"] = "candidate"
        return entry
    system = SpinSystem(
        [control.label] + qubits,
        ["control"] + ["qubit"] * len(qubits),
        {(control.label, q): couplings[q] for q in qubits},
    )
    report = sfg_gate(system, control.label, threshold=scenario.clean_gate_bits, require_clean=False)
    entry.update(report.to_dict())
    entry["qubit_unitary"] = {"real": report.qubit_unitary.real, "imag": report.qubit_unitary.imag}
    budget = _coherence_budget(scenario, [placements_by_label[control.label]] + [placements_by_label[q] for q in qubits])
    entry["coherence_budget_s"] = budget
    entry["time_budget_ratio"] = report.duration / (budget * PS_PER_S) if budget else None
    return entry


@dataclass
class PipelineState:
    """Intermediate results shared by the report, the scan and the CLI."""

    scenario: object
    placements: list
    lattice: dict
    controls: list
    qubits: list
    exchange: dict
    exchange_rows: list
    transfer: dict
    spectral_model: object
    lines: list
    coupled: dict
    spectral_seed: int
    epr_seed: int

    @property
    def line_energies(self):
        return {line.gate_id: line.energy for line in self.lines}


def prepare(scenario, tables=None, workers=None):
    """
    Lattice, integrals and spectra stages.

    :param scenario: Scenario
    :param tables: optional PairTables; built from the scenario in table mode when omitted
    :param workers: thread count for table construction
    :return: PipelineState
    """
    spectral_seed, epr_seed = _sub_seeds(scenario.seed, 2)

    with stage("lattice"):
        scenario.lattice.validate()
        placements, lattice_info = resolve_placements(scenario)
        controls = [p for p in placements if scenario.role_of(p.species) == "control"]
        qubits = [p for p in placements if scenario.role_of(p.species) == "qubit"]
        lattice_info.update(n_controls=len(controls), n_qubits=len(qubits))

    with stage("integrals"):
        if tables is None and scenario.integrals.mode == "table" and controls and qubits:
            tables = build_tables(scenario, workers)
        exchange, rows, transfer = _pair_stage(scenario, controls, qubits, tables)

    with stage("spectra"):
        spectral_model = scenario.spectral_model()
        lines = gate_transitions(
            [c.label for c in controls], spectral_model, transfer, seed=spectral_seed,
            static_shifts={c.label: c.transition_shift for c in controls},
        )
    coupled = {
        c.label: [q.label for q in qubits if exchange.get((c.label, q.label), 0.0) >= scenario.detection_threshold]
        for c in controls
    }
    return PipelineState(
        scenario, placements, lattice_info, controls, qubits, exchange, rows, transfer,
        spectral_model, lines, coupled, spectral_seed, epr_seed,
    )


def _epr_offsets(scenario, qubits, seed):
    labels = [q.label for q in qubits]
    if scenario.epr.offsets is None:
        return sample_epr_offsets(labels, scenario.epr.spread, scenario.epr.min_spacing, seed=seed)
    missing = set(labels) - set(scenario.epr.offsets)
    if missing:
        raise DependencyError(f"no EPR offsets for qubits {sorted(missing)}")
    return {q: scenario.epr.offsets[q] for q in labels}


def scenario_scan(state):
    """ScanMap of a prepared scenario under its EPR settings."""
    scenario = state.scenario
    offsets = _epr_offsets(scenario, state.qubits, state.epr_seed)
    return simulate_scan(state.line_energies, state.exchange, state.spectral_model, EprModel(offsets, scenario.epr.linewidth))


def _configure_stage(state):
    scenario = state.scenario
    scan = scenario_scan(state)
    hypothesis = infer_adjacency(scan, scenario.detection_threshold)
    assigned = hypothesis.assign(state.line_energies, tolerance=state.spectral_model.homogeneous_width)

    truth = {label: sorted(qs) for label, qs in state.coupled.items()}
    inferred = {label: sorted(entry.qubits) for label, entry in assigned.items()}
    recovered = all(inferred.get(c, []) == qs for c, qs in truth.items())

    calibration = []
    if scenario.gates.simulate:
        for label, entry in sorted(assigned.items()):
            if len(entry.qubits) < 2 or len(entry.qubits) > scenario.gates.max_qubits:
                continue
            true = {q: state.exchange.get((label, q), 0.0) for q in entry.qubits}
            report = calibrate_gate_time(
                entry.couplings, true, label, require_clean=False, threshold=scenario.clean_gate_bits
            )
            calibration.append({"control": label, "duration_ps": report.duration, "fidelity": report.fidelity_to_target})
    return {
        "epr_offsets_meV": scan.qubit_lines,
        "entries": [
            {"optical_energy": e.optical_energy, "qubits": list(e.qubits), "couplings_meV": e.couplings, "flags": e.flags}
            for e in hypothesis.entries
        ],
        "inferred": inferred,
        "truth": truth,
        "recovered": recovered,
        "calibration": calibration,
    }


def run_feasibility(scenario, tables=None, workers=None):
    """
    Run every pipeline stage for one scenario.

    :param scenario: Scenario
    :param tables: optional PairTables; built from the scenario in table mode when omitted
    :param workers: thread count for table construction
    :return: FeasibilityReport
    """
    report = FeasibilityReport(scenario=scenario.to_dict(), seed=scenario.seed)
    state = prepare(scenario, tables, workers)
    report.lattice = state.lattice
    report.exchange_table = state.exchange_rows
    by_label = {p.label: p for p in state.placements}

    with stage("spectra"):
        model = state.spectral_model
        kept = {line.gate_id for line in resolvable_lines(state.lines, model.homogeneous_width, model.resolution_factor)} if state.lines else set()
        candidates = [line for line in state.lines if len(state.coupled[line.gate_id]) >= 2]
        report.transitions = [
            {
                "control": line.gate_id,
                "energy_meV": line.energy,
                "width_meV": line.width,
                "shifts_meV": line.shift_breakdown,
                "resolvable": line.gate_id in kept,
            }
            for line in state.lines
        ]
        report.resolvable_gate_count = len(kept)
        report.usable_gate_count = (
            len(resolvable_lines(candidates, model.homogeneous_width, model.resolution_factor)) if candidates else 0
        )
        if scenario.resolvability:
            counts = resolvable_count_distribution(
                int(scenario.resolvability.get("n_lines", 20)),
                model.broadening_ratio,
                model.resolution_factor,
                int(scenario.resolvability.get("n_draws", 1000)),
                seed=state.spectral_seed,
            )
            report.resolvability = {
                "ratio": model.broadening_ratio,
                "homogeneous_width_meV": model.homogeneous_width,
                "mean": float(counts.mean()),
                "std": float(counts.std()),
                "histogram": {str(k): int(v) for k, v in zip(*np.unique(counts, return_counts=True))},
            }

    with stage("spins"):
        report.gates = [
            _gate_entry(scenario, c, state.coupled[c.label], state.exchange, by_label) for c in state.controls
        ]

    with stage("configure"):
        if scenario.gates.configure and state.controls and state.qubits:
            report.adjacency = _configure_stage(state)

    report.generated_at = datetime.now(timezone.utc).isoformat()
    logger.info("scenario %s: %d usable gates, digest %s", scenario.name, report.usable_gate_count, report.digest[:12])
    return report


def patch_statistics(template, n_patches=None, seed=None, workers=None, gate_target=None, tables=None):
    """
    Usable-gate counts over independently doped patches.

    Patch seeds are spawned from one SeedSequence, so the counts do not depend
    on ``workers``.

    :param template: Scenario with a ``random`` placement section
    :param n_patches: number of patches, defaults to the template's ``patch.n_patches``
    :param seed: base seed, defaults to the template seed
    :param workers: thread count, defaults to the template's ``patch.workers``
    :param gate_target: gates a patch must offer, defaults to ``targets.n_gates``
    :return: PatchStatistics
    """
    settings = template.patch or {}
    n_patches = int(n_patches if n_patches is not None else settings.get("n_patches", 1))
    seed = int(seed if seed is not None else template.seed)
    workers = workers if workers is not None else settings.get("workers", 1)
    target = int(gate_target if gate_target is not None else template.targets.get("n_gates", 1))
    if n_patches < 1:
        raise PreconditionError("n_patches must be at least 1")
    if template.random is None:
        raise PreconditionError("patch statistics need a random placement template")
    if tables is None and template.integrals.mode == "table":
        with stage("integrals"):
            tables = build_tables(template, workers)

    def one(patch_seed):
        return run_feasibility(template.with_random_seed(patch_seed), tables=tables).usable_gate_count

    seeds = _sub_seeds(seed, n_patches)
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            counts = list(pool.map(one, seeds))
    else:
        counts = [one(s) for s in seeds]
    values, freq = np.unique(counts, return_counts=True)
    fraction = float(np.mean(np.asarray(counts) >= target))
    logger.info("%d patches: %.3f meet the %d-gate target", n_patches, fraction, target)
    return PatchStatistics(
        counts=[int(c) for c in counts],
        target=target,
        fraction_meeting_target=fraction,
        distribution={str(int(v)): float(f) / n_patches for v, f in zip(values, freq)},
        n_patches=n_patches,
        seed=seed,
    )


@dataclass
class CurveResult:
    name: str
    columns: list
    rows: list
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        return _clean({"name": self.name, "columns": self.columns, "rows": self.rows, "extras": self.extras})


def _grid(curve):
    step = float(curve.get("r_step", 0.5))
    return np.arange(float(curve.get("r_min", 4.0)), float(curve.get("r_max", 30.0)) + step / 2.0, step)


def _last_crossing(r, difference):
    changes = np.nonzero((difference[:-1] <= 0) & (difference[1:] > 0))[0]
    if len(changes) == 0:
        return None
    i = int(changes[-1])
    return float(r[i] - difference[i] * (r[i + 1] - r[i]) / (difference[i + 1] - difference[i]))


def _first_maximum(r, values):
    peaks = np.nonzero((values[1:-1] > values[:-2]) & (values[1:-1] >= values[2:]))[0]
    if len(peaks) == 0:
        return None
    return float(r[int(peaks[0]) + 1])


def run_curve(scenario, workers=None):
    """
    Exchange (ground and excited control) or transfer-splitting curve of a curve scenario.

    Exchange curves report two radii: the plain crossover where the excited
    exchange overtakes the ground one, and the dominance radius beyond which
    the ground exchange is below ``DOMINANCE_FACTOR`` of the excited one.
    Splitting curves report the separation of their first interior maximum.
    """
    if scenario.curve is None:
        raise PreconditionError(f"scenario {scenario.name} has no curve section")
    curve = scenario.curve
    r_grid = _grid(curve)
    n_terms = scenario.integrals.n_terms
    control = scenario.species[curve.get("control") or scenario.control_species()[0]]
    with stage("integrals"):
        if curve["kind"] == "splitting":
            points = integrals.transfer_splitting_curve(control, r_grid, n_terms=n_terms, workers=workers)
            rows = [[p.separation, p.lower, p.upper, p.splitting] for p in points]
            return CurveResult(
                scenario.name,
                ["R_angstrom", "E_lower_meV", "E_upper_meV", "splitting_meV"],
                rows,
                {
                    "transition_energy_meV": control.transition_energy,
                    "first_maximum_angstrom": _first_maximum(r_grid, np.array([p.splitting for p in points])),
                    "seed": scenario.seed,
                },
            )
        qubit_id = curve.get("qubit") or next(k for k, m in scenario.species.items() if m.role == "qubit")
        qubit = scenario.species[qubit_id]
        orientation = curve.get("orientation", "inter_center")
        ground = integrals.exchange_curve(control, qubit, False, r_grid, n_terms=n_terms, workers=workers)
        excited = integrals.exchange_curve(
            control, qubit, True, r_grid, orientation=orientation, n_terms=n_terms, workers=workers
        )
    j_ground = np.array([p.exchange_splitting for p in ground])
    j_excited = np.array([p.exchange_splitting for p in excited])
    rows = [[float(r), float(g), float(e)] for r, g, e in zip(r_grid, j_ground, j_excited)]
    return CurveResult(
        scenario.name,
        ["R_angstrom", "J_ground_meV", "J_excited_meV"],
        rows,
        {
            "crossover_radius_angstrom": _last_crossing(r_grid, j_excited - j_ground),
            "dominance_radius_angstrom": _last_crossing(r_grid, integrals.DOMINANCE_FACTOR * j_excited - j_ground),
            "dominance_factor": integrals.DOMINANCE_FACTOR,
            "orientation": orientation,
            "seed": scenario.seed,
        },
    )

