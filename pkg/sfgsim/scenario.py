"""Scenario files: schema version 1.

A scenario is a JSON object with the keys below; every section except
``schema_version`` is optional and unknown keys are rejected at every level.
Units are Å, meV, ps, tesla and kelvin; nm-denominated spectral widths are
converted to meV on load.

    schema_version   1
    name             text
    description      text
    seed             integer, base seed for disorder and EPR sampling
    lattice          {lattice_constant, bounding_radius, periodic_cells}
    species          {id: preset name | catalog-style entry {"method": ..., ...}}
    placements       [{label, species, position: [x, y, z], transition_shift}]
    random           {concentration, species_mix: {id: fraction}, seed}
    integrals        {mode: direct|table, orientation, n_terms, cutoff, table_step}
    spectral         {base_transition_energy, homogeneous_width | homogeneous_width_nm,
                      wavelength_nm, disorder: [{name, width | width_nm}], resolution_factor}
    epr              {linewidth, offsets: {qubit label: meV} | spread + min_spacing}
    thresholds       {detection, clean_gate_bits}
    gates            {excitation_energy, simulate, configure, max_qubits}
    targets          {n_qubits, n_gates}
    resolvability    {n_lines, n_draws}
    curve            {kind: exchange|splitting, control, qubit, r_min, r_max, r_step, orientation}
    patch            {n_patches, workers}
    metadata         free-form object

``placements`` and ``random`` are mutually exclusive.
"""
import copy
import glob
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Optional

from . import donors
from .constants import NV_ZPL_NM, wavelength_to_mev
from .errors import InvalidModelError, ScenarioError
from .lattice import LatticeSpec
from .spectra import DEFAULT_RESOLUTION_FACTOR, DisorderComponent, SpectralModel, nm_width_to_mev

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
PRESET_DIR = os.path.join(os.path.dirname(__file__), "data", "scenarios")

_TOP_KEYS = {
    "schema_version", "name", "description", "seed", "lattice", "species", "placements", "random",
    "integrals", "spectral", "epr", "thresholds", "gates", "targets", "resolvability", "curve",
    "patch", "metadata",
}


@dataclass
class Placement:
    label: str
    species: str
    position: tuple
    transition_shift: float = 0.0


@dataclass
class RandomPlacement:
    concentration: float
    species_mix: dict
    seed: int = 0


@dataclass
class IntegralOptions:
    mode: str = "direct"
    orientation: str = "inter_center"
    n_terms: int = 6
    cutoff: Optional[float] = None
    table_step: float = 0.5


@dataclass
class EprOptions:
    linewidth: float = 0.2
    offsets: Optional[dict] = None
    spread: float = 400.0
    min_spacing: float = 40.0


@dataclass
class GateOptions:
    excitation_energy: float = 600.0
    simulate: bool = True
    configure: bool = True
    max_qubits: int = 4


@dataclass
class Scenario:
    name: str = "scenario"
    description: str = ""
    seed: int = 0
    lattice: LatticeSpec = field(default_factory=LatticeSpec)
    species: dict = field(default_factory=dict)
    species_source: dict = field(default_factory=dict)
    placements: list = field(default_factory=list)
    random: Optional[RandomPlacement] = None
    integrals: IntegralOptions = field(default_factory=IntegralOptions)
    spectral: Optional[SpectralModel] = None
    epr: EprOptions = field(default_factory=EprOptions)
    detection_threshold: float = 1.0
    clean_gate_bits: float = 1e-6
    gates: GateOptions = field(default_factory=GateOptions)
    targets: dict = field(default_factory=dict)
    resolvability: Optional[dict] = None
    curve: Optional[dict] = None
    patch: Optional[dict] = None
    metadata: dict = field(default_factory=dict)

    def role_of(self, species_id):
        return self.species[species_id].role

    @property
    def controls(self):
        return [p for p in self.placements if self.role_of(p.species) == "control"]

    @property
    def qubits(self):
        return [p for p in self.placements if self.role_of(p.species) == "qubit"]

    def control_species(self):
        return [k for k, model in self.species.items() if model.role == "control"]

    def spectral_model(self):
        """Spectral model with the base energy defaulting to the first control species' 2p transition."""
        if self.spectral is not None and self.spectral.base_transition_energy is not None:
            return self.spectral
        base = 0.0
        controls = self.control_species()
        if controls:
            base = self.species[controls[0]].transition_energy
        if self.spectral is None:
            return SpectralModel(base, 1.0, [], DEFAULT_RESOLUTION_FACTOR)
        model = copy.copy(self.spectral)
        model.base_transition_energy = base
        return model

    def with_random_seed(self, seed):
        """Copy with the random placement seed (and base seed) replaced."""
        clone = copy.deepcopy(self)
        clone.seed = int(seed)
        if clone.random is not None:
            clone.random.seed = int(seed)
        return clone

    def to_dict(self):
        out = {"schema_version": SCHEMA_VERSION, "name": self.name}
        if self.description:
            out["description"] = self.description
        out["seed"] = self.seed
        out["lattice"] = {
            "lattice_constant": self.lattice.lattice_constant,
            "bounding_radius": self.lattice.bounding_radius,
            "periodic_cells": self.lattice.periodic_cells,
        }
        out["species"] = copy.deepcopy(self.species_source)
        if self.random is not None:
            out["random"] = {
                "concentration": self.random.concentration,
                "species_mix": dict(self.random.species_mix),
                "seed": self.random.seed,
            }
        else:
            out["placements"] = [
                {
                    "label": p.label,
                    "species": p.species,
                    "position": list(p.position),
                    "transition_shift": p.transition_shift,
                }
                for p in self.placements
            ]
        out["integrals"] = dict(vars(self.integrals))
        if self.spectral is not None:
            out["spectral"] = self.spectral.to_dict()
            out["spectral"]["disorder"] = [
                {"name": d["name"], "width": d["width"]} for d in out["spectral"]["disorder"]
            ]
        epr = {"linewidth": self.epr.linewidth}
        if self.epr.offsets is not None:
            epr["offsets"] = dict(self.epr.offsets)
        else:
            epr.update(spread=self.epr.spread, min_spacing=self.epr.min_spacing)
        out["epr"] = epr
        out["thresholds"] = {"detection": self.detection_threshold, "clean_gate_bits": self.clean_gate_bits}
        out["gates"] = dict(vars(self.gates))
        for key in ("targets", "resolvability", "curve", "patch", "metadata"):
            value = getattr(self, key)
            if value:
                out[key] = copy.deepcopy(value)
        return out


def _section(data, path, allowed, required=()):
    if not isinstance(data, dict):
        raise ScenarioError("expected an object", path=path)
    unknown = set(data) - set(allowed)
    if unknown:
        raise ScenarioError(f"unknown keys {sorted(unknown)}", path=path)
    for key in required:
        if key not in data:
            raise ScenarioError(f"missing required key {key!r}", path=path)
    return data


def _number(value, path, positive=False, minimum=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError("expected a number", path=path)
    if positive and not value > 0:
        raise ScenarioError("must be positive", path=path)
    if minimum is not None and value < minimum:
        raise ScenarioError(f"must be >= {minimum}", path=path)
    return float(value)


def _integer(value, path, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError("expected an integer", path=path)
    if minimum is not None and value < minimum:
        raise ScenarioError(f"must be >= {minimum}", path=path)
    return int(value)


def _species(data):
    if not isinstance(data, dict):
        raise ScenarioError("expected an object", path="species")
    models = {}
    for key, entry in data.items():
        path = f"species.{key}"
        try:
            if isinstance(entry, str):
                models[key] = donors.get_preset(entry)
            elif isinstance(entry, dict):
                models[key] = donors.build_model(key, entry)
            else:
                raise ScenarioError("expected a preset name or an object", path=path)
        except (InvalidModelError, TypeError) as exc:
            raise ScenarioError(str(exc), path=path) from exc
    return models


def _placements(data, species):
    if not isinstance(data, list):
        raise ScenarioError("expected a list", path="placements")
    out = []
    seen = set()
    for i, item in enumerate(data):
        path = f"placements[{i}]"
        _section(item, path, {"label", "species", "position", "transition_shift"}, ("label", "species", "position"))
        if item["species"] not in species:
            raise ScenarioError(f"undeclared species {item['species']!r}", path=path + ".species")
        if item["label"] in seen:
            raise ScenarioError(f"duplicate label {item['label']!r}", path=path + ".label")
        seen.add(item["label"])
        position = item["position"]
        if not isinstance(position, list) or len(position) != 3:
            raise ScenarioError("position must be a list of three numbers", path=path + ".position")
        out.append(
            Placement(
                label=str(item["label"]),
                species=item["species"],
                position=tuple(_number(x, path + ".position") for x in position),
                transition_shift=_number(item.get("transition_shift", 0.0), path + ".transition_shift"),
            )
        )
    return out


def _random(data, species):
    _section(data, "random", {"concentration", "species_mix", "seed"}, ("concentration", "species_mix"))
    concentration = _number(data["concentration"], "random.concentration", positive=True)
    if concentration > 1:
        raise ScenarioError("must not exceed 1", path="random.concentration")
    mix = data["species_mix"]
    if not isinstance(mix, dict) or not mix:
        raise ScenarioError("expected a non-empty object", path="random.species_mix")
    for key, value in mix.items():
        if key not in species:
            raise ScenarioError(f"undeclared species {key!r}", path="random.species_mix")
        _number(value, f"random.species_mix.{key}", minimum=0.0)
    if abs(sum(mix.values()) - 1.0) > 1e-9:
        raise ScenarioError("fractions must sum to 1", path="random.species_mix")
    return RandomPlacement(concentration, {k: float(v) for k, v in mix.items()}, _integer(data.get("seed", 0), "random.seed"))


def _spectral(data):
    _section(
        data,
        "spectral",
        {"base_transition_energy", "homogeneous_width", "homogeneous_width_nm", "wavelength_nm", "disorder", "resolution_factor"},
    )
    wavelength = data.get("wavelength_nm")
    if wavelength is not None:
        wavelength = _number(wavelength, "spectral.wavelength_nm", positive=True)
    base = data.get("base_transition_energy")
    if base is not None:
        base = _number(base, "spectral.base_transition_energy")
    elif wavelength is not None:
        base = wavelength_to_mev(wavelength)

    def width(item, key, path):
        if key in item:
            return _number(item[key], path + "." + key, minimum=0.0)
        if key + "_nm" in item:
            return nm_width_to_mev(_number(item[key + "_nm"], path + "." + key + "_nm", minimum=0.0), wavelength or NV_ZPL_NM)
        raise ScenarioError(f"missing {key} or {key}_nm", path=path)

    homogeneous = width(data, "homogeneous_width", "spectral") if (
        "homogeneous_width" in data or "homogeneous_width_nm" in data
    ) else 1.0
    if not homogeneous > 0:
        raise ScenarioError("homogeneous width must be positive", path="spectral.homogeneous_width")
    components = []
    for i, item in enumerate(data.get("disorder", [])):
        path = f"spectral.disorder[{i}]"
        _section(item, path, {"name", "width", "width_nm"}, ("name",))
        components.append(DisorderComponent(str(item["name"]), width(item, "width", path)))
    factor = _number(data.get("resolution_factor", DEFAULT_RESOLUTION_FACTOR), "spectral.resolution_factor", minimum=1.0)
    return SpectralModel(base, homogeneous, components, factor)


def _options(cls, data, path, allowed_values=None):
    defaults = cls()
    _section(data, path, vars(defaults).keys())
    for key, value in (allowed_values or {}).items():
        if key in data and data[key] not in value:
            raise ScenarioError(f"must be one of {list(value)}", path=f"{path}.{key}")
    return cls(**{**vars(defaults), **data})


def scenario_from_dict(data):
    """Validate a decoded scenario object and build a Scenario."""
    _section(data, "", _TOP_KEYS, ("schema_version",))
    if data["schema_version"] != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported schema_version {data['schema_version']!r}", path="schema_version")
    if "placements" in data and "random" in data:
        raise ScenarioError("placements and random are mutually exclusive", path="random")

    lattice = _section(data.get("lattice", {}), "lattice", {"lattice_constant", "bounding_radius", "periodic_cells"})
    spec = LatticeSpec(
        lattice_constant=_number(lattice.get("lattice_constant", 3.567), "lattice.lattice_constant", positive=True),
        bounding_radius=_number(lattice.get("bounding_radius", 0.0), "lattice.bounding_radius", minimum=0.0),
        periodic_cells=None if lattice.get("periodic_cells") is None
        else _integer(lattice["periodic_cells"], "lattice.periodic_cells", minimum=1),
    )
    species_source = data.get("species", {})
    species = _species(species_source)
    scenario = Scenario(
        name=str(data.get("name", "scenario")),
        description=str(data.get("description", "")),
        seed=_integer(data.get("seed", 0), "seed", minimum=0),
        lattice=spec,
        species=species,
        species_source=copy.deepcopy(species_source),
        placements=_placements(data.get("placements", []), species),
        random=_random(data["random"], species) if "random" in data else None,
        integrals=_options(
            IntegralOptions, data.get("integrals", {}), "integrals",
            {"mode": ("direct", "table"), "orientation": ("inter_center", "crystal", "averaged")},
        ),
        spectral=_spectral(data["spectral"]) if "spectral" in data else None,
        epr=_options(EprOptions, data.get("epr", {}), "epr"),
        gates=_options(GateOptions, data.get("gates", {}), "gates"),
        targets=dict(_section(data.get("targets", {}), "targets", {"n_qubits", "n_gates"})),
        resolvability=_section(data["resolvability"], "resolvability", {"n_lines", "n_draws"}) if "resolvability" in data else None,
        curve=_section(
            data["curve"], "curve", {"kind", "control", "qubit", "r_min", "r_max", "r_step", "orientation"}, ("kind",)
        ) if "curve" in data else None,
        patch=_section(data["patch"], "patch", {"n_patches", "workers"}) if "patch" in data else None,
        metadata=dict(data.get("metadata", {})),
    )
    thresholds = _section(data.get("thresholds", {}), "thresholds", {"detection", "clean_gate_bits"})
    scenario.detection_threshold = _number(thresholds.get("detection", 1.0), "thresholds.detection", positive=True)
    scenario.clean_gate_bits = _number(thresholds.get("clean_gate_bits", 1e-6), "thresholds.clean_gate_bits", positive=True)
    if scenario.integrals.mode == "table" and scenario.integrals.orientation == "crystal":
        raise ScenarioError("table mode needs a rotation-free orientation", path="integrals.orientation")
    if scenario.curve is not None:
        if scenario.curve["kind"] not in ("exchange", "splitting"):
            raise ScenarioError("must be 'exchange' or 'splitting'", path="curve.kind")
        for key in ("control", "qubit"):
            if key in scenario.curve and scenario.curve[key] not in species:
                raise ScenarioError(f"undeclared species {scenario.curve[key]!r}", path=f"curve.{key}")
    return scenario


def loads_scenario(text):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(exc.msg, line=exc.lineno, column=exc.colno) from exc
    return scenario_from_dict(data)


def load_scenario(path):
    """Read and validate a scenario file, or a built-in preset by name."""
    if not os.path.exists(path) and os.path.exists(preset_path(path)):
        path = preset_path(path)
    with open(path, encoding="utf-8") as handle:
        text = handle.read()
    scenario = loads_scenario(text)
    logger.debug("loaded scenario %s from %s", scenario.name, path)
    return scenario


def dumps_scenario(scenario):
    return json.dumps(scenario.to_dict(), indent=2, sort_keys=True) + "\n"


def save_scenario(scenario, path):
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(dumps_scenario(scenario))
    return path


def preset_path(name):
    return os.path.join(PRESET_DIR, f"{name}.json")


def list_presets():
    return sorted(os.path.splitext(os.path.basename(p))[0] for p in glob.glob(os.path.join(PRESET_DIR, "*.json")))


def load_preset(name):
    path = preset_path(name)
    if not os.path.exists(path):
        raise ScenarioError(f"unknown preset {name!r}; known: {list_presets()}")
    return load_scenario(path)
