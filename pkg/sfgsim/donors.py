"""Effective-mass donor parameters, preset catalog and the Zeeman initialization check."""
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, fields
from functools import lru_cache
from typing import Optional

from .constants import (
    BOHR_MAGNETON_MEV_PER_T,
    BOHR_RADIUS_ANGSTROM,
    BOLTZMANN_MEV_PER_K,
    DIAMOND_DIELECTRIC_CONSTANT,
    EV_TO_MEV,
    RYDBERG_EV,
)
from .errors import InvalidModelError, PreconditionError

logger = logging.getLogger(__name__)

PRESET_FILE = os.path.join(os.path.dirname(__file__), "data", "donor_presets.json")
SUPPORTED_CATALOG_VERSIONS = (1,)
ROLES = ("qubit", "control")


@dataclass(frozen=True)
class DonorModel:
    species_name: str
    role: str
    binding_energy: float
    central_cell_split: float
    dielectric_constant: float
    effective_bohr_radius: float
    radius_scale_factor: float = 1.0
    spin: float = 0.5
    t1: Optional[float] = None
    t2: Optional[float] = None

    @property
    def coulombic_binding(self):
        """Coulombic part of the binding energy, eV."""
        return self.binding_energy - self.central_cell_split

    @property
    def effective_mass_ratio(self):
        return self.dielectric_constant ** 2 * self.coulombic_binding / RYDBERG_EV

    @property
    def orbital_radius(self):
        """Radius of the ground-state envelope actually used, Å."""
        return self.effective_bohr_radius * self.radius_scale_factor

    @property
    def transition_energy(self):
        """1s -> 2p energy of the hydrogenic Coulombic part, meV."""
        return 0.75 * self.coulombic_binding * EV_TO_MEV

    @property
    def coherence_budget(self):
        """T2 if known, otherwise T1, in seconds (None when neither is set)."""
        return self.t2 if self.t2 is not None else self.t1

    def validate(self):
        if self.role not in ROLES:
            raise InvalidModelError(f"role must be one of {ROLES}, got {self.role!r}")
        if not self.binding_energy > 0:
            raise InvalidModelError("binding energy must be positive")
        if not self.dielectric_constant > 1:
            raise InvalidModelError("dielectric constant must exceed 1")
        if not 0 <= self.central_cell_split < self.binding_energy:
            raise InvalidModelError("central-cell split must lie in [0, binding energy)")
        if not self.effective_bohr_radius > 0:
            raise InvalidModelError("effective Bohr radius must be positive")
        if not 0 < self.radius_scale_factor <= 1:
            raise InvalidModelError("radius_scale_factor must lie in (0, 1]")
        if (2 * self.spin) % 1 != 0 or self.spin <= 0:
            raise InvalidModelError("spin must be a positive half-integer")
        return self


@dataclass(frozen=True)
class ZeemanCheck:
    g_factor: float
    field: float
    temperature: float
    ratio: float
    polarization: float


def effective_bohr_radius(coulombic_binding, dielectric_constant):
    """a* = a0 (Ry / eps) / R_c in Å, with R_c in eV."""
    return BOHR_RADIUS_ANGSTROM * (RYDBERG_EV / dielectric_constant) / coulombic_binding


def model_from_ionization(
    binding_energy,
    dielectric_constant=DIAMOND_DIELECTRIC_CONSTANT,
    central_cell_split=0.0,
    species_name="donor",
    role="control",
    radius_scale_factor=1.0,
    spin=0.5,
    t1=None,
    t2=None,
):
    """
    Build a donor model from its ionization energy (effective Rydberg).

    :param binding_energy: R_eff in eV
    :param dielectric_constant: static dielectric constant
    :param central_cell_split: non-Coulombic part of R_eff in eV
    :return: DonorModel
    """
    coulombic = binding_energy - central_cell_split
    if coulombic <= 0 or central_cell_split < 0:
        raise InvalidModelError(
            f"Coulombic binding must be positive (R_eff={binding_energy}, split={central_cell_split})"
        )
    if not dielectric_constant > 1:
        raise InvalidModelError("dielectric constant must exceed 1")
    model = DonorModel(
        species_name=species_name,
        role=role,
        binding_energy=float(binding_energy),
        central_cell_split=float(central_cell_split),
        dielectric_constant=float(dielectric_constant),
        effective_bohr_radius=effective_bohr_radius(coulombic, dielectric_constant),
        radius_scale_factor=float(radius_scale_factor),
        spin=spin,
        t1=t1,
        t2=t2,
    )
    return model.validate()


def model_from_exciton(exciton_binding, haynes_factor=0.1, **kwargs):
    """Donor binding from bound-exciton binding by the Haynes rule, then as above."""
    if not exciton_binding > 0:
        raise InvalidModelError("exciton binding must be positive")
    if not 0 < haynes_factor < 1:
        raise InvalidModelError("Haynes factor must lie in (0, 1)")
    return model_from_ionization(exciton_binding / haynes_factor, **kwargs)


def zeeman_check(g, field, temperature):
    """
    Compare the Zeeman splitting with the thermal energy.

    :param g: g factor
    :param field: magnetic field in tesla
    :param temperature: temperature in kelvin, > 0
    :return: ZeemanCheck
    """
    if not temperature > 0:
        raise PreconditionError("temperature must be positive")
    ratio = g * BOHR_MAGNETON_MEV_PER_T * field / (BOLTZMANN_MEV_PER_K * temperature)
    return ZeemanCheck(
        g_factor=g,
        field=field,
        temperature=temperature,
        ratio=ratio,
        polarization=math.tanh(ratio / 2.0),
    )


def model_to_dict(model):
    return asdict(model)


def model_from_dict(data):
    known = {f.name for f in fields(DonorModel)}
    unknown = set(data) - known
    if unknown:
        raise InvalidModelError(f"unknown donor model keys: {sorted(unknown)}")
    return DonorModel(**data).validate()


def build_model(name, entry):
    """DonorModel from a catalog-style entry (``method`` plus keyword arguments)."""
    params = dict(entry)
    params.pop("notes", None)
    method = params.pop("method", "ionization")
    params.setdefault("species_name", name)
    if method == "exciton":
        return model_from_exciton(**params)
    if method == "ionization":
        return model_from_ionization(**params)
    raise InvalidModelError(f"preset {name!r}: unknown method {method!r}")


@lru_cache(maxsize=8)
def _load_catalog(path):
    with open(path, encoding="utf-8") as fh:
        catalog = json.load(fh)
    version = catalog.get("catalog_version")
    if version not in SUPPORTED_CATALOG_VERSIONS:
        raise InvalidModelError(f"unsupported preset catalog version {version!r}")
    presets = {name: build_model(name, entry) for name, entry in catalog["species"].items()}
    logger.debug("loaded %d donor presets from %s", len(presets), path)
    return presets, catalog


def load_presets(path=None):
    """Mapping of preset name -> DonorModel from the versioned catalog file."""
    presets, _ = _load_catalog(path or PRESET_FILE)
    return dict(presets)


def preset_notes(path=None):
    _, catalog = _load_catalog(path or PRESET_FILE)
    return {name: entry.get("notes", "") for name, entry in catalog["species"].items()}


def get_preset(name, path=None):
    presets = load_presets(path)
    if name not in presets:
        raise InvalidModelError(f"unknown donor preset {name!r}; known: {sorted(presets)}")
    return presets[name]
