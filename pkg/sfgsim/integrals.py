"""Two-center integrals, Heitler-London exchange and transfer splittings.

Each center's envelope is a hydrogenic function that satisfies
``T|x> = (e_x + k_x / r_X)|x>`` exactly, with ``k_x = a_ref / a_x`` in units of
e^2/eps, where ``a_ref`` is the effective Bohr radius that fixes the shared
effective mass. Kinetic terms are therefore eliminated analytically and every
energy reduces to overlap, nuclear-attraction and electron-repulsion integrals
over the Gaussian expansions. The orbital energies ``e_x`` cancel from both
the exchange splitting and the transfer integral.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize

from . import gaussians
from .constants import COULOMB_MEV_ANGSTROM
from .errors import IllConditionedGeometryError, PreconditionError
from .gaussians import OrbitalSpec, fit_gaussian_expansion

logger = logging.getLogger(__name__)

ORIENTATIONS = ("inter_center", "crystal", "averaged")
OVERLAP_LIMIT = 0.999
# ground exchange below 2% of the excited exchange counts as negligible
DOMINANCE_FACTOR = 0.02


@dataclass
class PairIntegralResult:
    separation: float
    overlap: float
    transfer: float
    coulomb: float
    exchange_integral: float
    exchange_splitting: float
    configuration: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class RawIntegrals:
    """Dimensioned one- and two-electron integrals (1/Å) for a pair a, b."""

    overlap: float
    attraction_a: float  # <a|1/r_A|b>
    attraction_b: float  # <a|1/r_B|b>
    potential_b_on_a: float  # <a|1/r_B|a>
    potential_a_on_b: float  # <b|1/r_A|b>
    coulomb: float  # (aa|bb)
    exchange: float  # (ab|ab)


def gaussian_raw_integrals(a, b, n_terms=gaussians.DEFAULT_TERMS):
    """All integrals needed for the pair from the Gaussian expansions."""
    ga = gaussians.contracted(fit_gaussian_expansion(a, n_terms))
    gb = gaussians.contracted(fit_gaussian_expansion(b, n_terms))
    return RawIntegrals(
        overlap=gaussians.overlap(ga, gb),
        attraction_a=gaussians.potential(ga, gb, a.center),
        attraction_b=gaussians.potential(ga, gb, b.center),
        potential_b_on_a=gaussians.potential(ga, ga, b.center),
        potential_a_on_b=gaussians.potential(gb, gb, a.center),
        coulomb=gaussians.repulsion(ga, ga, gb, gb),
        exchange=gaussians.repulsion(ga, gb, ga, gb),
    )


def assemble(a, b, raw, epsilon, reference_radius, effective_charges=None):
    """
    Heitler-London exchange splitting and transfer from raw integrals.

    :param a: OrbitalSpec on center A
    :param b: OrbitalSpec on center B
    :param raw: RawIntegrals
    :param epsilon: dielectric constant screening every Coulomb term
    :param reference_radius: a_ref in Å
    :param effective_charges: (Z_A, Z_B); defaults to (k_A, k_B)
    :return: PairIntegralResult in meV
    """
    kappa_a = reference_radius * a.kinetic_charge
    kappa_b = reference_radius * b.kinetic_charge
    z_a, z_b = effective_charges if effective_charges is not None else (kappa_a, kappa_b)
    s = raw.overlap
    if abs(s) > OVERLAP_LIMIT:
        raise IllConditionedGeometryError(f"overlap {s:.6f} too close to 1", overlap=s)

    # one-electron pieces with the orbital energies removed
    g_ab = 0.5 * (
        (kappa_b - z_b) * raw.attraction_b - z_a * raw.attraction_a
        + (kappa_a - z_a) * raw.attraction_a - z_b * raw.attraction_b
    )
    w_a = (kappa_a - z_a) * a.mean_inverse_radius - z_b * raw.potential_b_on_a
    w_b = (kappa_b - z_b) * b.mean_inverse_radius - z_a * raw.potential_a_on_b

    unit = COULOMB_MEV_ANGSTROM / epsilon
    splitting = 2.0 * (s * s * (w_a + w_b + raw.coulomb) - 2.0 * s * g_ab - raw.exchange) / (1.0 - s ** 4)
    transfer = (g_ab - 0.5 * s * (w_a + w_b)) / (1.0 - s * s)
    separation = float(np.linalg.norm(np.subtract(b.center, a.center)))
    return PairIntegralResult(
        separation=separation,
        overlap=s,
        transfer=unit * transfer,
        coulomb=unit * raw.coulomb,
        exchange_integral=unit * raw.exchange,
        exchange_splitting=unit * splitting,
        configuration={
            "kinds": [a.kind, b.kind],
            "radii": [a.bohr_radius, b.bohr_radius],
            "charges": [float(z_a), float(z_b)],
            "reference_radius": reference_radius,
            "epsilon": epsilon,
        },
    )


def pair_integrals(a, b, epsilon, effective_charges=None, n_terms=gaussians.DEFAULT_TERMS, reference_radius=None):
    """
    Overlap, transfer, Coulomb and exchange terms for one orbital pair.

    :param a: OrbitalSpec on center A (its radius is the default a_ref)
    :param b: OrbitalSpec on center B
    :param epsilon: dielectric constant
    :param effective_charges: optional (Z_A, Z_B) in units of e
    :param n_terms: Gaussians per orbital
    :param reference_radius: effective Bohr radius fixing the kinetic scale
    :return: PairIntegralResult
    """
    if np.allclose(a.center, b.center):
        raise PreconditionError("pair centers must be distinct")
    reference = reference_radius if reference_radius is not None else a.bohr_radius
    raw = gaussian_raw_integrals(a, b, n_terms)
    result = assemble(a, b, raw, epsilon, reference, effective_charges)
    result.configuration["n_terms"] = n_terms
    return result


def perpendicular_axes(direction):
    """Two unit vectors completing ``direction`` to a right-handed orthonormal frame."""
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    helper = np.eye(3)[int(np.argmin(np.abs(d)))]
    first = np.cross(d, helper)
    first /= np.linalg.norm(first)
    return first, np.cross(d, first)


def _average(results, orientation):
    out = PairIntegralResult(
        separation=results[0].separation,
        overlap=float(np.mean([r.overlap for r in results])),
        transfer=float(np.mean([r.transfer for r in results])),
        coulomb=float(np.mean([r.coulomb for r in results])),
        exchange_integral=float(np.mean([r.exchange_integral for r in results])),
        exchange_splitting=float(np.mean([r.exchange_splitting for r in results])),
        configuration=dict(results[0].configuration),
    )
    out.configuration["orientation"] = orientation
    return out


def control_qubit_integrals(
    control,
    qubit,
    control_center,
    qubit_center,
    excited=True,
    orientation="inter_center",
    crystal_axis=(0.0, 0.0, 1.0),
    n_terms=gaussians.DEFAULT_TERMS,
):
    """
    Pair result for a control (1s or excited 2p) and a qubit 1s at given positions.

    The control's effective Bohr radius sets the kinetic scale and its
    dielectric constant screens the pair.
    """
    if orientation not in ORIENTATIONS:
        raise PreconditionError(f"orientation must be one of {ORIENTATIONS}")
    control_center = np.asarray(control_center, dtype=float)
    qubit_center = np.asarray(qubit_center, dtype=float)
    b = OrbitalSpec("s1", qubit.orbital_radius, tuple(qubit_center))
    kwargs = dict(
        epsilon=control.dielectric_constant,
        n_terms=n_terms,
        reference_radius=control.effective_bohr_radius,
    )
    if not excited:
        a = OrbitalSpec("s1", control.orbital_radius, tuple(control_center))
        result = pair_integrals(a, b, **kwargs)
        result.configuration["orientation"] = "none"
        return result

    sigma = qubit_center - control_center
    if orientation == "inter_center":
        axes = [sigma]
    elif orientation == "crystal":
        axes = [np.asarray(crystal_axis, dtype=float)]
    else:
        axes = [sigma, *perpendicular_axes(sigma)]
    results = [
        pair_integrals(OrbitalSpec("p2", control.orbital_radius, tuple(control_center), tuple(axis)), b, **kwargs)
        for axis in axes
    ]
    return _average(results, orientation)


def map_points(fn, items, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _check_grid(r_grid):
    r_grid = np.asarray(r_grid, dtype=float)
    if r_grid.ndim != 1 or len(r_grid) == 0 or np.any(r_grid <= 0) or np.any(np.diff(r_grid) <= 0):
        raise PreconditionError("R grid must be positive and strictly increasing")
    return r_grid


def exchange_curve(
    control,
    qubit,
    excited,
    r_grid,
    orientation="inter_center",
    n_terms=gaussians.DEFAULT_TERMS,
    workers=None,
):
    """
    Exchange splitting versus separation for a control-qubit pair.

    :param control: DonorModel of the control
    :param qubit: DonorModel of the qubit
    :param excited: use the control's 2p envelope instead of its 1s
    :param r_grid: positive increasing separations, Å
    :return: list of PairIntegralResult, one per separation
    """
    r_grid = _check_grid(r_grid)

    def point(r):
        return control_qubit_integrals(
            control, qubit, (0.0, 0.0, 0.0), (r, 0.0, 0.0),
            excited=excited, orientation=orientation, n_terms=n_terms,
        )

    logger.debug("exchange curve (%s) over %d points", "2p-1s" if excited else "1s-1s", len(r_grid))
    return map_points(point, r_grid, workers)


@dataclass
class SplittingPoint:
    separation: float
    lower: float
    upper: float
    transfer: float
    overlap: float

    @property
    def splitting(self):
        return self.upper - self.lower


def control_pair_transfer(control, center_a, center_b, n_terms=gaussians.DEFAULT_TERMS):
    """Transfer result between the 2p sigma envelopes of two identical controls."""
    center_a = np.asarray(center_a, dtype=float)
    center_b = np.asarray(center_b, dtype=float)
    axis = tuple(center_b - center_a)
    a = OrbitalSpec("p2", control.orbital_radius, tuple(center_a), axis)
    b = OrbitalSpec("p2", control.orbital_radius, tuple(center_b), axis)
    return pair_integrals(
        a, b, control.dielectric_constant, n_terms=n_terms, reference_radius=control.effective_bohr_radius
    )


def transfer_splitting_curve(control, r_grid, n_terms=gaussians.DEFAULT_TERMS, workers=None):
    """
    Bonding/antibonding transition energies of two identical excited controls.

    :param control: DonorModel
    :param r_grid: positive increasing separations, Å
    :return: list of SplittingPoint with branches base -/+ |t| in meV
    """
    r_grid = _check_grid(r_grid)
    base = control.transition_energy

    def point(r):
        result = control_pair_transfer(control, (0.0, 0.0, 0.0), (r, 0.0, 0.0), n_terms)
        shift = abs(result.transfer)
        return SplittingPoint(float(r), base - shift, base + shift, result.transfer, result.overlap)

    return map_points(point, r_grid, workers)


def crossover_radius(
    control, qubit, r_grid, orientation="inter_center", n_terms=gaussians.DEFAULT_TERMS, factor=1.0
):
    """
    Separation beyond which the ground exchange stays below ``factor`` times the excited one.

    ``factor=1`` is the plain crossover; :data:`DOMINANCE_FACTOR` marks where the
    ground coupling is negligible next to the excited one. The last sign change
    of factor * J_excited - J_ground on ``r_grid`` is refined with brentq on the
    full pair calculation. Returns None when there is no change.
    """
    r_grid = _check_grid(r_grid)

    def difference(r):
        ground = control_qubit_integrals(
            control, qubit, (0, 0, 0), (r, 0, 0), excited=False, n_terms=n_terms
        ).exchange_splitting
        excited = control_qubit_integrals(
            control, qubit, (0, 0, 0), (r, 0, 0), excited=True, orientation=orientation, n_terms=n_terms
        ).exchange_splitting
        return factor * excited - ground

    values = np.array([difference(r) for r in r_grid])
    changes = np.nonzero((values[:-1] <= 0) & (values[1:] > 0))[0]
    if len(changes) == 0:
        return None
    i = int(changes[-1])
    return float(optimize.brentq(difference, r_grid[i], r_grid[i + 1], xtol=1e-9, rtol=1e-12))


class ExchangeTable:
    """Tabulated pair quantity versus separation with linear interpolation; zero beyond the grid."""

    def __init__(self, r_grid, values):
        self.r_grid = np.asarray(r_grid, dtype=float)
        self.values = np.asarray(values, dtype=float)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = np.interp(r, self.r_grid, self.values)
        return np.where(r > self.r_grid[-1], 0.0, out)

    @classmethod
    def exchange(cls, control, qubit, r_grid, orientation="inter_center", n_terms=gaussians.DEFAULT_TERMS, workers=None):
        curve = exchange_curve(control, qubit, True, r_grid, orientation=orientation, n_terms=n_terms, workers=workers)
        return cls(r_grid, [p.exchange_splitting for p in curve])

    @classmethod
    def transfer(cls, control, r_grid, n_terms=gaussians.DEFAULT_TERMS, workers=None):
        curve = transfer_splitting_curve(control, r_grid, n_terms=n_terms, workers=workers)
        return cls(r_grid, [p.transfer for p in curve])
