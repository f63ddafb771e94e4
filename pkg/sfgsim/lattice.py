"""Diamond lattice geometry and random doping.

Sites are handled in integer lattice units of a/4, where a diamond site is a
triple (i, j, k) of equal parity with i + j + k = 0 (mod 4) for the even
(fcc) sublattice and i + j + k = 3 (mod 4) for the odd one. Squared distances
are then exact integers, so neighbour shells never merge by rounding.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .constants import DIAMOND_LATTICE_CONSTANT
from .errors import InsufficientRegionError, InvalidSpecError, PreconditionError

logger = logging.getLogger(__name__)

CENTER_CONVENTION = "center_included"

# Conventional cubic cell in a/4 units: fcc sites, then the (1/4, 1/4, 1/4) basis copy
CELL_BASIS = np.array(
    [
        (0, 0, 0), (0, 2, 2), (2, 0, 2), (2, 2, 0),
        (1, 1, 1), (1, 3, 3), (3, 1, 3), (3, 3, 1),
    ],
    dtype=np.int64,
)

_EPS = 1e-9


@dataclass(frozen=True)
class LatticeSpec:
    lattice_constant: float = DIAMOND_LATTICE_CONSTANT
    origin_convention: str = "atom_centered"
    bounding_radius: float = 0.0
    # Periodic supercell of L^3 conventional cells instead of a sphere
    periodic_cells: Optional[int] = None

    @property
    def unit(self):
        """Length of one integer lattice unit (a/4) in Å."""
        return self.lattice_constant / 4.0

    def validate(self):
        if not self.lattice_constant > 0:
            raise InvalidSpecError(f"lattice constant must be positive, got {self.lattice_constant}")
        if self.origin_convention != "atom_centered":
            raise InvalidSpecError(f"unsupported origin convention {self.origin_convention!r}")
        if self.bounding_radius < 0:
            raise InvalidSpecError(f"bounding radius must be >= 0, got {self.bounding_radius}")
        if self.periodic_cells is not None and self.periodic_cells < 1:
            raise InvalidSpecError("periodic_cells must be a positive integer")


@dataclass(frozen=True)
class Site:
    position: tuple
    index: int
    lattice_coordinates: tuple


@dataclass(frozen=True)
class ShellTable:
    shells: list
    squared_units: list = field(default_factory=list)

    @property
    def total_sites(self):
        return sum(count for _, count in self.shells)

    def cumulative(self):
        running = 0
        out = []
        for radius, count in self.shells:
            running += count
            out.append((radius, running))
        return out


@dataclass
class DopedRegion:
    spec: LatticeSpec
    coordinates: np.ndarray
    species: np.ndarray
    concentration: float
    nominal_concentration: float
    n_sites: int
    seed: int
    species_names: tuple = ()

    @property
    def n_dopants(self):
        return int(len(self.coordinates))

    @property
    def positions(self):
        """Dopant positions in Å."""
        return self.coordinates.astype(float) * self.spec.unit

    @property
    def placements(self):
        unit = self.spec.unit
        return [
            (Site(tuple(float(x) * unit for x in c), i, tuple(int(x) for x in c)), str(s))
            for i, (c, s) in enumerate(zip(self.coordinates, self.species))
        ]


@dataclass
class NeighborStatistics:
    n_shells: int
    shell_sites: int
    n_samples: int
    counts: np.ndarray
    empirical: np.ndarray
    analytic: np.ndarray
    sigma: np.ndarray

    def binned(self, which="empirical"):
        """Collapse a distribution to the P(0), P(1), P(2), P(>2) bins."""
        p = self.empirical if which == "empirical" else self.analytic
        return {"0": float(p[0]), "1": float(p[1]), "2": float(p[2]), ">2": float(p[3:].sum())}


def is_site(coords):
    """Boolean mask of integer triples (a/4 units) that are diamond sites."""
    coords = np.asarray(coords)
    parity = coords % 2
    same = (parity[..., 0] == parity[..., 1]) & (parity[..., 1] == parity[..., 2])
    total = coords.sum(axis=-1) % 4
    even = (parity[..., 0] == 0) & (total == 0)
    odd = (parity[..., 0] == 1) & (total == 3)
    return same & (even | odd)


def _sphere_coordinates(radius_units):
    """All sites within radius (a/4 units) of the origin, sorted by (d^2, i, j, k)."""
    limit = int(math.floor(radius_units + _EPS))
    r2 = radius_units * radius_units + _EPS
    axis = np.arange(-limit, limit + 1, dtype=np.int64)
    jj, kk = np.meshgrid(axis, axis, indexing="ij")
    jj = jj.ravel()
    kk = kk.ravel()
    chunks = []
    # one slab per i keeps memory at O(limit^2)
    for i in axis:
        d2 = i * i + jj * jj + kk * kk
        coords = np.stack([np.full_like(jj, i), jj, kk], axis=1)
        keep = (d2 <= r2) & is_site(coords)
        if keep.any():
            chunks.append(coords[keep])
    coords = np.concatenate(chunks, axis=0)
    d2 = (coords * coords).sum(axis=1)
    order = np.lexsort((coords[:, 2], coords[:, 1], coords[:, 0], d2))
    return coords[order]


def site_coordinates(spec):
    """
    Integer lattice coordinates of every site in the region described by ``spec``.

    :param spec: LatticeSpec, spherical or periodic
    :return: (n, 3) int64 array in a/4 units
    """
    spec.validate()
    if spec.periodic_cells:
        cells = spec.periodic_cells
        grid = np.arange(cells, dtype=np.int64)
        cx, cy, cz = np.meshgrid(grid, grid, grid, indexing="ij")
        origins = 4 * np.stack([cx.ravel(), cy.ravel(), cz.ravel()], axis=1)
        return (origins[:, None, :] + CELL_BASIS[None, :, :]).reshape(-1, 3)
    return _sphere_coordinates(spec.bounding_radius / spec.unit)


def enumerate_sites(spec):
    """
    List every lattice site within the bounding sphere, origin included.

    :param spec: LatticeSpec
    :return: list of Site in deterministic (distance, i, j, k) order
    """
    spec.validate()
    coords = _sphere_coordinates(spec.bounding_radius / spec.unit)
    unit = spec.unit
    return [
        Site(tuple(float(x) * unit for x in c), index, tuple(int(x) for x in c))
        for index, c in enumerate(coords)
    ]


def count_sites(spec, include_center=True):
    """Number of sites within the bounding sphere."""
    spec.validate()
    n = len(_sphere_coordinates(spec.bounding_radius / spec.unit))
    return n if include_center else n - 1


def _shells_from_coordinates(coords, n_shells, unit):
    d2 = (coords * coords).sum(axis=1)
    values, counts = np.unique(d2[d2 > 0], return_counts=True)
    values = values[:n_shells]
    counts = counts[:n_shells]
    shells = [(math.sqrt(float(v)) * unit, int(c)) for v, c in zip(values, counts)]
    return ShellTable(shells=shells, squared_units=[int(v) for v in values])


def shell_sizes(spec, n_shells):
    """
    First ``n_shells`` neighbour shells of the origin site.

    :param spec: LatticeSpec whose bounding sphere must contain the shells
    :param n_shells: number of shells, >= 1
    :return: ShellTable
    """
    if n_shells < 1:
        raise PreconditionError("n_shells must be >= 1")
    spec.validate()
    coords = _sphere_coordinates(spec.bounding_radius / spec.unit)
    table = _shells_from_coordinates(coords, n_shells, spec.unit)
    if len(table.shells) < n_shells:
        raise InsufficientRegionError(
            f"only {len(table.shells)} shells inside {spec.bounding_radius} Å, {n_shells} requested"
        )
    return table


def neighbor_shells(lattice_constant, n_shells):
    """Shell table for ``n_shells`` shells, growing the enumeration radius as needed."""
    radius = lattice_constant
    while True:
        spec = LatticeSpec(lattice_constant=lattice_constant, bounding_radius=radius)
        try:
            return shell_sizes(spec, n_shells)
        except InsufficientRegionError:
            radius *= 1.5


def shell_offsets(lattice_constant, n_shells):
    """Offsets (a/4 units) from an even-sublattice site to its first ``n_shells`` shells."""
    table = neighbor_shells(lattice_constant, n_shells)
    limit = table.squared_units[-1]
    coords = _sphere_coordinates(math.sqrt(limit))
    d2 = (coords * coords).sum(axis=1)
    return coords[(d2 > 0) & (d2 <= limit)], table


def place_dopants(spec, concentration, species_mix, seed):
    """
    Randomly dope the region: each site is occupied independently.

    :param spec: LatticeSpec (sphere or periodic supercell)
    :param concentration: occupation probability per site, in (0, 1]
    :param species_mix: mapping species name -> fraction, fractions summing to 1
    :param seed: integer seed for numpy's default_rng
    :return: DopedRegion
    """
    if not 0 < concentration <= 1:
        raise PreconditionError(f"concentration must lie in (0, 1], got {concentration}")
    names = tuple(species_mix)
    fractions = np.array([species_mix[n] for n in names], dtype=float)
    if len(names) == 0 or np.any(fractions < 0) or abs(fractions.sum() - 1.0) > 1e-9:
        raise PreconditionError("species_mix fractions must be non-negative and sum to 1")

    coords = site_coordinates(spec)
    rng = np.random.default_rng(seed)
    occupied = rng.random(len(coords)) < concentration
    chosen = coords[occupied]
    species = np.array(names, dtype=object)[rng.choice(len(names), size=len(chosen), p=fractions)]
    realized = len(chosen) / len(coords)
    logger.debug("placed %d dopants on %d sites (seed %s)", len(chosen), len(coords), seed)
    return DopedRegion(
        spec=spec,
        coordinates=chosen,
        species=species,
        concentration=realized,
        nominal_concentration=float(concentration),
        n_sites=int(len(coords)),
        seed=int(seed),
        species_names=names,
    )


def binomial_neighbor_distribution(shell_table, concentration):
    """P(k other dopants among the shell sites) for independent occupation."""
    n = shell_table.total_sites
    return stats.binom.pmf(np.arange(n + 1), n, concentration)


def neighbor_probability_table(shell_table, concentrations):
    """Rows of (concentration, P(at least one other dopant within the shells))."""
    n = shell_table.total_sites
    return [(float(c), float(1.0 - (1.0 - c) ** n)) for c in concentrations]


def _periodic_neighbor_counts(region, offsets):
    size = 4 * region.spec.periodic_cells
    grid = np.zeros((size, size, size), dtype=bool)
    coords = region.coordinates
    grid[coords[:, 0], coords[:, 1], coords[:, 2]] = True
    # odd sublattice sees the inverted neighbour star
    sign = np.where(coords[:, 0] % 2 == 0, 1, -1)
    counts = np.zeros(len(coords), dtype=np.int64)
    for off in offsets:
        target = (coords + sign[:, None] * off[None, :]) % size
        counts += grid[target[:, 0], target[:, 1], target[:, 2]]
    return counts, coords


def _sphere_neighbor_counts(region, offsets, reach):
    coords = region.coordinates
    radius = region.spec.bounding_radius / region.spec.unit
    norms = np.sqrt((coords * coords).sum(axis=1).astype(float))
    interior = norms + reach <= radius + _EPS
    span = int(math.floor(radius + _EPS)) + int(math.ceil(reach)) + 1
    base = 2 * span + 1

    def encode(c):
        c = c + span
        return (c[..., 0] * base + c[..., 1]) * base + c[..., 2]

    occupied = np.sort(encode(coords))
    inner = coords[interior]
    sign = np.where(inner[:, 0] % 2 == 0, 1, -1)
    counts = np.zeros(len(inner), dtype=np.int64)
    for off in offsets:
        keys = encode(inner + sign[:, None] * off[None, :])
        pos = np.clip(np.searchsorted(occupied, keys), 0, len(occupied) - 1)
        counts += occupied[pos] == keys
    return counts, inner


def neighbor_statistics(region, n_shells):
    """
    Distribution of the number of other dopants within the first ``n_shells`` shells.

    Periodic regions use every dopant; spherical regions use only dopants whose
    whole neighbourhood lies inside the sphere.

    :param region: DopedRegion
    :param n_shells: number of shells
    :return: NeighborStatistics with empirical and binomial reference distributions
    """
    if region.n_dopants == 0:
        raise PreconditionError("region has no dopants")
    offsets, table = shell_offsets(region.spec.lattice_constant, n_shells)
    if region.spec.periodic_cells:
        counts, _ = _periodic_neighbor_counts(region, offsets)
    else:
        reach = math.sqrt(table.squared_units[-1])
        counts, _ = _sphere_neighbor_counts(region, offsets, reach)
        if len(counts) == 0:
            raise PreconditionError("no dopant has its full neighbourhood inside the region")
    n = table.total_sites
    histogram = np.bincount(counts, minlength=n + 1)[: n + 1]
    empirical = histogram / len(counts)
    analytic = binomial_neighbor_distribution(table, region.nominal_concentration)
    sigma = np.sqrt(analytic * (1.0 - analytic) / len(counts))
    return NeighborStatistics(
        n_shells=n_shells,
        shell_sites=n,
        n_samples=int(len(counts)),
        counts=histogram,
        empirical=empirical,
        analytic=analytic,
        sigma=sigma,
    )


def sphere_count_table(radii, lattice_constant=DIAMOND_LATTICE_CONSTANT, concentration=None):
    """
    Site counts for several sphere radii under both center conventions.

    :param radii: iterable of radii in Å
    :param lattice_constant: cubic lattice constant in Å
    :param concentration: optional local concentration for the expected dopant count
    :return: list of dict rows
    """
    rows = []
    for radius in radii:
        n = count_sites(LatticeSpec(lattice_constant=lattice_constant, bounding_radius=radius))
        row = {
            "radius_angstrom": float(radius),
            "sites_with_center": n,
            "sites_without_center": n - 1,
            "convention": CENTER_CONVENTION,
            "continuum_sites": 8.0 / lattice_constant ** 3 * 4.0 / 3.0 * math.pi * float(radius) ** 3,
        }
        if concentration is not None:
            row["expected_dopants"] = n * concentration
        rows.append(row)
    return rows
