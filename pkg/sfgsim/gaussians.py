"""Slater -> Gaussian expansions and analytic Gaussian integrals.

The hydrogenic envelopes are expanded in Cartesian Gaussians (l <= 1) fitted
once in dimensionless form (decay constant 1) and rescaled to any radius.
Integrals use the McMurchie-Davidson Hermite scheme, vectorized over all
primitive pairs with numpy broadcasting.
"""
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import optimize, special

from .errors import FitFailureError, PreconditionError

logger = logging.getLogger(__name__)

KINDS = ("s1", "p2")
DEFAULT_TERMS = 6
FIT_TOLERANCE = 0.1
MIN_TERMS = 3

_AXES = ((1, 0, 0), (0, 1, 0), (0, 0, 1))


@dataclass(frozen=True)
class OrbitalSpec:
    """
    Hydrogenic envelope on one center.

    ``s1`` is the normalized 1s function with decay 1/a; ``p2`` is the normalized
    2p function with decay 1/(2a) oriented along ``axis``.
    """

    kind: str
    bohr_radius: float
    center: tuple = (0.0, 0.0, 0.0)
    axis: tuple = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PreconditionError(f"orbital kind must be one of {KINDS}, got {self.kind!r}")
        if not self.bohr_radius > 0:
            raise PreconditionError("bohr_radius must be positive")
        object.__setattr__(self, "center", tuple(float(x) for x in self.center))
        if self.kind == "p2":
            if self.axis is None:
                raise PreconditionError("p2 orbital needs an axis")
            axis = np.asarray(self.axis, dtype=float)
            norm = np.linalg.norm(axis)
            if norm == 0:
                raise PreconditionError("p2 axis must be non-zero")
            object.__setattr__(self, "axis", tuple(float(x) for x in axis / norm))

    @property
    def zeta(self):
        """Exponential decay constant in 1/Å."""
        return 1.0 / self.bohr_radius if self.kind == "s1" else 0.5 / self.bohr_radius

    @property
    def kinetic_charge(self):
        """k in T|x> = (e + k/r)|x>, in units of 1/Å times a_ref (see integrals)."""
        return 1.0 / self.bohr_radius

    @property
    def mean_inverse_radius(self):
        """<x|1/r|x> about its own center, 1/Å."""
        return self.zeta if self.kind == "s1" else 0.5 * self.zeta

    def moved(self, center, axis=None):
        return OrbitalSpec(self.kind, self.bohr_radius, center, axis if axis is not None else self.axis)


@dataclass
class GaussianExpansion:
    target: OrbitalSpec
    exponents: np.ndarray
    coefficients: np.ndarray
    fit_error: float

    @property
    def n_terms(self):
        return len(self.exponents)

    @property
    def terms(self):
        return list(zip(self.exponents.tolist(), self.coefficients.tolist()))

    def self_overlap(self):
        return _self_overlap(self.target.kind, self.exponents, self.coefficients)


def _self_overlap(kind, exponents, coefficients):
    p = exponents[:, None] + exponents[None, :]
    block = (math.pi / p) ** 1.5
    if kind == "p2":
        block = block / (2.0 * p)
    return float(coefficients @ block @ coefficients)


def _fit_grid(kind):
    r = np.geomspace(1e-3, 30.0 if kind == "s1" else 45.0, 1600)
    dr = np.gradient(r)
    if kind == "s1":
        weight = 4.0 * math.pi * r ** 2 * dr
    else:
        # |z (G - f)|^2 integrated over angles
        weight = 4.0 * math.pi / 3.0 * r ** 4 * dr
    target = np.exp(-r) / math.sqrt(math.pi)
    return r * r, np.sqrt(weight), target


def _projected(log_alpha, r2, sw, target):
    basis = np.exp(-np.exp(log_alpha)[None, :] * r2[:, None]) * sw[:, None]
    rhs = sw * target
    coefs, *_ = np.linalg.lstsq(basis, rhs, rcond=None)
    return basis @ coefs - rhs, coefs


@lru_cache(maxsize=None)
def unit_fit(kind, n_terms):
    """
    Least-squares fit of the decay-1 envelope by ``n_terms`` Gaussians.

    Exponents are optimized in log space with the linear coefficients
    projected out. Each fit starts from the (n-1)-term optimum plus one new
    exponent, so the residual never increases with n.

    :return: (exponents tuple, normalized coefficients tuple, relative L2 residual)
    """
    r2, sw, target = _fit_grid(kind)
    if n_terms == 1:
        starts = [np.array([math.log(0.3)])]
    else:
        prev, _, _ = unit_fit(kind, n_terms - 1)
        prev = np.log(np.array(prev))
        starts = [np.append(prev, prev.max() + math.log(4.0)), np.append(prev, prev.min() - math.log(4.0))]

    best = None
    for x0 in starts:
        result = optimize.least_squares(
            lambda x: _projected(x, r2, sw, target)[0], x0, method="lm", max_nfev=20000
        )
        if not result.success:
            continue
        cost = float(np.sqrt(np.sum(result.fun ** 2)))
        if best is None or cost < best[0]:
            best = (cost, result.x)
    if best is None:
        raise FitFailureError(f"{kind} fit with {n_terms} terms did not converge", residual=None)

    error, log_alpha = best
    _, coefs = _projected(log_alpha, r2, sw, target)
    exponents = np.exp(log_alpha)
    order = np.argsort(exponents)[::-1]
    exponents = exponents[order]
    coefs = coefs[order] / math.sqrt(_self_overlap(kind, exponents, coefs[order]))
    logger.debug("unit %s fit, %d terms: residual %.3e", kind, n_terms, error)
    return tuple(exponents.tolist()), tuple(coefs.tolist()), error


def fit_gaussian_expansion(orbital, n_terms=DEFAULT_TERMS, tolerance=FIT_TOLERANCE):
    """
    Gaussian expansion of a hydrogenic orbital.

    :param orbital: OrbitalSpec
    :param n_terms: number of Gaussians, >= 3
    :param tolerance: largest acceptable relative L2 residual
    :return: GaussianExpansion normalized to unit self-overlap
    """
    if n_terms < MIN_TERMS:
        raise PreconditionError(f"n_terms must be >= {MIN_TERMS}")
    exponents, coefs, error = unit_fit(orbital.kind, n_terms)
    if error > tolerance:
        raise FitFailureError(f"fit residual {error:.3e} above tolerance {tolerance}", residual=error)
    zeta = orbital.zeta
    power = 1.5 if orbital.kind == "s1" else 2.5
    return GaussianExpansion(
        target=orbital,
        exponents=np.array(exponents) * zeta ** 2,
        coefficients=np.array(coefs) * zeta ** power,
        fit_error=error,
    )


@dataclass
class ContractedOrbital:
    center: np.ndarray
    exponents: np.ndarray
    coefficients: np.ndarray
    components: list = field(default_factory=list)


def contracted(expansion):
    """Cartesian components of an expansion placed at its target center."""
    orbital = expansion.target
    if orbital.kind == "s1":
        components = [((0, 0, 0), 1.0)]
    else:
        components = [(ang, w) for ang, w in zip(_AXES, orbital.axis) if abs(w) > 1e-15]
    return ContractedOrbital(
        center=np.array(orbital.center, dtype=float),
        exponents=expansion.exponents,
        coefficients=expansion.coefficients,
        components=components,
    )


def boys(n, t):
    """Boys function F_n(t) for array t."""
    t = np.asarray(t, dtype=float)
    small = t < 1e-8
    safe = np.where(small, 1.0, t)
    a = n + 0.5
    value = special.gamma(a) * special.gammainc(a, safe) / (2.0 * safe ** a)
    series = 1.0 / (2 * n + 1) - t / (2 * n + 3)
    return np.where(small, series, value)


def hermite_e(i, j, t, qx, a, b):
    """Hermite expansion coefficient E_t^{ij} for one Cartesian direction."""
    p = a + b
    q = a * b / p
    if t < 0 or t > i + j:
        return 0.0
    if i == j == t == 0:
        return np.exp(-q * qx * qx)
    if j == 0:
        return (
            hermite_e(i - 1, j, t - 1, qx, a, b) / (2 * p)
            - (q * qx / a) * hermite_e(i - 1, j, t, qx, a, b)
            + (t + 1) * hermite_e(i - 1, j, t + 1, qx, a, b)
        )
    return (
        hermite_e(i, j - 1, t - 1, qx, a, b) / (2 * p)
        + (q * qx / b) * hermite_e(i, j - 1, t, qx, a, b)
        + (t + 1) * hermite_e(i, j - 1, t + 1, qx, a, b)
    )


class HermiteR:
    """Memoized Hermite Coulomb integrals R_{tuv}^n on a fixed array of centers."""

    def __init__(self, alpha, separation):
        self.alpha = alpha
        self.x = separation[..., 0]
        self.y = separation[..., 1]
        self.z = separation[..., 2]
        self.t = alpha * (separation ** 2).sum(axis=-1)
        self._cache = {}

    def __call__(self, t, u, v, n=0):
        key = (t, u, v, n)
        if key not in self._cache:
            self._cache[key] = self._compute(t, u, v, n)
        return self._cache[key]

    def _compute(self, t, u, v, n):
        if t < 0 or u < 0 or v < 0:
            return 0.0
        if t == u == v == 0:
            return (-2.0 * self.alpha) ** n * boys(n, self.t)
        if t == u == 0:
            out = self.z * self(t, u, v - 1, n + 1)
            if v > 1:
                out = out + (v - 1) * self(t, u, v - 2, n + 1)
            return out
        if t == 0:
            out = self.y * self(t, u - 1, v, n + 1)
            if u > 1:
                out = out + (u - 1) * self(t, u - 2, v, n + 1)
            return out
        out = self.x * self(t - 1, u, v, n + 1)
        if t > 1:
            out = out + (t - 1) * self(t - 2, u, v, n + 1)
        return out


@dataclass
class _Pair:
    p: np.ndarray
    center: np.ndarray
    coef: np.ndarray
    e: list
    ang: tuple


def _pair(x, ang_x, y, ang_y):
    a = x.exponents[:, None]
    b = y.exponents[None, :]
    p = a + b
    centers = (a[..., None] * x.center + b[..., None] * y.center) / p[..., None]
    q = x.center - y.center
    e = []
    for k in range(3):
        i, j = ang_x[k], ang_y[k]
        e.append(
            [np.broadcast_to(hermite_e(i, j, t, q[k], a, b), p.shape).ravel() for t in range(i + j + 1)]
        )
    coef = (x.coefficients[:, None] * y.coefficients[None, :]).ravel()
    total = tuple(ang_x[k] + ang_y[k] for k in range(3))
    return _Pair(p=p.ravel(), center=centers.reshape(-1, 3), coef=coef, e=e, ang=total)


def _pairs(x, y):
    for ang_x, w_x in x.components:
        for ang_y, w_y in y.components:
            yield w_x * w_y, _pair(x, ang_x, y, ang_y)


def overlap(x, y):
    """<x|y> for two contracted orbitals."""
    total = 0.0
    for weight, pr in _pairs(x, y):
        prim = pr.e[0][0] * pr.e[1][0] * pr.e[2][0] * (math.pi / pr.p) ** 1.5
        total += weight * float(pr.coef @ prim)
    return total


def potential(x, y, point):
    """<x| 1/|r - point| |y> in 1/Å."""
    point = np.asarray(point, dtype=float)
    total = 0.0
    for weight, pr in _pairs(x, y):
        r = HermiteR(pr.p, pr.center - point)
        acc = 0.0
        for t in range(pr.ang[0] + 1):
            for u in range(pr.ang[1] + 1):
                for v in range(pr.ang[2] + 1):
                    acc = acc + pr.e[0][t] * pr.e[1][u] * pr.e[2][v] * r(t, u, v)
        total += weight * float(pr.coef @ (2.0 * math.pi / pr.p * acc))
    return total


def repulsion(x, y, z, w):
    """(xy|zw) = integral x(1) y(1) z(2) w(2) / r12, in 1/Å."""
    total = 0.0
    for w1, left in _pairs(x, y):
        for w2, right in _pairs(z, w):
            p = left.p[:, None]
            q = right.p[None, :]
            alpha = p * q / (p + q)
            r = HermiteR(alpha, left.center[:, None, :] - right.center[None, :, :])
            acc = 0.0
            for t in range(left.ang[0] + 1):
                for u in range(left.ang[1] + 1):
                    for v in range(left.ang[2] + 1):
                        e_left = (left.e[0][t] * left.e[1][u] * left.e[2][v])[:, None]
                        for tau in range(right.ang[0] + 1):
                            for nu in range(right.ang[1] + 1):
                                for phi in range(right.ang[2] + 1):
                                    sign = -1.0 if (tau + nu + phi) % 2 else 1.0
                                    e_right = (right.e[0][tau] * right.e[1][nu] * right.e[2][phi])[None, :]
                                    acc = acc + sign * e_left * e_right * r(t + tau, u + nu, v + phi)
            prefactor = 2.0 * math.pi ** 2.5 / (p * q * np.sqrt(p + q))
            total += w1 * w2 * float(left.coef @ (prefactor * acc) @ right.coef)
    return total
