"""Direct numerical integrals over exact Slater envelopes.

Kept as an independent check of the Gaussian engine. Geometries are limited
to s1 orbitals and p2 orbitals oriented along the inter-center line, which is
where the engine is exercised in curves and tables.

One-electron integrals use Gauss-Legendre quadrature in prolate spheroidal
coordinates. The Coulomb integral uses the closed-form potential of a 1s
density. The exchange integral solves Poisson's equation for the overlap
density by a Legendre multipole expansion about center B.
"""
import math

import numpy as np
from scipy import integrate, special

from .errors import PreconditionError
from .integrals import RawIntegrals, assemble

N_MU = 200
N_NU = 160
N_RADIAL = 3000
N_ANGULAR = 96
L_MAX = 30
# multipole moments below this fraction of the local density are roundoff
NOISE_FLOOR = 1e-12


def _frame(a, b):
    axis = np.subtract(b.center, a.center)
    separation = float(np.linalg.norm(axis))
    if separation == 0:
        raise PreconditionError("pair centers must be distinct")
    axis = axis / separation
    signs = []
    for orb in (a, b):
        if orb.kind == "p2":
            cos = float(np.dot(orb.axis, axis))
            if abs(abs(cos) - 1.0) > 1e-9:
                raise PreconditionError("quadrature oracle only handles p2 axes along the pair axis")
            signs.append(math.copysign(1.0, cos))
        else:
            signs.append(1.0)
    return separation, signs


def _value(orb, sign, rho2, z_rel):
    zeta = orb.zeta
    r = np.sqrt(rho2 + z_rel * z_rel)
    if orb.kind == "s1":
        return math.sqrt(zeta ** 3 / math.pi) * np.exp(-zeta * r)
    return math.sqrt(zeta ** 5 / math.pi) * sign * z_rel * np.exp(-zeta * r)


def _s1_potential(orb, r):
    """Electrostatic potential of a normalized 1s density, 1/Å."""
    zeta = orb.zeta
    r = np.maximum(r, 1e-300)
    return (1.0 - (1.0 + zeta * r) * np.exp(-2.0 * zeta * r)) / r


def _prolate_mesh(separation, zeta_min):
    x, wx = special.roots_legendre(N_MU)
    x = 0.5 * (x + 1.0)
    wx = 0.5 * wx
    scale = 1.0 / (zeta_min * separation)
    mu = 1.0 + scale * x / (1.0 - x)
    w_mu = wx * scale / (1.0 - x) ** 2
    nu, w_nu = special.roots_legendre(N_NU)
    m, n = np.meshgrid(mu, nu, indexing="ij")
    weight = (separation / 2.0) ** 3 * (m * m - n * n) * np.outer(w_mu, w_nu) * 2.0 * math.pi
    r_a = separation * (m + n) / 2.0
    r_b = separation * (m - n) / 2.0
    z_a = separation * (1.0 + m * n) / 2.0
    rho2 = np.maximum(r_a * r_a - z_a * z_a, 0.0)
    return weight, r_a, r_b, z_a, rho2


def _exchange_multipole(a, b, sign_a, sign_b, separation):
    """(ab|ab) by expanding the overlap density in Legendre multipoles about B."""
    zeta_sum = a.zeta + b.zeta
    r_max = separation + 60.0 / zeta_sum
    s_max = 60.0 / 61.0
    scale = r_max * (1.0 - s_max) / s_max
    s = np.linspace(0.0, s_max, N_RADIAL + 1)[1:]
    r = scale * s / (1.0 - s)
    x, wx = special.roots_legendre(N_ANGULAR)

    rr, xx = np.meshgrid(r, x, indexing="ij")
    rho2 = rr * rr * (1.0 - xx * xx)
    z_b = rr * xx
    z_a = z_b + separation
    density = _value(a, sign_a, rho2, z_a) * _value(b, sign_b, rho2, z_b)

    floor = NOISE_FLOOR * np.abs(density).max(axis=1)
    total = 0.0
    for l in range(L_MAX + 1):
        p_l = special.eval_legendre(l, x)
        rho_l = (2 * l + 1) / 2.0 * (density * (wx * p_l)[None, :]).sum(axis=1)
        rho_l = np.where(np.abs(rho_l) < floor, 0.0, rho_l)
        inner = integrate.cumulative_trapezoid(rho_l * r ** (l + 2), r, initial=0.0)
        # integrate inward from r_max so the outer part never subtracts large numbers
        outer = -integrate.cumulative_trapezoid((rho_l * r ** (1 - l))[::-1], r[::-1], initial=0.0)[::-1]
        v_l = 4.0 * math.pi / (2 * l + 1) * (inner / r ** (l + 1) + outer * r ** l)
        total += 2.0 * math.pi * 2.0 / (2 * l + 1) * integrate.trapezoid(r * r * rho_l * v_l, r)
    return float(total)


def quadrature_raw_integrals(a, b):
    """RawIntegrals for a pair of exact Slater envelopes."""
    separation, (sign_a, sign_b) = _frame(a, b)
    weight, r_a, r_b, z_a, rho2 = _prolate_mesh(separation, min(a.zeta, b.zeta))
    z_b = z_a - separation
    va = _value(a, sign_a, rho2, z_a)
    vb = _value(b, sign_b, rho2, z_b)

    if b.kind == "s1":
        coulomb = float(np.sum(weight * va * va * _s1_potential(b, r_b)))
    elif a.kind == "s1":
        coulomb = float(np.sum(weight * vb * vb * _s1_potential(a, r_a)))
    else:
        raise PreconditionError("Coulomb oracle needs at least one s1 orbital")

    return RawIntegrals(
        overlap=float(np.sum(weight * va * vb)),
        attraction_a=float(np.sum(weight * va * vb / r_a)),
        attraction_b=float(np.sum(weight * va * vb / r_b)),
        potential_b_on_a=float(np.sum(weight * va * va / r_b)),
        potential_a_on_b=float(np.sum(weight * vb * vb / r_a)),
        coulomb=coulomb,
        exchange=_exchange_multipole(a, b, sign_a, sign_b, separation),
    )


def quadrature_pair_integrals(a, b, epsilon, effective_charges=None, reference_radius=None):
    """Same assembly as :func:`sfgsim.integrals.pair_integrals` over quadrature integrals."""
    reference = reference_radius if reference_radius is not None else a.bohr_radius
    result = assemble(a, b, quadrature_raw_integrals(a, b), epsilon, reference, effective_charges)
    result.configuration["n_terms"] = "quadrature"
    return result


def quadrature_transfer(a, b, epsilon, reference_radius=None):
    """
    Transfer between two envelopes from one-electron quadrature only.

    Works for p2 pairs, which the Coulomb oracle cannot handle; the Coulomb
    and exchange terms of the result are nan.
    """
    separation, (sign_a, sign_b) = _frame(a, b)
    weight, r_a, r_b, z_a, rho2 = _prolate_mesh(separation, min(a.zeta, b.zeta))
    va = _value(a, sign_a, rho2, z_a)
    vb = _value(b, sign_b, rho2, z_a - separation)
    raw = RawIntegrals(
        overlap=float(np.sum(weight * va * vb)),
        attraction_a=float(np.sum(weight * va * vb / r_a)),
        attraction_b=float(np.sum(weight * va * vb / r_b)),
        potential_b_on_a=float(np.sum(weight * va * va / r_b)),
        potential_a_on_b=float(np.sum(weight * vb * vb / r_a)),
        coulomb=math.nan,
        exchange=math.nan,
    )
    reference = reference_radius if reference_radius is not None else a.bohr_radius
    result = assemble(a, b, raw, epsilon, reference)
    result.configuration["n_terms"] = "quadrature"
    return result
