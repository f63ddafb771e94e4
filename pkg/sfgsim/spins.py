"""Exact spin-1/2 cluster dynamics, SFG gate search and entanglement metrics.

Basis ordering follows ``numpy.kron``: spin 0 is the most significant factor.
Energies are in meV and times in ps; hbar enters only through HBAR_MEV_PS.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg, optimize, sparse

from .constants import HBAR_MEV_PS
from .errors import NoCleanGateError, PreconditionError, ShapeError, SystemSizeError

logger = logging.getLogger(__name__)

MAX_SPINS = 14
CLEAN_THRESHOLD_BITS = 1e-6
SCAN_RESOLUTION = 1e-3
MAX_SCAN_POINTS = 60000
REFINE_CANDIDATES = 24
_CHUNK = 2048

_SPLUS = sparse.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]))
_SMINUS = sparse.csr_matrix(np.array([[0.0, 0.0], [1.0, 0.0]]))
_SZ = sparse.csr_matrix(np.diag([0.5, -0.5]))

SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)


@dataclass
class SpinSystem:
    labels: list
    roles: list
    couplings: dict = field(default_factory=dict)
    zeeman: list = None

    def __post_init__(self):
        if len(self.labels) != len(self.roles):
            raise PreconditionError("labels and roles must have equal length")
        if self.zeeman is None:
            self.zeeman = [0.0] * len(self.labels)
        normalized = {}
        for (i, j), value in self.couplings.items():
            i, j = self.index(i), self.index(j)
            if i == j:
                raise PreconditionError("self-coupling is not allowed")
            if not math.isfinite(value):
                raise PreconditionError("couplings must be finite")
            normalized[(min(i, j), max(i, j))] = float(value)
        self.couplings = normalized

    @property
    def n_spins(self):
        return len(self.labels)

    @property
    def dimension(self):
        return 2 ** self.n_spins

    def index(self, key):
        if isinstance(key, (int, np.integer)):
            return int(key)
        return self.labels.index(key)

    def coupling(self, i, j):
        i, j = self.index(i), self.index(j)
        return self.couplings.get((min(i, j), max(i, j)), 0.0)

    def reordered(self, order):
        """Copy with spins permuted so that new spin k is old spin order[k]."""
        position = {old: new for new, old in enumerate(order)}
        return SpinSystem(
            labels=[self.labels[i] for i in order],
            roles=[self.roles[i] for i in order],
            couplings={(position[i], position[j]): v for (i, j), v in self.couplings.items()},
            zeeman=[self.zeeman[i] for i in order],
        )


@dataclass
class GateReport:
    duration: float
    qubit_unitary: np.ndarray
    control_residual_entanglement: float
    entangling_power: Optional[float]
    fidelity_to_target: Optional[float] = None
    control_label: str = ""
    qubit_labels: list = field(default_factory=list)
    status: str = "clean"

    def to_dict(self):
        return {
            "duration_ps": self.duration,
            "control": self.control_label,
            "qubits": list(self.qubit_labels),
            "control_residual_entanglement_bits": self.control_residual_entanglement,
            "entangling_power": self.entangling_power,
            "fidelity_to_target": self.fidelity_to_target,
            "status": self.status,
        }


@dataclass
class EntanglementMetrics:
    concurrence: Optional[float]
    entropy: float
    entangling_power: Optional[float]


def _site_operator(op, site, n):
    return sparse.kron(sparse.kron(sparse.identity(2 ** site), op), sparse.identity(2 ** (n - site - 1)))


def build_hamiltonian(system):
    """
    Dense H = sum J_ij S_i.S_j + sum Delta_i S_i^z.

    The isotropic exchange is real in the S^z basis, so H is a real symmetric
    array.
    """
    n = system.n_spins
    if n > MAX_SPINS:
        raise SystemSizeError(f"{n} spins exceed the dense limit of {MAX_SPINS}")
    dim = 2 ** n
    h = sparse.csr_matrix((dim, dim))
    for (i, j), value in system.couplings.items():
        if value == 0.0:
            continue
        flip = _site_operator(_SPLUS, i, n) @ _site_operator(_SMINUS, j, n)
        h = h + value * (0.5 * (flip + flip.T) + _site_operator(_SZ, i, n) @ _site_operator(_SZ, j, n))
    for i, delta in enumerate(system.zeeman):
        if delta:
            h = h + delta * _site_operator(_SZ, i, n)
    return np.asarray(h.toarray(), dtype=float)


class Propagator:
    """exp(-i H t / hbar) from one eigendecomposition of H."""

    def __init__(self, hamiltonian):
        self.energies, self.vectors = np.linalg.eigh(hamiltonian)

    def unitaries(self, times):
        times = np.atleast_1d(np.asarray(times, dtype=float))
        phases = np.exp(-1j * np.outer(times, self.energies) / HBAR_MEV_PS)
        return (self.vectors[None, :, :] * phases[:, None, :]) @ self.vectors.conj().T

    def unitary(self, t):
        return self.unitaries([t])[0]

    def evolve(self, state, times):
        coeffs = self.vectors.conj().T @ state
        phases = np.exp(-1j * np.outer(np.atleast_1d(times), self.energies) / HBAR_MEV_PS)
        return (phases * coeffs[None, :]) @ self.vectors.T


def propagator(hamiltonian, t):
    return Propagator(hamiltonian).unitary(t)


def evolve(state, hamiltonian, t):
    """
    Propagate a normalized state for time(s) t in ps.

    :return: evolved state, or one row per time when t is an array
    """
    state = np.asarray(state, dtype=complex)
    if abs(np.linalg.norm(state) - 1.0) > 1e-8:
        raise PreconditionError("state must be normalized")
    out = Propagator(hamiltonian).evolve(state, t)
    return out[0] if np.ndim(t) == 0 else out


def effective_coupling(j1, j2, excitation_energy):
    """Second-order qubit-qubit coupling J1 J2 / Delta E, meV."""
    if not excitation_energy > 0:
        raise PreconditionError("excitation energy must be positive")
    return j1 * j2 / excitation_energy


def characteristic_gate_time(coupling):
    """pi hbar / J in ps."""
    return math.pi * HBAR_MEV_PS / abs(coupling)


def operator_schmidt(unitary, left_dim):
    """Normalized operator-Schmidt weights of U across a left|right factorization."""
    dim = unitary.shape[-1]
    right_dim = dim // left_dim
    lead = unitary.shape[:-2]
    t = unitary.reshape(*lead, left_dim, right_dim, left_dim, right_dim)
    nd = len(lead)
    axes = list(range(nd)) + [nd, nd + 2, nd + 1, nd + 3]
    m = t.transpose(axes).reshape(*lead, left_dim ** 2, right_dim ** 2)
    s = np.linalg.svd(m, compute_uv=False)
    p = s * s
    return p / p.sum(axis=-1, keepdims=True)


def entropy_bits(p):
    p = np.asarray(p)
    p = p[p > 1e-300]
    return float(max(0.0, -(p * np.log2(p)).sum()))


def entangling_power(unitary):
    """Closed-form entangling power of a two-qubit unitary, in [0, 2/9]."""
    if unitary.shape != (4, 4):
        raise ShapeError("entangling power is defined here for 4x4 unitaries")

    def linear(u):
        p = operator_schmidt(u, 2)
        return 1.0 - float((p * p).sum())

    value = 4.0 / 9.0 * (linear(unitary) + linear(unitary @ SWAP) - linear(SWAP))
    return float(min(max(value, 0.0), 2.0 / 9.0))


def linear_entangling_power_mc(unitary, n_samples=400000, seed=0, chunk=50000):
    """Monte Carlo mean linear entropy of U|a>|b> over Haar product states."""
    rng = np.random.default_rng(seed)
    total = 0.0
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        a = rng.normal(size=(m, 2)) + 1j * rng.normal(size=(m, 2))
        b = rng.normal(size=(m, 2)) + 1j * rng.normal(size=(m, 2))
        a /= np.linalg.norm(a, axis=1, keepdims=True)
        b /= np.linalg.norm(b, axis=1, keepdims=True)
        psi = np.einsum("ij,mj->mi", unitary, np.einsum("mi,mj->mij", a, b).reshape(m, 4))
        psi = psi.reshape(m, 2, 2)
        rho_a = np.einsum("mij,mkj->mik", psi, psi.conj())
        purity = np.einsum("mij,mji->m", rho_a, rho_a).real
        total += float((1.0 - purity).sum())
        done += m
    return total / n_samples


def _state_metrics(state):
    if state.shape != (4,):
        raise ShapeError("concurrence needs a two-qubit (length 4) state")
    if abs(np.linalg.norm(state) - 1.0) > 1e-8:
        raise PreconditionError("state must be normalized")
    a, b, c, d = state
    psi = state.reshape(2, 2)
    rho_a = psi @ psi.conj().T
    return EntanglementMetrics(
        concurrence=float(2.0 * abs(a * d - b * c)),
        entropy=entropy_bits(np.linalg.eigvalsh(rho_a)),
        entangling_power=None,
    )


def _density_metrics(rho):
    yy = np.kron([[0, -1j], [1j, 0]], [[0, -1j], [1j, 0]])
    tilde = yy @ rho.conj() @ yy
    eig = np.sqrt(np.clip(np.linalg.eigvals(rho @ tilde).real, 0.0, None))
    eig = np.sort(eig)[::-1]
    rho_a = np.einsum("ijkj->ik", rho.reshape(2, 2, 2, 2))
    return EntanglementMetrics(
        concurrence=float(max(0.0, eig[0] - eig[1] - eig[2] - eig[3])),
        entropy=entropy_bits(np.linalg.eigvalsh(rho_a)),
        entangling_power=None,
    )


def entanglement_metrics(obj, kind="auto"):
    """
    Concurrence, entanglement entropy (bits) and entangling power.

    A length-4 vector is a pure state, a 4x4 unitary is a gate (entropy is then
    the operator-Schmidt entropy) and any other 4x4 Hermitian unit-trace matrix
    is a density matrix.
    """
    arr = np.asarray(obj, dtype=complex)
    if kind == "auto":
        if arr.ndim == 1:
            kind = "state"
        elif arr.ndim == 2 and arr.shape[0] == arr.shape[1]:
            kind = "unitary" if np.allclose(arr.conj().T @ arr, np.eye(arr.shape[0]), atol=1e-8) else "density"
        else:
            raise ShapeError(f"unsupported input shape {arr.shape}")
    if kind == "state":
        return _state_metrics(arr)
    if arr.shape != (4, 4):
        raise ShapeError("two-qubit metrics need a 4x4 matrix")
    if kind == "unitary":
        return EntanglementMetrics(
            concurrence=None,
            entropy=entropy_bits(operator_schmidt(arr, 2)),
            entangling_power=entangling_power(arr),
        )
    if kind == "density":
        return _density_metrics(arr)
    raise PreconditionError(f"unknown kind {kind!r}")


def average_gate_fidelity(unitary, target):
    """Average gate fidelity (|tr V^dag U|^2 + d) / (d (d + 1))."""
    d = unitary.shape[0]
    overlap = abs(np.trace(target.conj().T @ unitary)) ** 2
    return float((overlap + d) / (d * (d + 1)))


def dominant_qubit_factor(unitary, qubit_dim):
    """Unitary nearest to the dominant qubit-side operator-Schmidt factor."""
    t = unitary.reshape(2, qubit_dim, 2, qubit_dim).transpose(0, 2, 1, 3).reshape(4, qubit_dim ** 2)
    _, _, vh = np.linalg.svd(t)
    factor = vh[0].reshape(qubit_dim, qubit_dim)
    u, _ = linalg.polar(factor)
    return u


def _residual_weight(unitaries):
    p = operator_schmidt(unitaries, 2)
    return 1.0 - p.max(axis=-1)


def _selection_power(unitary, n_qubits):
    if n_qubits == 2:
        return entangling_power(unitary)
    # mean linear operator entanglement of each qubit against the rest
    dim = unitary.shape[0]
    values = []
    for q in range(n_qubits):
        order = [q] + [i for i in range(n_qubits) if i != q]
        t = unitary.reshape([2] * (2 * n_qubits))
        t = t.transpose(order + [n_qubits + i for i in order]).reshape(dim, dim)
        p = operator_schmidt(t, 2)
        values.append(1.0 - float((p * p).sum()))
    return float(np.mean(values))


def sfg_gate(
    system,
    control_id,
    tau_range=None,
    resolution=None,
    threshold=CLEAN_THRESHOLD_BITS,
    target=None,
    require_clean=True,
    max_points=MAX_SCAN_POINTS,
):
    """
    Search the excitation time that leaves the control unentangled.

    The control's exchange couplings are on for time tau. The residual
    control-qubit entanglement is the operator-Schmidt entropy of U(tau)
    across the control|qubits cut. Local minima of the non-dominant Schmidt
    weight on a uniform tau grid are refined with a bounded scalar search; of
    the candidates below ``threshold`` the most entangling one wins, ties going
    to the shortest tau.

    :param system: SpinSystem with the control's excited couplings
    :param control_id: label or index of the control spin
    :param tau_range: (t_min, t_max) in ps; defaults to (resolution, 4 pi hbar / min J)
    :param resolution: grid step in ps; defaults to 1e-3 pi hbar / max J
    :param threshold: clean-gate limit on the residual entropy, bits
    :param target: optional qubit unitary to score against
    :param require_clean: raise NoCleanGateError when no candidate is clean
    :return: GateReport
    """
    control = system.index(control_id)
    qubits = [i for i in range(system.n_spins) if i != control]
    if len(qubits) < 2:
        raise PreconditionError("an SFG gate needs at least two qubits")
    for (i, j), value in system.couplings.items():
        if value != 0.0 and control not in (i, j):
            raise PreconditionError("qubit-qubit couplings must be zero")
    strengths = [abs(system.coupling(control, q)) for q in qubits]
    nonzero = [s for s in strengths if s > 0]
    if not nonzero:
        raise PreconditionError("control does not couple to any qubit")

    ordered = system.reordered([control] + qubits)
    n_qubits = len(qubits)
    qubit_dim = 2 ** n_qubits
    prop = Propagator(build_hamiltonian(ordered))

    j_max, j_min = max(nonzero), min(nonzero)
    step = resolution or SCAN_RESOLUTION * math.pi * HBAR_MEV_PS / j_max
    lo, hi = tau_range or (step, 4.0 * math.pi * HBAR_MEV_PS / j_min)
    n_points = int(math.ceil((hi - lo) / step)) + 1
    if n_points > max_points:
        logger.warning("tau grid of %d points coarsened to %d", n_points, max_points)
        n_points = max_points
    taus = np.linspace(lo, hi, n_points)
    weight = np.concatenate(
        [_residual_weight(prop.unitaries(taus[k:k + _CHUNK])) for k in range(0, n_points, _CHUNK)]
    )

    interior = np.nonzero((weight[1:-1] <= weight[:-2]) & (weight[1:-1] < weight[2:]))[0] + 1
    interior = interior[np.argsort(weight[interior], kind="stable")][:REFINE_CANDIDATES]
    logger.debug("sfg scan: %d points, %d local minima refined", n_points, len(interior))

    def objective(tau):
        return float(_residual_weight(prop.unitaries([tau]))[0])

    candidates = []
    for i in sorted(interior.tolist()):
        res = optimize.minimize_scalar(
            objective, bounds=(taus[i - 1], taus[i + 1]), method="bounded", options={"xatol": step * 1e-9}
        )
        tau = float(res.x) if res.fun <= weight[i] else float(taus[i])
        u = prop.unitary(tau)
        entropy = entropy_bits(operator_schmidt(u, 2))
        v = dominant_qubit_factor(u, qubit_dim)
        candidates.append((tau, entropy, v))

    if not candidates:
        i = int(np.argmin(weight))
        u = prop.unitary(float(taus[i]))
        candidates.append((float(taus[i]), entropy_bits(operator_schmidt(u, 2)), dominant_qubit_factor(u, qubit_dim)))

    def report(tau, entropy, v, status):
        power = entangling_power(v) if n_qubits == 2 else None
        fidelity = average_gate_fidelity(v, target) if target is not None else None
        return GateReport(
            duration=tau,
            qubit_unitary=v,
            control_residual_entanglement=entropy,
            entangling_power=power,
            fidelity_to_target=fidelity,
            control_label=str(system.labels[control]),
            qubit_labels=[str(system.labels[q]) for q in qubits],
            status=status,
        )

    clean = [c for c in candidates if c[1] < threshold]
    if clean:
        scored = [(round(_selection_power(v, n_qubits), 9), -tau, tau, entropy, v) for tau, entropy, v in clean]
        best = max(scored, key=lambda item: (item[0], item[1]))
        return report(best[2], best[3], best[4], "clean")

    tau, entropy, v = min(candidates, key=lambda c: (c[1], c[0]))
    best = report(tau, entropy, v, "no_clean_gate")
    logger.warning("no clean gate for control %s; best residual %.3e bits", best.control_label, entropy)
    if require_clean:
        raise NoCleanGateError(f"no tau leaves control {best.control_label} unentangled", best=best)
    return best
