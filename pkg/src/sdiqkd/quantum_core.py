"""Two-qubit state algebra: Bell states, x-z plane observables, Born-rule
sampling, von Neumann entropy, partial traces and projective measurements.

Matrices are plain complex ``numpy`` arrays. Everything here is exact
finite-dimensional linear algebra and serves as the reference that the
closed forms in :mod:`sdiqkd.chsh` and :mod:`sdiqkd.security` are checked
against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._jacobi import ConvergenceError, eigh

__all__ = [
    "BELL_LABELS",
    "BellDiagonalState",
    "ConvergenceError",
    "OUTCOMES",
    "bell_basis",
    "bell_diagonal_entropy",
    "bell_state",
    "correlator_trace",
    "diagonalize_on_bell_basis",
    "joint_outcome_distribution",
    "normalize_angle",
    "observable",
    "outcome_probabilities",
    "partial_trace",
    "project_and_mix",
    "random_density_matrix",
    "random_unitary",
    "sample_outcome",
    "sample_outcomes",
    "shannon_entropy",
    "to_density",
    "validate_density",
    "von_neumann_entropy",
]

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
I2 = np.eye(2, dtype=complex)

HERMITIAN_ATOL = 1e-12
TRACE_ATOL = 1e-12
NEGATIVE_EIGEN_ATOL = 1e-10

BELL_LABELS = ("phi+", "phi-", "psi+", "psi-")
_LABEL_ALIASES = {
    "Φ+": "phi+", "Φ-": "phi-", "Φ−": "phi-",
    "Ψ+": "psi+", "Ψ-": "psi-", "Ψ−": "psi-",
}

# (alice, bob) outcome order used by every probability vector in the package
OUTCOMES = ((1, 1), (1, -1), (-1, 1), (-1, -1))

_S = 1 / math.sqrt(2)
_BELL_VECTORS = {
    "phi+": np.array([_S, 0, 0, _S], dtype=complex),
    "phi-": np.array([_S, 0, 0, -_S], dtype=complex),
    "psi+": np.array([0, _S, _S, 0], dtype=complex),
    "psi-": np.array([0, _S, -_S, 0], dtype=complex),
}


def normalize_angle(theta: float) -> float:
    """Map an angle in radians onto (-pi, pi]."""
    t = math.remainder(float(theta), 2 * math.pi)
    if t <= -math.pi:
        t += 2 * math.pi
    return t


@dataclass(frozen=True)
class BellDiagonalState:
    """Mixture of the four Bell projectors.

    Weights are listed in the order Phi+, Phi-, Psi+, Psi-. The noise
    parameters follow the usual ``(1 - p, p1, p2, p3)`` naming.
    """

    phi_plus: float
    phi_minus: float
    psi_plus: float
    psi_minus: float

    def __post_init__(self):
        w = [float(x) for x in (self.phi_plus, self.phi_minus, self.psi_plus, self.psi_minus)]
        for name, x in zip(BELL_LABELS, w):
            if not (-1e-12 <= x <= 1 + 1e-12) or math.isnan(x):
                raise ValueError(f"weight of {name} is {x}, outside [0, 1]")
        if abs(math.fsum(w) - 1.0) > 1e-12:
            raise ValueError(f"Bell weights sum to {math.fsum(w)!r}, not 1")
        for field, x in zip(("phi_plus", "phi_minus", "psi_plus", "psi_minus"), w):
            object.__setattr__(self, field, x)

    @classmethod
    def from_weights(cls, weights: Sequence[float]) -> "BellDiagonalState":
        if len(weights) != 4:
            raise ValueError("expected four Bell weights")
        return cls(*weights)

    @classmethod
    def from_noise(cls, p1: float, p2: float, p3: float) -> "BellDiagonalState":
        """State ``(1 - p1 - p2 - p3, p1, p2, p3)``."""
        return cls(1.0 - p1 - p2 - p3, p1, p2, p3)

    @classmethod
    def werner(cls, visibility: float) -> "BellDiagonalState":
        """Phi+ mixed with white noise: ``v |Phi+><Phi+| + (1 - v) I/4``."""
        rest = (1.0 - visibility) / 4
        return cls(visibility + rest, rest, rest, rest)

    @classmethod
    def maximally_mixed(cls) -> "BellDiagonalState":
        return cls(0.25, 0.25, 0.25, 0.25)

    @property
    def weights(self) -> np.ndarray:
        return np.array([self.phi_plus, self.phi_minus, self.psi_plus, self.psi_minus])

    @property
    def p(self) -> float:
        return self.phi_minus + self.psi_plus + self.psi_minus

    @property
    def p1(self) -> float:
        return self.phi_minus

    @property
    def p2(self) -> float:
        return self.psi_plus

    @property
    def p3(self) -> float:
        return self.psi_minus


def bell_basis() -> np.ndarray:
    """Unitary whose columns are Phi+, Phi-, Psi+, Psi- in the computational basis."""
    return np.column_stack([_BELL_VECTORS[k] for k in BELL_LABELS])


def bell_state(label: str) -> np.ndarray:
    """Projector onto a Bell vector. Labels: ``phi+ phi- psi+ psi-`` (or Φ±, Ψ±)."""
    key = _LABEL_ALIASES.get(label, str(label).lower())
    if key not in _BELL_VECTORS:
        raise ValueError(f"unknown Bell label {label!r}")
    v = _BELL_VECTORS[key]
    return np.outer(v, v.conj())


def to_density(state: BellDiagonalState) -> np.ndarray:
    return sum(w * bell_state(k) for w, k in zip(state.weights, BELL_LABELS))


def observable(theta: float) -> np.ndarray:
    """``cos(theta) sigma_z + sin(theta) sigma_x``; theta is measured from +z toward +x."""
    return math.cos(theta) * SIGMA_Z + math.sin(theta) * SIGMA_X


def validate_density(rho, dim: int | None = None) -> np.ndarray:
    """Return ``rho`` as a complex array after checking it is a density matrix.

    Raises ``ValueError`` for non-square, non-Hermitian or trace != 1 input, or
    for a dimension other than ``dim`` when given. Positivity is checked where
    eigenvalues are computed anyway (entropy, diagonalization).
    """
    m = np.asarray(rho, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"density matrix must be square, got shape {m.shape}")
    if dim is not None and m.shape[0] != dim:
        raise ValueError(f"expected a {dim}x{dim} density matrix, got {m.shape[0]}x{m.shape[1]}")
    if np.max(np.abs(m - m.conj().T)) > HERMITIAN_ATOL:
        raise ValueError("density matrix is not Hermitian")
    tr = np.trace(m)
    if abs(tr - 1.0) > TRACE_ATOL:
        raise ValueError(f"density matrix has trace {tr.real:.15g}, not 1")
    return m


def _clamped_spectrum(w: np.ndarray) -> np.ndarray:
    if np.any(w < -NEGATIVE_EIGEN_ATOL):
        raise ValueError(f"matrix has negative eigenvalue {w.min():.3e}; not a valid state")
    return np.clip(w, 0.0, None)


def shannon_entropy(probs) -> float:
    """Entropy in bits of a probability vector, with 0 log 0 = 0."""
    p = np.asarray(probs, dtype=float)
    nz = p[p > 0]
    return float(-np.sum(nz * np.log2(nz))) + 0.0


def von_neumann_entropy(rho) -> float:
    """``-Tr(rho log2 rho)`` in bits, from a Jacobi eigendecomposition."""
    m = validate_density(rho)
    w = _clamped_spectrum(eigh(m)[0])
    return shannon_entropy(w)


def bell_diagonal_entropy(state: BellDiagonalState) -> float:
    return shannon_entropy(state.weights)


def correlator_trace(rho, a: float, b: float) -> float:
    """``Tr[(A(a) ⊗ B(b)) rho]`` for a two-qubit density matrix."""
    m = validate_density(rho, dim=4)
    val = np.trace(np.kron(observable(a), observable(b)) @ m)
    return float(val.real)


def joint_outcome_distribution(state: BellDiagonalState, a: float, b: float) -> np.ndarray:
    """Born-rule probabilities of ``(x, y)`` in :data:`OUTCOMES` order."""
    rho = to_density(state)
    pa = {s: (I2 + s * observable(a)) / 2 for s in (1, -1)}
    pb = {s: (I2 + s * observable(b)) / 2 for s in (1, -1)}
    probs = np.array([np.trace(np.kron(pa[x], pb[y]) @ rho).real for x, y in OUTCOMES])
    return np.clip(probs, 0.0, None)


def _local_moments(rho: np.ndarray) -> np.ndarray:
    """Expectations of the six x/z Pauli products that fix in-plane statistics.

    Returns ``[<zI>, <xI>, <Iz>, <Ix>, <zz>, <zx>, <xz>, <xx>]``.
    """
    ops = [
        np.kron(SIGMA_Z, I2), np.kron(SIGMA_X, I2),
        np.kron(I2, SIGMA_Z), np.kron(I2, SIGMA_X),
        np.kron(SIGMA_Z, SIGMA_Z), np.kron(SIGMA_Z, SIGMA_X),
        np.kron(SIGMA_X, SIGMA_Z), np.kron(SIGMA_X, SIGMA_X),
    ]
    return np.array([np.trace(op @ rho).real for op in ops])


def outcome_probabilities(rho, a, b) -> np.ndarray:
    """Vectorized Born rule for x-z plane measurements.

    ``a`` and ``b`` may be arrays of the same shape; the result has that shape
    plus a trailing axis of length 4 in :data:`OUTCOMES` order. Since the
    projectors ``(I ± A(a))/2`` are linear in ``(cos a, sin a)``, each
    probability is an exact bilinear form in the Pauli moments of ``rho``.
    """
    m = validate_density(rho, dim=4)
    za, xa, zb, xb, tzz, tzx, txz, txx = _local_moments(m)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ca, sa, cb, sb = np.cos(a), np.sin(a), np.cos(b), np.sin(b)
    ma = ca * za + sa * xa
    mb = cb * zb + sb * xb
    corr = ca * cb * tzz + ca * sb * tzx + sa * cb * txz + sa * sb * txx
    out = np.stack([(1 + x * ma + y * mb + x * y * corr) / 4 for x, y in OUTCOMES], axis=-1)
    return np.clip(out, 0.0, None)


def sample_outcome(state: BellDiagonalState, a: float, b: float, rng: np.random.Generator):
    """Draw one ``(alice, bob)`` pair of ±1 outcomes."""
    cum = np.cumsum(joint_outcome_distribution(state, a, b))
    idx = int(np.searchsorted(cum[:-1], rng.random() * cum[-1], side="right"))
    return OUTCOMES[idx]


def sample_outcomes(rho, a, b, rng: np.random.Generator):
    """Vectorized sampling; returns two int8 arrays of ±1 outcomes."""
    probs = outcome_probabilities(rho, a, b)
    cum = np.cumsum(probs, axis=-1)
    u = rng.random(cum.shape[:-1]) * cum[..., -1]
    idx = np.sum(u[..., None] >= cum[..., :-1], axis=-1)
    table = np.array(OUTCOMES, dtype=np.int8)
    return table[idx, 0], table[idx, 1]


def partial_trace(rho, dims: Sequence[int], keep) -> np.ndarray:
    """Trace out every factor not listed in ``keep``.

    >>> partial_trace(bell_state("phi+"), (2, 2), [0]).real
    array([[0.5, 0. ],
           [0. , 0.5]])
    """
    m = np.asarray(rho, dtype=complex)
    dims = [int(d) for d in dims]
    if int(np.prod(dims)) != m.shape[0] or m.shape[0] != m.shape[1]:
        raise ValueError(f"factor dims {dims} inconsistent with matrix shape {m.shape}")
    keep = sorted({int(k) for k in np.atleast_1d(keep)})
    n = len(dims)
    if any(k < 0 or k >= n for k in keep):
        raise ValueError(f"subsystem index out of range in {keep}")
    letters = "abcdefghijklmnopqrstuvwxyz"
    rows = list(letters[:n])
    cols = [rows[i] if i not in keep else letters[n + i].upper() for i in range(n)]
    out = "".join(rows[i] for i in keep) + "".join(cols[i] for i in keep)
    t = np.einsum("".join(rows) + "".join(cols) + "->" + out, m.reshape(dims + dims))
    d = int(np.prod([dims[i] for i in keep]))
    return t.reshape(d, d)


def project_and_mix(rho, projectors, atol: float = 1e-10) -> np.ndarray:
    """Non-selective projective measurement ``sum_i P_i rho P_i``."""
    m = validate_density(rho)
    ps = [np.asarray(p, dtype=complex) for p in projectors]
    if not ps:
        raise ValueError("empty projector set")
    eye = np.eye(m.shape[0])
    if any(p.shape != m.shape for p in ps):
        raise ValueError("projector shape does not match rho")
    if np.max(np.abs(sum(ps) - eye)) > atol:
        raise ValueError("projectors do not sum to the identity")
    for i, p in enumerate(ps):
        for j, q in enumerate(ps):
            target = p if i == j else 0.0
            if np.max(np.abs(p @ q - target)) > atol:
                raise ValueError(f"projectors {i} and {j} are not orthogonal idempotents")
    return sum(p @ m @ p for p in ps)


def diagonalize_on_bell_basis(rho):
    """Find a unitary ``U`` with ``U^† rho U`` diagonal in the Bell basis.

    Returns ``(U, state)`` where the state's weights are the eigenvalues of
    ``rho`` sorted in descending order (assigned Phi+, Phi-, Psi+, Psi-).
    Degenerate eigenspaces get whatever orthonormal basis the eigensolver
    returns.
    """
    m = validate_density(rho, dim=4)
    w, v = eigh(m)
    w = _clamped_spectrum(w[::-1])
    v = v[:, ::-1]
    u = v @ bell_basis().conj().T
    return u, BellDiagonalState.from_weights(w)


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a complex Ginibre matrix."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_density_matrix(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Random mixed state ``G G^† / Tr`` from a ``dim x rank`` Ginibre matrix."""
    k = dim if rank is None else rank
    g = rng.standard_normal((dim, k)) + 1j * rng.standard_normal((dim, k))
    m = g @ g.conj().T
    m = 0.5 * (m + m.conj().T)
    return m / np.trace(m).real
