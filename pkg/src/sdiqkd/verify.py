"""Randomized property suites behind ``sdiqkd verify``.

Each suite draws ``trials`` random instances from a seeded generator and
records the worst violation of its inequality. The first instance that
exceeds the tolerance is kept, serialized, so it can be replayed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chsh import correlator_closed_form
from .quantum_core import (
    BellDiagonalState,
    bell_basis,
    correlator_trace,
    diagonalize_on_bell_basis,
    project_and_mix,
    random_density_matrix,
    random_unitary,
    to_density,
    von_neumann_entropy,
)
from .security import (
    identical_preparation_report,
    optimize_eve_numeric,
    subadditivity_report,
)

SUITES = ("subadditivity", "projective", "identical", "correlator", "optimum")


@dataclass
class SuiteResult:
    name: str
    trials: int
    max_violation: float
    tolerance: float
    counterexample: dict | None = None

    @property
    def passed(self) -> bool:
        return self.counterexample is None


def encode_matrix(m) -> list:
    """Nested ``[re, im]`` pairs, exact to the last bit via ``float.hex``."""
    m = np.asarray(m, dtype=complex)
    return [[[float(z.real).hex(), float(z.imag).hex()] for z in row] for row in m]


def decode_matrix(rows) -> np.ndarray:
    return np.array([[float.fromhex(re) + 1j * float.fromhex(im) for re, im in row] for row in rows])


class _Tracker:
    def __init__(self, name, trials, tol, seed):
        self.result = SuiteResult(name, trials, -math.inf, tol)
        self.seed = seed

    def update(self, violation: float, trial: int, payload):
        r = self.result
        r.max_violation = max(r.max_violation, violation)
        if violation > r.tolerance and r.counterexample is None:
            r.counterexample = {"suite": r.name, "seed": self.seed, "trial": trial,
                                "violation": violation, **payload()}


def random_bell_diagonal(rng: np.random.Generator) -> BellDiagonalState:
    w = rng.dirichlet(np.full(4, 0.7))
    w[0] = 1.0 - w[1:].sum()
    return BellDiagonalState.from_weights(w)


def random_projectors(dim: int, rng: np.random.Generator):
    """Complete orthogonal projector set from a random basis grouped into blocks."""
    u = random_unitary(dim, rng)
    cuts = np.sort(rng.choice(np.arange(1, dim), size=rng.integers(0, dim), replace=False))
    blocks = np.split(np.arange(dim), cuts)
    return [u[:, b] @ u[:, b].conj().T for b in blocks]


def subadditivity_suite(trials: int, seed: int, tol: float = 1e-10) -> SuiteResult:
    """Random 4x4 bipartite states: ``S(rho_12) <= S(rho_1) + S(rho_2)``."""
    rng = np.random.default_rng(seed)
    t = _Tracker("subadditivity", trials, tol, seed)
    for k in range(trials):
        rho = random_density_matrix(16, rng, rank=int(rng.integers(1, 17)))
        rep = subadditivity_report(rho, (4, 4))
        t.update(-rep.gap, k, lambda: {"rho": encode_matrix(rho), "dims": [4, 4]})
    return t.result


def projective_suite(trials: int, seed: int, tol: float = 1e-10) -> SuiteResult:
    """Entropy never drops under a non-selective projective measurement, and
    Bell-basis diagonalization keeps the spectrum (off-diagonals checked at 1e-9)."""
    rng = np.random.default_rng(seed)
    t = _Tracker("projective", trials, tol, seed)
    bell = bell_basis()
    for k in range(trials):
        rho = random_density_matrix(4, rng, rank=int(rng.integers(1, 5)))
        ps = random_projectors(4, rng)
        s0 = von_neumann_entropy(rho)
        s1 = von_neumann_entropy(project_and_mix(rho, ps))
        u, state = diagonalize_on_bell_basis(rho)
        in_bell = bell.conj().T @ (u.conj().T @ rho @ u) @ bell
        off = np.max(np.abs(in_bell - np.diag(np.diag(in_bell))))
        drift = abs(von_neumann_entropy(to_density(state)) - s0)
        # scale the 1e-9 off-diagonal allowance onto this suite's tolerance
        violation = max(s0 - s1, drift, off * tol / 1e-9)
        t.update(violation, k, lambda: {"rho": encode_matrix(rho),
                                        "projectors": [encode_matrix(p) for p in ps]})
    return t.result


def identical_suite(trials: int, seed: int, tol: float = 1e-10) -> SuiteResult:
    """Concavity: the entropy of the average state bounds the average entropy."""
    rng = np.random.default_rng(seed)
    t = _Tracker("identical", trials, tol, seed)
    for k in range(trials):
        m = int(rng.integers(2, 6))
        states = [random_bell_diagonal(rng) for _ in range(m)]
        w = rng.dirichlet(np.ones(m))
        w[0] = 1.0 - w[1:].sum()
        rep = identical_preparation_report(states, w)
        t.update(rep.mean_entropy - rep.entropy_of_mean, k,
                 lambda: {"states": [s.weights.tolist() for s in states], "weights": w.tolist()})
    return t.result


def correlator_suite(trials: int, seed: int, tol: float = 1e-12) -> SuiteResult:
    """Closed-form correlator against the 4x4 trace."""
    rng = np.random.default_rng(seed)
    t = _Tracker("correlator", trials, tol, seed)
    for k in range(trials):
        state = random_bell_diagonal(rng)
        a, b = rng.uniform(-math.pi, math.pi, size=2)
        dev = abs(correlator_closed_form(state, a, b) - correlator_trace(to_density(state), a, b))
        t.update(dev, k, lambda: {"state": state.weights.tolist(), "a": a, "b": b})
    return t.result


def optimum_suite(trials: int, seed: int, tol: float = 1e-6) -> SuiteResult:
    """Golden-section optimum against ``q^2/4`` on a uniform grid of ``trials`` q values."""
    t = _Tracker("optimum", trials, tol, seed)
    for k, q in enumerate(np.linspace(0.0, 1.0, max(trials, 2))):
        p3 = optimize_eve_numeric(q)[0]
        t.update(abs(p3 - q * q / 4), k, lambda: {"q": float(q), "p3_star": p3})
    return t.result


RUNNERS = {
    "subadditivity": subadditivity_suite,
    "projective": projective_suite,
    "identical": identical_suite,
    "correlator": correlator_suite,
    "optimum": optimum_suite,
}


def product_state_equality(trials: int, seed: int) -> float:
    """Largest subadditivity gap over random product states (should be ~0)."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        rho = np.kron(random_density_matrix(4, rng), random_density_matrix(4, rng))
        worst = max(worst, abs(subadditivity_report(rho, (4, 4)).gap))
    return worst


__all__ = [
    "RUNNERS", "SUITES", "SuiteResult", "decode_matrix", "encode_matrix",
    "product_state_equality", "random_bell_diagonal", "random_projectors",
]
