"""Eavesdropper bounds as a function of the observed CHSH value.

The chain is: ``S -> q = 1 - S/(2 sqrt 2) -> `` the maximum-entropy
Bell-diagonal state with ``p1 == p2`` and ``p + p3 == q`` (``p3 = q^2/4``)
``-> E(S)``, its von Neumann entropy, which bounds the Holevo quantity.
The key rate is ``1 - H2(Q) - E(S)`` with ``Q = q/2``.

Note on ``E(S)``: the entropy is taken over the optimal state's spectrum
``{(1+s)^2/4, (1-s^2)/4, (1-s^2)/4, (1-s)^2/4}`` with ``s = S/(2 sqrt 2)``.
The frequently printed variant with coefficients ``(1 +/- s)/4`` and
``1/2 - S^2/16`` does not sum to one and is not used here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .chsh import TSIRELSON
from .quantum_core import (
    BellDiagonalState,
    partial_trace,
    shannon_entropy,
    to_density,
    von_neumann_entropy,
)

INV_PHI = (math.sqrt(5) - 1) / 2


def _check_s(s: float) -> float:
    s = float(s)
    if not (-1e-12 <= s <= TSIRELSON + 1e-12):
        raise ValueError(f"CHSH value {s} outside [0, 2*sqrt(2)]")
    return min(max(s, 0.0), TSIRELSON)


def _check_q(q: float) -> float:
    q = float(q)
    if not (0.0 <= q <= 1.0):
        raise ValueError(f"q = {q} outside [0, 1]")
    return q


def q_from_s(s: float) -> float:
    """``q = 1 - S / (2 sqrt 2)``, which equals twice the QBER."""
    return min(max(1.0 - _check_s(s) / TSIRELSON, 0.0), 1.0)


def s_from_q(q: float) -> float:
    return TSIRELSON * (1.0 - _check_q(q))


@dataclass(frozen=True)
class EveOptimum:
    q: float
    p1: float
    p3: float
    state: BellDiagonalState
    entropy_bits: float


@dataclass(frozen=True)
class KeyRateResult:
    s_value: float
    q: float
    qber: float
    holevo_bound_bits: float
    rate_bits_per_sifted_bit: float


def eve_entropy(q: float, p3: float) -> float:
    """Entropy of ``(1 - q + p3, q/2 - p3, q/2 - p3, p3)`` in bits."""
    q = _check_q(q)
    if not (-1e-15 <= p3 <= q / 2 + 1e-15):
        raise ValueError(f"p3 = {p3} outside [0, q/2] for q = {q}")
    p3 = min(max(p3, 0.0), q / 2)
    p1 = q / 2 - p3
    return shannon_entropy([1 - q + p3, p1, p1, p3])


def optimal_eve_state(q: float) -> EveOptimum:
    """Closed-form entropy maximizer: ``p3 = q^2/4``, ``p1 = q/2 - q^2/4``."""
    q = _check_q(q)
    p3 = q * q / 4
    p1 = q / 2 - p3
    state = BellDiagonalState(1 - q + p3, p1, p1, p3)
    return EveOptimum(q, p1, p3, state, eve_entropy(q, p3))


def werner_at_q(q: float) -> BellDiagonalState:
    """White-noise state with the same ``q`` (and so the same CHSH value)."""
    return BellDiagonalState.werner(1.0 - _check_q(q))


def golden_section_max(f, lo: float, hi: float, tol: float = 1e-10, max_iter: int = 500):
    """Maximize a unimodal ``f`` on ``[lo, hi]``; returns ``(x, f(x))``."""
    a, b = lo, hi
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    candidates = [(f(x), x) for x in (lo, 0.5 * (a + b), hi)]
    fx, x = max(candidates)
    return x, fx


def optimize_eve_numeric(q: float, tol: float = 1e-10):
    """Numerical maximizer of :func:`eve_entropy` over ``p3 in [0, q/2]``.

    Independent of the closed form; returns ``(p3_star, entropy_bits)``.
    """
    q = _check_q(q)
    if q == 0:
        return 0.0, 0.0
    return golden_section_max(lambda p3: eve_entropy(q, p3), 0.0, q / 2, tol=tol)


def holevo_spectrum(s: float) -> np.ndarray:
    """Eigenvalues of the optimal eavesdropper state at CHSH value ``s``."""
    sig = _check_s(s) / TSIRELSON
    mid = (1 - sig * sig) / 4
    return np.array([(1 + sig) ** 2 / 4, mid, mid, (1 - sig) ** 2 / 4])


def holevo_bound(s: float) -> float:
    """``E(S)``: entropy (bits) of the optimal eavesdropper state."""
    return shannon_entropy(holevo_spectrum(s))


def binary_entropy(x: float) -> float:
    x = float(x)
    if not (0.0 <= x <= 1.0):
        raise ValueError(f"binary entropy argument {x} outside [0, 1]")
    return shannon_entropy([x, 1.0 - x])


def rate_from_qber(qber: float, chi: float) -> float:
    """Collective-attack rate ``1 - H2(Q) - chi``."""
    return 1.0 - binary_entropy(qber) - chi


def key_rate(s: float) -> KeyRateResult:
    """Rate bound ``1 - H2(1/2 - S/(4 sqrt 2)) - E(S)`` at CHSH value ``s``."""
    s = _check_s(s)
    q = q_from_s(s)
    qb = min(max(0.5 - s / (2 * TSIRELSON), 0.0), 0.5)
    chi = holevo_bound(s)
    return KeyRateResult(s, q, qb, chi, rate_from_qber(qb, chi))


def zero_rate_threshold(lo: float = 2.0, hi: float = TSIRELSON, tol: float = 1e-8,
                        max_iter: int = 200):
    """Bisection for the CHSH value where :func:`key_rate` crosses zero.

    Returns ``(s_star, q_star)`` with ``q_star = 1/2 - s_star/(4 sqrt 2)``.
    """
    f = lambda s: key_rate(s).rate_bits_per_sifted_bit  # noqa: E731
    flo, fhi = f(lo), f(hi)
    if flo > 0 or fhi < 0:
        raise ValueError(f"rate does not change sign on [{lo}, {hi}]")
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    s_star = 0.5 * (lo + hi)
    return s_star, 0.5 - s_star / (2 * TSIRELSON)


class SubadditivityReport(NamedTuple):
    lhs: float
    rhs: float
    gap: float


def subadditivity_report(rho, dims: Sequence[int]) -> SubadditivityReport:
    """``S(rho)`` against the sum of the single-factor marginal entropies."""
    lhs = von_neumann_entropy(rho)
    rhs = math.fsum(
        von_neumann_entropy(partial_trace(rho, dims, [k])) for k in range(len(dims))
    )
    return SubadditivityReport(lhs, rhs, rhs - lhs)


class PreparationReport(NamedTuple):
    mean_entropy: float
    entropy_of_mean: float


def _mixture(states: Sequence[BellDiagonalState], weights) -> tuple[np.ndarray, np.ndarray]:
    w = np.asarray(weights, dtype=float)
    if len(states) < 2 or len(w) != len(states):
        raise ValueError("need at least two states and one weight per state")
    if np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
        raise ValueError("weights must be a probability vector")
    return w, np.array([s.weights for s in states])


def identical_preparation_report(states: Sequence[BellDiagonalState], weights) -> PreparationReport:
    """Average entropy of the prepared states versus entropy of their average.

    Concavity gives ``entropy_of_mean >= mean_entropy`` with equality only
    when all states coincide.
    """
    w, table = _mixture(states, weights)
    mean_entropy = math.fsum(wk * shannon_entropy(row) for wk, row in zip(w, table))
    mean_state = BellDiagonalState.from_weights(w @ table)
    return PreparationReport(mean_entropy, von_neumann_entropy(to_density(mean_state)))


def maximize_mean_entropy(states: Sequence[BellDiagonalState], weights, rng: np.random.Generator,
                          iterations: int = 20_000, step: float = 0.05):
    """Hill-climb the weighted mean entropy with the weighted average state fixed.

    Each move shifts probability between two Bell weights of one state and
    compensates in another state so that ``sum_k w_k state_k`` is unchanged.
    Returns the final list of states.
    """
    w, table = _mixture(states, weights)
    table = table.copy()
    m = len(w)

    def objective(t):
        return sum(wk * shannon_entropy(row) for wk, row in zip(w, t))

    best = objective(table)
    for it in range(iterations):
        scale = step * (1 - it / iterations) + 1e-6
        j, k = rng.choice(m, size=2, replace=False)
        a, b = rng.choice(4, size=2, replace=False)
        delta = scale * rng.random()
        trial = table.copy()
        trial[j, a] += delta
        trial[j, b] -= delta
        trial[k, a] -= delta * w[j] / w[k]
        trial[k, b] += delta * w[j] / w[k]
        if trial.min() < 0 or trial.max() > 1:
            continue
        val = objective(trial)
        if val > best:
            table, best = trial, val
    return [BellDiagonalState.from_weights(row / row.sum()) for row in table]
