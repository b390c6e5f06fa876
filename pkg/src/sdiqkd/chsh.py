"""Closed-form correlators and the CHSH polynomial for Bell-diagonal states
measured in the x-z plane.

With the angle and label conventions of :mod:`sdiqkd.quantum_core` the
correlator of a Bell-diagonal state is

    E(a, b) = (1 - p - p3) cos(a - b) + (p1 - p2) cos(a + b).

CHSH terms are stored in the order (A1B1, A1B2, A2B1, A2B2) with signs
``(+, +, +, -)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .quantum_core import BellDiagonalState, normalize_angle

TSIRELSON = 2 * math.sqrt(2)
CHSH_SIGNS = (1, 1, 1, -1)
SYMMETRY_ATOL = 1e-9


class AsymmetricState(ValueError):
    """The operation needs ``p1 == p2`` (within tolerance) and the state violates it."""


@dataclass(frozen=True)
class BasisConfig:
    """Measurement directions: ``alice = (theta1, theta2)``, ``bob = (phi1, phi2)``."""

    alice: tuple[float, float]
    bob: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "alice", tuple(normalize_angle(t) for t in self.alice))
        object.__setattr__(self, "bob", tuple(normalize_angle(t) for t in self.bob))
        if len(self.alice) != 2 or len(self.bob) != 2:
            raise ValueError("BasisConfig needs two angles per side")

    def as_array(self) -> np.ndarray:
        return np.array([*self.alice, *self.bob])


@dataclass(frozen=True)
class ChshReport:
    terms: tuple[float, float, float, float]
    s_value: float
    symmetric: bool
    tolerance: float


def correlator_closed_form(state: BellDiagonalState, a, b):
    """``E(a, b)``; accepts scalars or broadcastable arrays."""
    x = state.phi_plus - state.psi_minus
    y = state.phi_minus - state.psi_plus
    return x * np.cos(np.subtract(a, b)) + y * np.cos(np.add(a, b))


def chsh_terms(state: BellDiagonalState, cfg: BasisConfig) -> np.ndarray:
    (t1, t2), (f1, f2) = cfg.alice, cfg.bob
    return np.array([
        s * correlator_closed_form(state, a, b)
        for s, (a, b) in zip(CHSH_SIGNS, ((t1, f1), (t1, f2), (t2, f1), (t2, f2)))
    ])


def chsh_value(state: BellDiagonalState, cfg: BasisConfig, tolerance: float = SYMMETRY_ATOL) -> ChshReport:
    terms = chsh_terms(state, cfg)
    s = math.fsum(terms)
    symmetric = bool(np.max(np.abs(terms - s / 4)) <= tolerance)
    return ChshReport(tuple(float(t) for t in terms), s, symmetric, tolerance)


def check_symmetry_equations(state: BellDiagonalState, cfg: BasisConfig) -> np.ndarray:
    """Cyclic differences of the four signed correlators.

    All four vanish exactly when every term equals ``S/4``.
    """
    t = chsh_terms(state, cfg)
    return t - np.roll(t, -1)


def _require_symmetric(state: BellDiagonalState, atol: float = SYMMETRY_ATOL):
    if abs(state.p1 - state.p2) > atol:
        raise AsymmetricState(
            f"p1 = {state.p1:.12g} and p2 = {state.p2:.12g} differ by more than {atol:g}"
        )


def solve_symmetric_angles(state: BellDiagonalState, theta1: float, atol: float = SYMMETRY_ATOL):
    """The two closed-form families of equal-term configurations anchored at ``theta1``.

    Family one: ``theta2 = theta1 + pi/2``, ``phi1 = theta2 - pi/4``,
    ``phi2 = theta1 - pi/4``. The mirror family flips every sign.

    Raises :class:`AsymmetricState` unless ``p1 == p2`` within ``atol``.
    Whether the returned configurations beat the classical bound of 2 is
    left to the caller (``chsh_value(...).s_value``).
    """
    _require_symmetric(state, atol)
    q = math.pi / 4
    direct = BasisConfig((theta1, theta1 + 2 * q), (theta1 + q, theta1 - q))
    mirror = BasisConfig((theta1, theta1 - 2 * q), (theta1 - q, theta1 + q))
    return direct, mirror


def _chsh_scalar(x: float, y: float, v) -> float:
    t1, t2, f1, f2 = v
    return (
        x * (math.cos(t1 - f1) + math.cos(t1 - f2) + math.cos(t2 - f1) - math.cos(t2 - f2))
        + y * (math.cos(t1 + f1) + math.cos(t1 + f2) + math.cos(t2 + f1) - math.cos(t2 + f2))
    )


def _grid_search(x: float, y: float, step: float):
    grid = np.arange(-math.pi + step, math.pi + step / 2, step)
    e = x * np.cos(grid[:, None] - grid[None, :]) + y * np.cos(grid[:, None] + grid[None, :])
    # For fixed Alice angles, Bob's two angles separate:
    # B1 maximizes E(t1,.) + E(t2,.), B2 maximizes E(t1,.) - E(t2,.).
    plus = e[:, None, :] + e[None, :, :]
    minus = e[:, None, :] - e[None, :, :]
    total = plus.max(axis=-1) + minus.max(axis=-1)
    i, j = np.unravel_index(np.argmax(total), total.shape)
    return np.array([grid[i], grid[j], grid[np.argmax(plus[i, j])], grid[np.argmax(minus[i, j])]])


def maximize_chsh(state: BellDiagonalState, step: float = math.pi / 60, tol: float = 1e-10,
                  max_sweeps: int = 10_000):
    """Global maximum of the CHSH value over in-plane measurement angles.

    A full grid at spacing ``step`` (Bob's angles are maximized separately for
    each Alice pair, which is equivalent to the 4-d grid) followed by exact
    coordinate ascent until no angle moves by more than ``tol``.

    Returns ``(s_max, cfg)``.
    """
    x = state.phi_plus - state.psi_minus
    y = state.phi_minus - state.psi_plus
    v = _ascend(x, y, _grid_search(x, y, step), tol, max_sweeps)
    cfg = BasisConfig((v[0], v[1]), (v[2], v[3]))
    return _chsh_scalar(x, y, cfg.as_array()), cfg


def _ascend(x: float, y: float, v: np.ndarray, tol: float, max_sweeps: int) -> np.ndarray:
    # S restricted to one angle is A cos + B sin + C, so each update is exact.
    v = [float(t) for t in v]
    for _ in range(max_sweeps):
        moved = 0.0
        for k in range(4):
            old = v[k]
            vals = []
            for probe in (0.0, math.pi / 2, math.pi):
                v[k] = probe
                vals.append(_chsh_scalar(x, y, v))
            f0, f1, f2 = vals
            c = 0.5 * (f0 + f2)
            a, b = 0.5 * (f0 - f2), f1 - c
            v[k] = math.atan2(b, a) if math.hypot(a, b) > 0 else old
            moved = max(moved, abs(math.remainder(v[k] - old, 2 * math.pi)))
        if moved < tol:
            break
    return np.array(v)


def qber(state: BellDiagonalState, misalignment: float = 0.0) -> float:
    """Error rate of matched bases misaligned by ``misalignment`` radians.

    ``Q = (1 - (1 - p - p3) cos(misalignment)) / 2``; needs ``p1 == p2``.
    """
    _require_symmetric(state)
    if misalignment == 0:
        return state.p1 + state.p3
    return 0.5 * (1 - (1 - state.p - state.p3) * math.cos(misalignment))


def angle_relation_residuals(cfg: BasisConfig) -> np.ndarray:
    """The two angle-only relations obtained by eliminating the state from the
    half-angle form of the equal-term conditions."""
    (t1, t2), (f1, f2) = cfg.alice, cfg.bob
    return np.array([
        math.sin(t1 + t2) + math.sin(t1 - t2) * math.cos(f1 + f2),
        math.sin(f1 + f2) + math.sin(f1 - f2) * math.cos(t1 + t2),
    ])


def angle_relation_points(n_grid: int = 100):
    """Enumerate configurations with ``angle_relation_residuals(cfg) == 0``.

    ``(theta1, theta2)`` run over an ``n_grid x n_grid`` grid; for each pair
    the relations fix ``cos(phi1 + phi2)`` and then ``sin(phi1 - phi2)``,
    giving up to eight branches (including the overall shift of Bob's angles
    by pi).
    """
    grid = np.linspace(-math.pi, math.pi, n_grid + 1)[1:]
    for t1 in grid:
        for t2 in grid:
            d = math.sin(t1 - t2)
            ct = math.cos(t1 + t2)
            if abs(d) < 1e-12 or abs(ct) < 1e-12:
                continue
            cu = -math.sin(t1 + t2) / d
            if abs(cu) > 1:
                continue
            for u in {math.acos(cu), -math.acos(cu)}:
                sv = -math.sin(u) / ct
                if abs(sv) > 1:
                    continue
                for v in {math.asin(sv), math.pi - math.asin(sv)}:
                    for shift in (0.0, math.pi):
                        yield BasisConfig((t1, t2), ((u + v) / 2 + shift, (u - v) / 2 + shift))


def max_chsh_on_angle_relations(n_grid: int = 100):
    """Largest CHSH value reachable by any Bell-diagonal state at a configuration
    satisfying :func:`angle_relation_residuals` ``== 0``.

    For fixed angles S is linear in ``(1 - p - p3, p1 - p2)``, whose range is
    the diamond ``|x| + |y| <= 1``, so the state maximum is
    ``max(|S_minus|, |S_plus|)`` with the pure ``cos(a -/+ b)`` parts.

    Returns ``(s_max, cfg, n_points)``.
    """
    best, best_cfg, n = -math.inf, None, 0
    for cfg in angle_relation_points(n_grid):
        n += 1
        v = cfg.as_array()
        s = max(abs(_chsh_scalar(1.0, 0.0, v)), abs(_chsh_scalar(0.0, 1.0, v)))
        if s > best:
            best, best_cfg = s, cfg
    return best, best_cfg, n
