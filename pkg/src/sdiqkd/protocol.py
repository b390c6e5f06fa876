"""Monte Carlo run of the symmetric four-basis protocol.

Each round Alice and Bob independently pick one of four bases (uniformly),
measure their half of the source state, and record a ±1 outcome. After all
rounds the bases are announced, the records are shuffled and sifted:

* matched bases (``alice_basis == bob_basis``) form the key set; a fraction
  of it (``qber_sample_fraction``) is published to estimate the QBER,
* Alice in {1, 3} with Bob in {2, 4} estimates S,
* Alice in {2, 4} with Bob in {1, 3} estimates S',
* every other combination is discarded.

Outcome ``+1`` maps to key bit 0 and ``-1`` to key bit 1 on both sides.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .chsh import CHSH_SIGNS, TSIRELSON
from .quantum_core import BellDiagonalState, sample_outcomes, to_density
from .security import KeyRateResult, key_rate

DEFAULT_ANGLES = (math.pi / 2, math.pi / 4, 0.0, -math.pi / 4)
BATCH_SIZE = 1 << 16
PERTURBATION_KINDS = ("none", "fixed_rotation", "per_round_jitter")


class EmptyCell(ValueError):
    """A basis pair needed by an estimator was never sampled."""


@dataclass(frozen=True)
class PerturbationModel:
    """How the devices' actual directions deviate from the nominal ones.

    ``fixed_rotation`` adds constant offsets per side. ``per_round_jitter``
    adds the offsets plus an independent uniform draw in
    ``[-jitter_halfwidth, jitter_halfwidth]`` per round and side.
    """

    kind: str = "none"
    alice_offset: float = 0.0
    bob_offset: float = 0.0
    jitter_halfwidth: float = 0.0

    def __post_init__(self):
        if self.kind not in PERTURBATION_KINDS:
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if not (0.0 <= self.jitter_halfwidth <= math.pi / 4):
            raise ValueError("jitter_halfwidth must lie in [0, pi/4]")


@dataclass(frozen=True)
class Pairing:
    """Basis indices (1-based) playing A1, A2 and B1, B2 in one CHSH estimate."""

    alice: tuple[int, int]
    bob: tuple[int, int]

    def cells(self):
        return [(a, b) for a in self.alice for b in self.bob]


# With the default angles these orderings put the minus sign of the CHSH
# layout on the pair separated by 3pi/4, so Phi+ gives S = S' = 2 sqrt 2.
S_PAIRING = Pairing(alice=(3, 1), bob=(2, 4))
S_PRIME_PAIRING = Pairing(alice=(2, 4), bob=(3, 1))


@dataclass(frozen=True)
class ProtocolConfig:
    rounds: int
    source_state: BellDiagonalState
    alice_angles: tuple[float, float, float, float] = DEFAULT_ANGLES
    bob_angles: tuple[float, float, float, float] = DEFAULT_ANGLES
    perturbation: PerturbationModel = field(default_factory=PerturbationModel)
    abort_s_min: float = 2.5
    abort_q_max: float = 0.06
    qber_sample_fraction: float = 0.5
    seed: int = 0
    s_pairing: Pairing = S_PAIRING
    s_prime_pairing: Pairing = S_PRIME_PAIRING

    def __post_init__(self):
        if int(self.rounds) < 1:
            raise ValueError("rounds must be positive")
        if len(self.alice_angles) != 4 or len(self.bob_angles) != 4:
            raise ValueError("each side needs four basis angles")
        if not (2.0 < self.abort_s_min <= TSIRELSON):
            raise ValueError("abort_s_min must lie in (2, 2*sqrt(2)]")
        if not (0.0 <= self.abort_q_max < 0.5):
            raise ValueError("abort_q_max must lie in [0, 1/2)")
        if not (0.0 < self.qber_sample_fraction <= 1.0):
            raise ValueError("qber_sample_fraction must lie in (0, 1]")
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class RoundRecord:
    round_index: int
    alice_basis: int
    bob_basis: int
    alice_bit: int
    bob_bit: int


class RoundRecords:
    """Column store of round records.

    Indexing with an integer gives a :class:`RoundRecord`; slices, masks and
    index arrays give another :class:`RoundRecords`. Optional ``alice_angle``
    and ``bob_angle`` columns hold the actual per-round directions when the
    simulator runs in diagnostic mode.
    """

    columns = ("round_index", "alice_basis", "bob_basis", "alice_bit", "bob_bit")

    def __init__(self, round_index, alice_basis, bob_basis, alice_bit, bob_bit,
                 alice_angle=None, bob_angle=None):
        self.round_index = np.asarray(round_index, dtype=np.int64)
        self.alice_basis = np.asarray(alice_basis, dtype=np.int8)
        self.bob_basis = np.asarray(bob_basis, dtype=np.int8)
        self.alice_bit = np.asarray(alice_bit, dtype=np.int8)
        self.bob_bit = np.asarray(bob_bit, dtype=np.int8)
        self.alice_angle = None if alice_angle is None else np.asarray(alice_angle, dtype=float)
        self.bob_angle = None if bob_angle is None else np.asarray(bob_angle, dtype=float)
        n = len(self.round_index)
        if any(len(getattr(self, c)) != n for c in self.columns):
            raise ValueError("record columns differ in length")
        for c in ("alice_basis", "bob_basis"):
            col = getattr(self, c)
            if n and (col.min() < 1 or col.max() > 4):
                raise ValueError(f"{c} outside 1..4")
        for c in ("alice_bit", "bob_bit"):
            if not np.all(np.abs(getattr(self, c)) == 1):
                raise ValueError(f"{c} must be ±1")

    @classmethod
    def from_records(cls, records: Sequence[RoundRecord]) -> "RoundRecords":
        cols = [[getattr(r, c) for r in records] for c in cls.columns]
        return cls(*cols)

    @property
    def has_angles(self) -> bool:
        return self.alice_angle is not None and self.bob_angle is not None

    def __len__(self):
        return len(self.round_index)

    def __getitem__(self, key):
        if isinstance(key, (int, np.integer)):
            return RoundRecord(*(int(getattr(self, c)[key]) for c in self.columns))
        return self.take(key)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other):
        if not isinstance(other, RoundRecords):
            return NotImplemented
        return all(np.array_equal(getattr(self, c), getattr(other, c)) for c in self.columns)

    def __repr__(self):
        return f"RoundRecords(n={len(self)})"

    def take(self, idx) -> "RoundRecords":
        cols = [getattr(self, c)[idx] for c in self.columns]
        angles = [None if a is None else a[idx] for a in (self.alice_angle, self.bob_angle)]
        return RoundRecords(*cols, *angles)

    def key_bits(self):
        """Bits of both sides under the mapping +1 -> 0, -1 -> 1."""
        return (self.alice_bit < 0).astype(np.uint8), (self.bob_bit < 0).astype(np.uint8)

    def counts_by_basis_pair(self) -> np.ndarray:
        table = np.zeros((4, 4), dtype=np.int64)
        np.add.at(table, (self.alice_basis - 1, self.bob_basis - 1), 1)
        return table

    def to_csv(self, fh):
        fh.write("round,alice_basis,bob_basis,alice_bit,bob_bit\n")
        rows = np.column_stack([getattr(self, c).astype(np.int64) for c in self.columns])
        np.savetxt(fh, rows, fmt="%d", delimiter=",")

    @classmethod
    def read_csv(cls, fh) -> "RoundRecords":
        header = fh.readline().strip()
        if header != "round,alice_basis,bob_basis,alice_bit,bob_bit":
            raise ValueError(f"unexpected records header {header!r}")
        data = np.loadtxt(fh, delimiter=",", dtype=np.int64, ndmin=2)
        if data.size == 0:
            return cls(*([],) * 5)
        return cls(*data.T)


class Sifted(NamedTuple):
    key: RoundRecords
    test_s: RoundRecords
    test_s_prime: RoundRecords
    discard: RoundRecords


class Estimate(NamedTuple):
    value: float
    stderr: float


@dataclass(frozen=True)
class ProtocolStats:
    n_rounds: int
    n_key: int
    n_test: int
    s_hat: float | None
    stderr_s: float | None
    s_prime_hat: float | None
    stderr_s_prime: float | None
    q_hat: float | None
    stderr_q: float | None
    aborted: bool
    abort_reason: str | None
    rate: KeyRateResult | None
    counts_by_basis_pair: tuple[tuple[int, ...], ...]


def _batch_rng(seed: int, batch: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(0, batch))))


def _aux_rng(seed: int, purpose: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(1, purpose))))


def _device_angles(nominal, basis, offset, pert: PerturbationModel, rng):
    angles = np.asarray(nominal, dtype=float)[basis - 1]
    if pert.kind != "none":
        angles = angles + offset
    if pert.kind == "per_round_jitter" and pert.jitter_halfwidth > 0:
        angles = angles + rng.uniform(-pert.jitter_halfwidth, pert.jitter_halfwidth, size=len(basis))
    return angles


def _simulate_batch(cfg: ProtocolConfig, rho: np.ndarray, batch: int):
    start = batch * BATCH_SIZE
    n = min(BATCH_SIZE, cfg.rounds - start)
    rng = _batch_rng(cfg.seed, batch)
    pert = cfg.perturbation
    a_basis = rng.integers(1, 5, size=n)
    b_basis = rng.integers(1, 5, size=n)
    a_ang = _device_angles(cfg.alice_angles, a_basis, pert.alice_offset, pert, rng)
    b_ang = _device_angles(cfg.bob_angles, b_basis, pert.bob_offset, pert, rng)
    a_bit, b_bit = sample_outcomes(rho, a_ang, b_ang, rng)
    return np.arange(start, start + n), a_basis, b_basis, a_bit, b_bit, a_ang, b_ang


def simulate_rounds(cfg: ProtocolConfig, workers: int = 1, record_angles: bool = False) -> RoundRecords:
    """Steps 1-3: distribute, measure and announce bases, in round order.

    Rounds are generated in fixed-size batches, each from its own stream
    derived from ``cfg.seed`` and the batch index, so the output does not
    depend on ``workers``.
    """
    rho = to_density(cfg.source_state)
    n_batches = -(-cfg.rounds // BATCH_SIZE)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda b: _simulate_batch(cfg, rho, b), range(n_batches)))
    else:
        parts = [_simulate_batch(cfg, rho, b) for b in range(n_batches)]
    cols = [np.concatenate(c) for c in zip(*parts)]
    if not record_angles:
        cols = cols[:5]
    return RoundRecords(*cols)


def shuffle_records(records, rng: np.random.Generator):
    """Uniformly random permutation of the records (a new object)."""
    perm = rng.permutation(len(records))
    if isinstance(records, RoundRecords):
        return records.take(perm)
    return [records[i] for i in perm]


def sift(records: RoundRecords) -> Sifted:
    a, b = records.alice_basis, records.bob_basis
    a_odd = (a == 1) | (a == 3)
    b_odd = (b == 1) | (b == 3)
    key = a == b
    test_s = a_odd & ~b_odd
    test_sp = ~a_odd & b_odd
    discard = ~(key | test_s | test_sp)
    return Sifted(*(records.take(m) for m in (key, test_s, test_sp, discard)))


def cell_correlators(test_set: RoundRecords, pairing: Pairing):
    """Signed per-cell correlators and counts in CHSH term order."""
    prod = test_set.alice_bit.astype(np.int64) * test_set.bob_bit
    terms, counts = [], []
    for sign, (ai, bj) in zip(CHSH_SIGNS, pairing.cells()):
        mask = (test_set.alice_basis == ai) & (test_set.bob_basis == bj)
        n = int(mask.sum())
        if n == 0:
            raise EmptyCell(f"no rounds with Alice basis {ai} and Bob basis {bj}")
        terms.append(sign * prod[mask].mean())
        counts.append(n)
    return np.array(terms), np.array(counts)


def estimate_chsh(test_set: RoundRecords, pairing: Pairing) -> Estimate:
    """Plug-in CHSH estimate with independent-cell standard error.

    Each cell's products are ±1, so their variance is ``1 - E^2``.
    """
    terms, counts = cell_correlators(test_set, pairing)
    stderr = math.sqrt(float(np.sum((1.0 - terms**2) / counts)))
    return Estimate(float(math.fsum(terms)), stderr)


def estimate_qber(key_set: RoundRecords) -> Estimate:
    n = len(key_set)
    if n == 0:
        raise ValueError("cannot estimate QBER from an empty key set")
    q = float(np.mean(key_set.alice_bit != key_set.bob_bit))
    return Estimate(q, math.sqrt(q * (1 - q) / n))


class EquivalentOperations(NamedTuple):
    alice_mean: np.ndarray
    bob_mean: np.ndarray
    alice_stderr: np.ndarray
    bob_stderr: np.ndarray


def _circular_stats(angles: np.ndarray):
    c, s = np.cos(angles).mean(), np.sin(angles).mean()
    mean = math.atan2(s, c)
    r = min(math.hypot(c, s), 1.0)
    spread = math.sqrt(max(-2.0 * math.log(r), 0.0)) if r > 0 else math.inf
    return mean, spread / math.sqrt(len(angles))


def equivalent_operations(records: RoundRecords, angles=None) -> EquivalentOperations:
    """Circular mean of the actual direction used for each basis index.

    ``angles`` is an ``(alice, bob)`` pair of per-round arrays; by default the
    diagnostic columns stored on ``records`` are used. Bases that never
    occur give ``nan``.
    """
    if angles is None:
        if not records.has_angles:
            raise ValueError("records carry no angle log; simulate with record_angles=True")
        angles = (records.alice_angle, records.bob_angle)
    out = []
    for basis, ang in ((records.alice_basis, angles[0]), (records.bob_basis, angles[1])):
        means, errs = np.full(4, np.nan), np.full(4, np.nan)
        for k in range(4):
            sel = ang[basis == k + 1]
            if len(sel):
                means[k], errs[k] = _circular_stats(sel)
        out.append((means, errs))
    return EquivalentOperations(out[0][0], out[1][0], out[0][1], out[1][1])


def run_protocol(cfg: ProtocolConfig, workers: int = 1, record_angles: bool = False):
    """Simulate, shuffle, sift, estimate and decide; returns ``(records, stats)``.

    ``records`` are in the shuffled order both parties agree on. The stats
    abort when an estimator cell is empty, when ``s_hat + 2 stderr`` is below
    ``abort_s_min`` or when ``q_hat - 2 stderr`` exceeds ``abort_q_max``.
    """
    records = simulate_rounds(cfg, workers=workers, record_angles=record_angles)
    records = shuffle_records(records, _aux_rng(cfg.seed, 0))
    sets = sift(records)
    n_pub = max(1, int(round(cfg.qber_sample_fraction * len(sets.key)))) if len(sets.key) else 0
    published, kept = sets.key.take(slice(0, n_pub)), sets.key.take(slice(n_pub, None))

    s = sp = q = None
    reason = None
    try:
        s = estimate_chsh(sets.test_s, cfg.s_pairing)
        sp = estimate_chsh(sets.test_s_prime, cfg.s_prime_pairing)
        q = estimate_qber(published)
    except ValueError as exc:
        reason = f"estimation failed: {exc}"
    if reason is None:
        if s.value + 2 * s.stderr < cfg.abort_s_min:
            reason = f"S estimate {s.value:.6g} below {cfg.abort_s_min:g}"
        elif q.value - 2 * q.stderr > cfg.abort_q_max:
            reason = f"QBER estimate {q.value:.6g} above {cfg.abort_q_max:g}"
    aborted = reason is not None
    rate = None if aborted else key_rate(min(max(s.value, 0.0), TSIRELSON))

    stats = ProtocolStats(
        n_rounds=cfg.rounds,
        n_key=len(kept),
        n_test=len(published) + len(sets.test_s) + len(sets.test_s_prime),
        s_hat=None if s is None else s.value,
        stderr_s=None if s is None else s.stderr,
        s_prime_hat=None if sp is None else sp.value,
        stderr_s_prime=None if sp is None else sp.stderr,
        q_hat=None if q is None else q.value,
        stderr_q=None if q is None else q.stderr,
        aborted=aborted,
        abort_reason=reason,
        rate=rate,
        counts_by_basis_pair=tuple(tuple(int(x) for x in row) for row in records.counts_by_basis_pair()),
    )
    return records, stats
