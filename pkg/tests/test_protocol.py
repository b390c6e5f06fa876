import io
import itertools
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats as sps

from oracles import TSIRELSON
from sdiqkd.protocol import (
    DEFAULT_ANGLES,
    S_PAIRING,
    S_PRIME_PAIRING,
    EmptyCell,
    PerturbationModel,
    ProtocolConfig,
    RoundRecord,
    RoundRecords,
    cell_correlators,
    equivalent_operations,
    estimate_chsh,
    estimate_qber,
    run_protocol,
    shuffle_records,
    sift,
    simulate_rounds,
)
from sdiqkd.quantum_core import BellDiagonalState
from sdiqkd.security import optimal_eve_state

PHI = BellDiagonalState(1, 0, 0, 0)


def _records(pairs, bits=None):
    n = len(pairs)
    a, b = zip(*pairs) if n else ((), ())
    ab, bb = bits if bits is not None else (np.ones(n), np.ones(n))
    return RoundRecords(np.arange(n), a, b, ab, bb)


def _cfg(state, rounds=10**5, **kw):
    return ProtocolConfig(rounds=rounds, source_state=state, **kw)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            _cfg(PHI, rounds=0)
        with pytest.raises(ValueError):
            _cfg(PHI, abort_s_min=2.0)
        with pytest.raises(ValueError):
            _cfg(PHI, abort_q_max=0.5)
        with pytest.raises(ValueError):
            _cfg(PHI, seed=2**64)
        with pytest.raises(ValueError):
            PerturbationModel("per_round_jitter", jitter_halfwidth=1.0)
        with pytest.raises(ValueError):
            PerturbationModel("sideways")

    def test_records_validation(self):
        with pytest.raises(ValueError):
            _records([(0, 1)])
        with pytest.raises(ValueError):
            _records([(1, 1)], (np.array([0]), np.array([1])))


def test_shuffle_examples():
    rec = [RoundRecord(0, 1, 1, 1, 1)]
    assert shuffle_records(rec, np.random.default_rng(1)) == rec
    recs = _records([(1, 2), (2, 3), (3, 4), (4, 1)])
    a = shuffle_records(recs, np.random.default_rng(7))
    b = shuffle_records(recs, np.random.default_rng(7))
    assert a == b
    assert sorted(a.round_index.tolist()) == [0, 1, 2, 3]


def test_shuffle_uniform_chi_square():
    rng = np.random.default_rng(11)
    perms = {p: i for i, p in enumerate(itertools.permutations(range(4)))}
    counts = np.zeros(len(perms))
    items = list(range(4))
    for _ in range(10**5):
        counts[perms[tuple(shuffle_records(items, rng))]] += 1
    assert sps.chisquare(counts).pvalue > 0.001


def test_sift_examples():
    sets = sift(_records([(1, 1)] * 5))
    assert len(sets.key) == 5 and len(sets.test_s) == len(sets.test_s_prime) == len(sets.discard) == 0
    sets = sift(_records([(1, 2), (2, 1), (1, 3)]))
    assert sets.test_s.round_index.tolist() == [0]
    assert sets.test_s_prime.round_index.tolist() == [1]
    assert sets.discard.round_index.tolist() == [2]


@given(st.lists(st.tuples(st.integers(1, 4), st.integers(1, 4)), max_size=60))
def test_sift_partitions(pairs):
    recs = _records(pairs)
    sets = sift(recs)
    idx = np.concatenate([s.round_index for s in sets])
    assert sorted(idx.tolist()) == list(range(len(pairs)))
    for r in sets.key:
        assert r.alice_basis == r.bob_basis
    for r in sets.test_s:
        assert r.alice_basis in (1, 3) and r.bob_basis in (2, 4)
    for r in sets.test_s_prime:
        assert r.alice_basis in (2, 4) and r.bob_basis in (1, 3)


def test_sift_fractions():
    recs = simulate_rounds(_cfg(PHI, seed=5))
    sets = sift(recs)
    n = len(recs)
    for part in (sets.key, sets.test_s, sets.test_s_prime):
        assert abs(len(part) / n - 0.25) < 3 * math.sqrt(0.25 * 0.75 / n)
    counts = recs.counts_by_basis_pair()
    assert sps.chisquare(counts.ravel()).pvalue > 0.001


def test_estimate_chsh_plugin():
    # cell products chosen so the four signed correlators are sqrt(2)/2 each
    rng = np.random.default_rng(3)
    n = 200_000
    e = math.sqrt(2) / 2
    cols = [[], [], [], []]
    for sign, (a, b) in zip((1, 1, 1, -1), S_PAIRING.cells()):
        prod = np.where(rng.random(n) < (1 + sign * e) / 2, 1, -1)
        cols[0] += [a] * n
        cols[1] += [b] * n
        cols[2] += [1] * n
        cols[3] += prod.tolist()
    recs = RoundRecords(np.arange(4 * n), *cols)
    terms, counts = cell_correlators(recs, S_PAIRING)
    est = estimate_chsh(recs, S_PAIRING)
    assert est.value == pytest.approx(terms.sum())
    assert est.stderr == pytest.approx(math.sqrt(np.sum((1 - terms**2) / counts)))
    assert abs(est.value - TSIRELSON) < 4 * est.stderr


def test_estimate_chsh_missing_cell():
    with pytest.raises(EmptyCell):
        estimate_chsh(_records([(3, 4), (1, 4), (1, 2)]), S_PAIRING)


def test_estimate_qber_examples():
    assert estimate_qber(_records([(1, 1)] * 4)).value == 0
    recs = _records([(1, 1)] * 4, (np.array([1, 1, -1, -1]), np.array([1, -1, 1, -1])))
    est = estimate_qber(recs)
    assert est.value == 0.5 and est.stderr == pytest.approx(0.25)
    with pytest.raises(ValueError):
        estimate_qber(_records([]))


def test_phi_plus_protocol():
    _, st_ = run_protocol(_cfg(PHI, rounds=10**6, seed=1))
    assert abs(st_.s_hat - TSIRELSON) <= 3 * st_.stderr_s
    assert st_.q_hat == 0
    assert not st_.aborted
    assert st_.rate.rate_bits_per_sifted_bit > 0.99


@pytest.mark.parametrize("q", [0.05, 0.1])
def test_optimal_state_protocol(q):
    _, st_ = run_protocol(_cfg(optimal_eve_state(q).state, rounds=10**6, seed=2))
    assert abs(st_.s_hat - TSIRELSON * (1 - q)) <= 4 * st_.stderr_s
    assert abs(st_.s_prime_hat - TSIRELSON * (1 - q)) <= 4 * st_.stderr_s_prime
    assert abs(st_.q_hat - q / 2) <= 4 * st_.stderr_q
    assert abs(st_.s_hat - st_.s_prime_hat) <= 4 * math.hypot(st_.stderr_s, st_.stderr_s_prime)
    combined = math.hypot(st_.stderr_q, st_.stderr_s / (2 * TSIRELSON))
    assert abs(st_.q_hat - (1 - st_.s_hat / TSIRELSON) / 2) <= 4 * combined


def test_per_cell_symmetry():
    recs, st_ = run_protocol(_cfg(optimal_eve_state(0.1).state, rounds=10**6, seed=9))
    sets = sift(recs)
    for test_set, pairing in ((sets.test_s, S_PAIRING), (sets.test_s_prime, S_PRIME_PAIRING)):
        terms, counts = cell_correlators(test_set, pairing)
        for t, n in zip(terms, counts):
            assert abs(t - st_.s_hat / 4) <= 4 * math.sqrt((1 - t * t) / n + st_.stderr_s**2 / 16)


def test_estimator_consistency():
    state = optimal_eve_state(0.1).state
    target = TSIRELSON * 0.9
    errors = []
    for n in (10**4, 10**5, 10**6):
        _, st_ = run_protocol(_cfg(state, rounds=n, seed=4))
        assert abs(st_.s_hat - target) <= 4 * st_.stderr_s
        errors.append(st_.stderr_s)
    assert errors[0] > errors[1] > errors[2]


def test_maximally_mixed_aborts():
    _, st_ = run_protocol(_cfg(BellDiagonalState.maximally_mixed(), abort_s_min=2.5))
    assert st_.aborted and st_.rate is None
    assert abs(st_.q_hat - 0.5) <= 3 * st_.stderr_q


def test_tiny_run_aborts_on_empty_cell():
    _, st_ = run_protocol(_cfg(PHI, rounds=3))
    assert st_.aborted and "estimation failed" in st_.abort_reason


def test_stats_invariants():
    _, st_ = run_protocol(_cfg(PHI, rounds=20_000))
    assert st_.n_key + st_.n_test <= st_.n_rounds
    assert min(st_.stderr_s, st_.stderr_s_prime, st_.stderr_q) >= 0
    assert sum(map(sum, st_.counts_by_basis_pair)) == st_.n_rounds


def test_determinism_and_workers():
    cfg = _cfg(optimal_eve_state(0.1).state, rounds=200_000, seed=123)
    r1, s1 = run_protocol(cfg)
    r2, s2 = run_protocol(cfg, workers=4)
    assert r1 == r2 and s1 == s2
    r3, _ = run_protocol(replace(cfg, seed=124))
    assert not (r1 == r3)


def test_records_csv_roundtrip():
    recs, _ = run_protocol(_cfg(PHI, rounds=1000))
    buf = io.StringIO()
    recs.to_csv(buf)
    assert buf.getvalue().splitlines()[0] == "round,alice_basis,bob_basis,alice_bit,bob_bit"
    buf.seek(0)
    assert RoundRecords.read_csv(buf) == recs


def test_equivalent_operations_no_perturbation():
    recs = simulate_rounds(_cfg(PHI, rounds=5000), record_angles=True)
    eq = equivalent_operations(recs)
    np.testing.assert_allclose(eq.alice_mean, DEFAULT_ANGLES, atol=1e-12)
    np.testing.assert_allclose(eq.bob_mean, DEFAULT_ANGLES, atol=1e-12)


def test_equivalent_operations_fixed_rotation():
    pert = PerturbationModel("fixed_rotation", alice_offset=0.05, bob_offset=-0.02)
    recs = simulate_rounds(_cfg(PHI, rounds=5000, perturbation=pert), record_angles=True)
    eq = equivalent_operations(recs)
    np.testing.assert_allclose(eq.alice_mean, np.array(DEFAULT_ANGLES) + 0.05, atol=1e-12)
    np.testing.assert_allclose(eq.bob_mean, np.array(DEFAULT_ANGLES) - 0.02, atol=1e-12)


def test_jitter_averages_out_and_depresses_s():
    pert = PerturbationModel("per_round_jitter", jitter_halfwidth=0.1)
    cfg = _cfg(PHI, rounds=10**5, perturbation=pert, seed=8)
    recs, st_ = run_protocol(cfg, record_angles=True)
    eq = equivalent_operations(recs)
    for means, errs in ((eq.alice_mean, eq.alice_stderr), (eq.bob_mean, eq.bob_stderr)):
        assert np.all(np.abs(means - DEFAULT_ANGLES) <= 3 * errs)
    _, clean = run_protocol(replace(cfg, perturbation=PerturbationModel()))
    assert st_.s_hat < clean.s_hat
