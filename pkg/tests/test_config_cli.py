import csv
import io
import json
import math

import pytest

from sdiqkd import cli
from sdiqkd.config import ConfigError, config_from_dict, fmt, load_config
from sdiqkd.verify import RUNNERS, SuiteResult, decode_matrix, encode_matrix


def _write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(doc if isinstance(doc, str) else json.dumps(doc, indent=2))
    return p


def run(argv, capsys):
    try:
        code = cli.main([str(a) for a in argv])
    except SystemExit as exc:
        code = exc.code
    out, err = capsys.readouterr()
    return code, out, err


PHI_DOC = {"rounds": 100_000, "source_state": {"weights": [1, 0, 0, 0]}, "seed": 3}


class TestConfig:
    def test_sources(self):
        assert config_from_dict({"rounds": 1, "source_state": {"optimal_q": 0.2}}).source_state.p3 == \
            pytest.approx(0.01)
        w = config_from_dict({"rounds": 1, "source_state": {"werner_visibility": 0.0}}).source_state
        assert w.weights.tolist() == pytest.approx([0.25] * 4)

    def test_schema_error_has_line(self, tmp_path):
        text = '{\n  "rounds": 10,\n  "source_state": {"weights": [1, 0, 0, 0]},\n  "abort_q_max": 0.7\n}\n'
        with pytest.raises(ConfigError, match=r"cfg\.json:4: \$\.abort_q_max"):
            load_config(_write(tmp_path, text))

    def test_invalid_json(self, tmp_path):
        with pytest.raises(ConfigError, match=r"cfg\.json:2:\d+: invalid JSON"):
            load_config(_write(tmp_path, '{\n  "rounds": ,\n}'))

    def test_two_sources_rejected(self):
        with pytest.raises(Exception):
            config_from_dict({"rounds": 1, "source_state": {"optimal_q": 0.1, "werner_visibility": 1}})

    def test_weights_must_sum_to_one(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(_write(tmp_path, {"rounds": 1, "source_state": {"weights": [0.5, 0.5, 0.5, 0]}}))


def test_fmt_twelve_digits():
    assert fmt(math.pi) == "3.14159265359"
    assert fmt(2 * math.sqrt(2)) == "2.82842712475"


class TestSimulate:
    def test_phi_plus(self, tmp_path, capsys):
        code, out, _ = run(["simulate", "--config", _write(tmp_path, PHI_DOC)], capsys)
        doc = json.loads(out)
        assert code == 0 and doc["aborted"] is False
        assert abs(doc["s_hat"] - 2.828) < 0.05
        for key in ("s_hat", "s_prime_hat", "q_hat", "stderr_s", "stderr_s_prime", "stderr_q", "aborted", "rate"):
            assert key in doc

    def test_maximally_mixed_exit_2(self, tmp_path, capsys):
        cfg = {"rounds": 20_000, "source_state": {"weights": [0.25] * 4}}
        code, out, _ = run(["simulate", "--config", _write(tmp_path, cfg)], capsys)
        assert code == 2 and json.loads(out)["aborted"] is True and json.loads(out)["rate"] is None

    def test_missing_file_exit_1(self, tmp_path, capsys):
        code, _, err = run(["simulate", "--config", tmp_path / "nope.json"], capsys)
        assert code == 1 and "cannot read config" in err

    def test_byte_identical(self, tmp_path, capsys):
        cfg = _write(tmp_path, PHI_DOC)
        outs = []
        for k in range(2):
            o, r = tmp_path / f"o{k}.json", tmp_path / f"r{k}.csv"
            assert run(["simulate", "--config", cfg, "--out", o, "--records", r], capsys)[0] == 0
            outs.append((o.read_bytes(), r.read_bytes()))
        assert outs[0] == outs[1]

    def test_seed_override_and_csv(self, tmp_path, capsys):
        cfg = _write(tmp_path, PHI_DOC)
        _, a, _ = run(["simulate", "--config", cfg, "--format", "csv", "--seed", 1], capsys)
        _, b, _ = run(["simulate", "--config", cfg, "--format", "csv", "--seed", 2], capsys)
        assert a != b
        assert list(csv.DictReader(io.StringIO(a)))[0]["aborted"] == "False"


class TestKeyrateCurve:
    def test_curve(self, capsys):
        code, out, _ = run(["keyrate-curve", "--steps", 100], capsys)
        rows = list(csv.DictReader(io.StringIO(out)))
        assert code == 0 and len(rows) == 102
        assert float(rows[-1]["S"]) == pytest.approx(2 * math.sqrt(2)) and float(rows[-1]["r"]) == 1
        r = [float(x["r"]) for x in rows]
        assert all(b >= a for a, b in zip(r, r[1:]))
        thr = [x for x in rows if x["threshold"] == "true"]
        assert len(thr) == 1 and abs(float(thr[0]["r"])) < 1e-8

    def test_q_range(self, capsys):
        code, out, _ = run(["keyrate-curve", "--q-range", 0, 0.05, "--steps", 5, "--format", "json"], capsys)
        rows = json.loads(out)
        assert code == 0 and min(r["Q"] for r in rows) == 0

    @pytest.mark.parametrize("argv", [["--s-range", 1.5, 2.5], ["--s-range", 2.5, 2.4], ["--steps", 0],
                                      ["--q-range", 0, 0.2]])
    def test_bad_range(self, argv, capsys):
        assert run(["keyrate-curve", *argv], capsys)[0] == 1


class TestOptimalEve:
    def test_q(self, capsys):
        code, out, _ = run(["optimal-eve", "--q", 0.3], capsys)
        doc = json.loads(out)
        assert code == 0 and doc["p3"] == 0.0225 and abs(doc["numeric_delta_p3"]) < 1e-6

    def test_zero(self, capsys):
        for argv in (["--q", 0], ["--s", 2 * math.sqrt(2)]):
            doc = json.loads(run(["optimal-eve", *argv], capsys)[1])
            assert doc["weights"] == [1, 0, 0, 0] and doc["q"] == 0

    def test_errors(self, capsys):
        assert run(["optimal-eve"], capsys)[0] == 1
        assert run(["optimal-eve", "--q", 1.5], capsys)[0] == 1
        assert run(["optimal-eve", "--q", 0.1, "--s", 2.5], capsys)[0] == 1


class TestAngles:
    def test_symmetric(self, capsys):
        code, out, _ = run(["angles", "--weights", 0.9, 0.04, 0.04, 0.02, "--theta1", math.pi / 2], capsys)
        rows = list(csv.DictReader(io.StringIO(out)))
        assert code == 0 and [r["family"] for r in rows] == ["direct", "mirror"]
        assert float(rows[0]["theta2"]) == pytest.approx(math.pi)
        assert all(abs(float(r[f"residual{k}"])) <= 1e-9 for r in rows for k in range(1, 5))

    def test_asymmetric_exit_1(self, capsys):
        code, _, err = run(["angles", "--weights", 0.9, 0.06, 0.02, 0.02], capsys)
        assert code == 1 and "p1 == p2" in err


class TestVerify:
    def test_suites_pass(self, capsys):
        code, out, _ = run(["verify", "--suite", "correlator", "--trials", 500], capsys)
        assert code == 0 and out.startswith("PASS correlator")

    def test_violation_exit_3(self, monkeypatch, capsys):
        fake = SuiteResult("correlator", 1, 1.0, 1e-12, {"suite": "correlator", "a": 0.5})
        monkeypatch.setitem(RUNNERS, "correlator", lambda trials, seed: fake)
        code, out, err = run(["verify", "--suite", "correlator"], capsys)
        assert code == 3 and "FAIL" in out and json.loads(err)["a"] == 0.5

    def test_unknown_suite_exit_1(self, capsys):
        assert run(["verify", "--suite", "nope"], capsys)[0] == 1


def test_matrix_encoding_is_exact(rng):
    m = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    assert (decode_matrix(json.loads(json.dumps(encode_matrix(m)))) == m).all()


@pytest.mark.parametrize("argv", [[], ["bogus"], ["simulate", "--format", "xml"], ["verify", "--seed", "-1"]])
def test_usage_errors_exit_1(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        code = cli.main(argv)
        raise SystemExit(code)
    assert exc.value.code == 1
