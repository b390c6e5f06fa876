"""JSON config loading and fixed-format output for the simulator.

Config document (all keys except ``rounds`` and ``source_state`` optional)::

    {
      "rounds": 100000,
      "source_state": {"weights": [1, 0, 0, 0]},   # or {"optimal_q": 0.1}
                                                   # or {"werner_visibility": 0.9}
      "alice_angles": [1.5707963267948966, 0.7853981633974483, 0, -0.7853981633974483],
      "bob_angles":   [...],
      "perturbation": {"kind": "none", "alice_offset": 0, "bob_offset": 0,
                       "jitter_halfwidth": 0},
      "abort_s_min": 2.5,
      "abort_q_max": 0.06,
      "qber_sample_fraction": 0.5,
      "seed": 0
    }
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import jsonschema

from .protocol import PERTURBATION_KINDS, PerturbationModel, ProtocolConfig, ProtocolStats
from .quantum_core import BellDiagonalState
from .security import optimal_eve_state

SIG_DIGITS = 12

_NUM = {"type": "number"}
_ANGLES = {"type": "array", "items": _NUM, "minItems": 4, "maxItems": 4}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["rounds", "source_state"],
    "properties": {
        "rounds": {"type": "integer", "minimum": 1},
        "source_state": {
            "type": "object",
            "additionalProperties": False,
            "minProperties": 1,
            "maxProperties": 1,
            "properties": {
                "weights": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1},
                            "minItems": 4, "maxItems": 4},
                "optimal_q": {"type": "number", "minimum": 0, "maximum": 1},
                "werner_visibility": {"type": "number", "minimum": 0, "maximum": 1},
            },
        },
        "alice_angles": _ANGLES,
        "bob_angles": _ANGLES,
        "perturbation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": list(PERTURBATION_KINDS)},
                "alice_offset": _NUM,
                "bob_offset": _NUM,
                "jitter_halfwidth": {"type": "number", "minimum": 0, "maximum": math.pi / 4},
            },
        },
        "abort_s_min": {"type": "number", "exclusiveMinimum": 2, "maximum": 2 * math.sqrt(2)},
        "abort_q_max": {"type": "number", "minimum": 0, "exclusiveMaximum": 0.5},
        "qber_sample_fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
    },
}


class ConfigError(ValueError):
    pass


def _line_of(text: str, path) -> int:
    """Best-effort line number for a JSON path: the first line naming its last key."""
    keys = [p for p in path if isinstance(p, str)]
    if not keys:
        return 1
    needle = json.dumps(keys[-1])
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return i
    return 1


def _source_state(spec: dict) -> BellDiagonalState:
    if "weights" in spec:
        return BellDiagonalState.from_weights(spec["weights"])
    if "optimal_q" in spec:
        return optimal_eve_state(spec["optimal_q"]).state
    return BellDiagonalState.werner(spec["werner_visibility"])


def config_from_dict(doc: dict) -> ProtocolConfig:
    jsonschema.validate(doc, CONFIG_SCHEMA)
    kwargs = {k: v for k, v in doc.items() if k not in ("source_state", "perturbation")}
    for k in ("alice_angles", "bob_angles"):
        if k in kwargs:
            kwargs[k] = tuple(float(t) for t in kwargs[k])
    return ProtocolConfig(
        source_state=_source_state(doc["source_state"]),
        perturbation=PerturbationModel(**doc.get("perturbation", {})),
        **kwargs,
    )


def load_config(path) -> ProtocolConfig:
    """Read and validate a config file; errors carry ``path:line:`` prefixes."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror or exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    try:
        return config_from_dict(doc)
    except jsonschema.ValidationError as exc:
        where = "$" + "".join(f"[{p!r}]" if isinstance(p, int) else f".{p}" for p in exc.absolute_path)
        line = _line_of(text, exc.absolute_path)
        raise ConfigError(f"{path}:{line}: {where}: {exc.message}") from exc
    except ValueError as exc:
        raise ConfigError(f"{path}:1: {exc}") from exc


def fmt(x) -> str:
    """Fixed 12-significant-digit rendering used for every numeric output."""
    return format(float(x), f".{SIG_DIGITS}g")


def _rounded(obj):
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, float):
        return float(fmt(obj))
    if isinstance(obj, dict):
        return {k: _rounded(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_rounded(v) for v in obj]
    return _rounded(float(obj))


def stats_to_dict(stats: ProtocolStats) -> dict:
    rate = None
    if stats.rate is not None:
        rate = {
            "s_value": stats.rate.s_value,
            "q": stats.rate.q,
            "qber": stats.rate.qber,
            "holevo_bound_bits": stats.rate.holevo_bound_bits,
            "rate_bits_per_sifted_bit": stats.rate.rate_bits_per_sifted_bit,
        }
    return {
        "n_rounds": stats.n_rounds,
        "n_key": stats.n_key,
        "n_test": stats.n_test,
        "s_hat": stats.s_hat,
        "stderr_s": stats.stderr_s,
        "s_prime_hat": stats.s_prime_hat,
        "stderr_s_prime": stats.stderr_s_prime,
        "q_hat": stats.q_hat,
        "stderr_q": stats.stderr_q,
        "aborted": stats.aborted,
        "abort_reason": stats.abort_reason,
        "rate": rate,
        "counts_by_basis_pair": [list(r) for r in stats.counts_by_basis_pair],
    }


def dumps(obj) -> str:
    return json.dumps(_rounded(obj), indent=2) + "\n"
