"""Command-line front end.

Exit codes: 0 success, 1 usage or input error, 2 protocol aborted,
3 property violation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import config as cfgio
from .chsh import (
    TSIRELSON,
    AsymmetricState,
    check_symmetry_equations,
    chsh_value,
    solve_symmetric_angles,
)
from .protocol import run_protocol
from .quantum_core import BellDiagonalState
from .security import (
    key_rate,
    optimal_eve_state,
    optimize_eve_numeric,
    q_from_s,
    zero_rate_threshold,
)
from .verify import RUNNERS, SUITES

EXIT_OK, EXIT_USAGE, EXIT_ABORT, EXIT_VIOLATION = 0, 1, 2, 3
fmt = cfgio.fmt


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(text: str, out_path: str | None):
    if out_path:
        with open(out_path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _table(rows: list[dict], fmt_name: str) -> str:
    if fmt_name == "json":
        return cfgio.dumps(rows)
    header = list(rows[0]) if rows else []
    return _csv([[r[k] for k in header] for r in rows], header)


def cmd_simulate(args) -> int:
    if not args.config:
        raise UsageError("simulate needs --config PATH")
    try:
        config = cfgio.load_config(args.config)
    except cfgio.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.seed is not None:
        from dataclasses import replace
        config = replace(config, seed=args.seed)
    records, stats = run_protocol(config, workers=args.workers)
    doc = cfgio.stats_to_dict(stats)
    if args.format == "json":
        text = cfgio.dumps(doc)
    else:
        flat = {k: v for k, v in doc.items() if k not in ("rate", "counts_by_basis_pair")}
        flat["rate"] = None if stats.rate is None else stats.rate.rate_bits_per_sifted_bit
        text = _table([{k: ("" if v is None else v) for k, v in flat.items()}], "csv")
    _emit(text, args.out)
    if args.records:
        with open(args.records, "w", newline="") as fh:
            records.to_csv(fh)
    return EXIT_ABORT if stats.aborted else EXIT_OK


def _range(pair, lo, hi, what):
    a, b = (lo, hi) if pair is None else pair
    if not (lo - 1e-12 <= a < b <= hi + 1e-12):
        raise UsageError(f"{what} range must satisfy {fmt(lo)} <= low < high <= {fmt(hi)}")
    return min(max(a, lo), hi), min(max(b, lo), hi)


def keyrate_rows(s_values):
    rows = []
    for s in s_values:
        r = key_rate(s)
        rows.append({"S": r.s_value, "Q": r.qber, "E": r.holevo_bound_bits,
                     "r": r.rate_bits_per_sifted_bit, "threshold": "false"})
    return rows


def cmd_keyrate_curve(args) -> int:
    if args.steps < 1:
        raise UsageError("--steps must be positive")
    s_star, q_star = zero_rate_threshold()
    if args.q_range is not None:
        if args.s_range is not None:
            raise UsageError("give either --s-range or --q-range, not both")
        q_lo, q_hi = _range(args.q_range, 0.0, q_star, "Q")
        s_lo, s_hi = TSIRELSON * (1 - 2 * q_hi), TSIRELSON * (1 - 2 * q_lo)
    else:
        s_lo, s_hi = _range(args.s_range, 2.0, TSIRELSON, "S")
    grid = [s_lo + (s_hi - s_lo) * k / args.steps for k in range(args.steps)] + [s_hi]
    rows = keyrate_rows(grid)
    thr = keyrate_rows([s_star])[0]
    thr["threshold"] = "true"
    rows.append(thr)
    rows.sort(key=lambda r: (r["S"], r["threshold"]))
    _emit(_table(rows, args.format), args.out)
    return EXIT_OK


def cmd_optimal_eve(args) -> int:
    if (args.q is None) == (args.s is None):
        raise UsageError("give exactly one of --q or --s")
    try:
        q = q_from_s(args.s) if args.s is not None else args.q
        opt = optimal_eve_state(q)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    p3_num, h_num = optimize_eve_numeric(q)
    doc = {
        "q": opt.q,
        "s": TSIRELSON * (1 - opt.q),
        "p1": opt.p1,
        "p3": opt.p3,
        "weights": opt.state.weights.tolist(),
        "entropy_bits": opt.entropy_bits,
        "numeric_p3": p3_num,
        "numeric_delta_p3": p3_num - opt.p3,
        "numeric_delta_entropy": h_num - opt.entropy_bits,
    }
    if args.format == "json":
        text = cfgio.dumps(doc)
    else:
        flat = {k: v for k, v in doc.items() if k != "weights"}
        for label, w in zip(("w_phi_plus", "w_phi_minus", "w_psi_plus", "w_psi_minus"), doc["weights"]):
            flat[label] = w
        text = _table([flat], "csv")
    _emit(text, args.out)
    return EXIT_OK


def _state_from_args(args) -> BellDiagonalState:
    if args.weights is not None and args.q is not None:
        raise UsageError("give either --weights or --q, not both")
    try:
        if args.weights is not None:
            return BellDiagonalState.from_weights(args.weights)
        if args.q is not None:
            return optimal_eve_state(args.q).state
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    raise UsageError("angles needs --weights W W W W or --q X")


def cmd_angles(args) -> int:
    state = _state_from_args(args)
    theta1 = 0.0 if args.theta1 is None else args.theta1
    try:
        families = solve_symmetric_angles(state, theta1)
    except AsymmetricState as exc:
        print(f"error: {exc}. The closed-form equal-term families exist only for "
              "p1 == p2 (Phi- and Psi+ weights equal).", file=sys.stderr)
        return EXIT_USAGE
    rows = []
    worst = 0.0
    for name, cfg in zip(("direct", "mirror"), families):
        rep = chsh_value(state, cfg)
        res = check_symmetry_equations(state, cfg)
        worst = max(worst, float(np.max(np.abs(res))))
        rows.append({
            "family": name,
            "theta1": cfg.alice[0], "theta2": cfg.alice[1],
            "phi1": cfg.bob[0], "phi2": cfg.bob[1],
            "S": rep.s_value,
            "violates_classical": "true" if rep.s_value > 2 else "false",
            **{f"residual{i + 1}": float(r) for i, r in enumerate(res)},
        })
    _emit(_table(rows, args.format), args.out)
    return EXIT_VIOLATION if worst > 1e-9 else EXIT_OK


def cmd_verify(args) -> int:
    names = SUITES if args.suite == "all" else (args.suite,)
    seed = 0 if args.seed is None else args.seed
    results = []
    for name in names:
        trials = args.trials if args.trials is not None else (101 if name == "optimum" else 1000)
        results.append(RUNNERS[name](trials, seed))
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.name}: trials={r.trials} max_violation={fmt(r.max_violation)} "
              f"tolerance={fmt(r.tolerance)}")
    failed = [r for r in results if not r.passed]
    if failed:
        text = json.dumps(failed[0].counterexample, indent=2, default=float) + "\n"
        if args.out:
            _emit(text, args.out)
            print(f"counterexample written to {args.out}", file=sys.stderr)
        else:
            sys.stderr.write(text)
        return EXIT_VIOLATION
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sdiqkd", description="Symmetric device-independent QKD toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, fmt_default="json"):
        sp.add_argument("--out", help="output file (default: stdout)")
        sp.add_argument("--format", choices=("csv", "json"), default=fmt_default)
        return sp

    sim = common(sub.add_parser("simulate", help="run the protocol from a JSON config"))
    sim.add_argument("--config", help="protocol config JSON")
    sim.add_argument("--seed", type=int, help="override the config seed")
    sim.add_argument("--records", help="also write per-round records as CSV")
    sim.add_argument("--workers", type=int, default=1, help="threads for round generation")
    sim.set_defaults(func=cmd_simulate)

    kr = common(sub.add_parser("keyrate-curve", help="tabulate S, Q, E(S) and the key rate"), "csv")
    kr.add_argument("--s-range", type=float, nargs=2, metavar=("LO", "HI"))
    kr.add_argument("--q-range", type=float, nargs=2, metavar=("LO", "HI"))
    kr.add_argument("--steps", type=int, default=100)
    kr.set_defaults(func=cmd_keyrate_curve)

    oe = common(sub.add_parser("optimal-eve", help="maximum-entropy state at given q or S"))
    oe.add_argument("--q", type=float)
    oe.add_argument("--s", type=float)
    oe.set_defaults(func=cmd_optimal_eve)

    an = common(sub.add_parser("angles", help="equal-term measurement configurations"), "csv")
    an.add_argument("--weights", type=float, nargs=4, metavar="W")
    an.add_argument("--q", type=float, help="use the optimal state at this q")
    an.add_argument("--theta1", type=float)
    an.set_defaults(func=cmd_angles)

    ve = sub.add_parser("verify", help="randomized property suites")
    ve.add_argument("--suite", choices=("all",) + SUITES, default="all")
    ve.add_argument("--trials", type=int)
    ve.add_argument("--seed", type=int)
    ve.add_argument("--out", help="where to write a counterexample")
    ve.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "seed", None) is not None and not (0 <= args.seed < 2**64):
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_USAGE
    if getattr(args, "trials", None) is not None and args.trials < 1:
        print("error: --trials must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
