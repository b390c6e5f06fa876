"""How large can S get on configurations obeying the angle-only relations?

Two searches:

1. grid: every point of the relation manifold on an n x n grid of Alice's
   angles, scored with the best Bell-diagonal state for those angles;
2. constrained: SLSQP over (angles, 1-p-p3, p1-p2) with all four CHSH terms
   equal, the two angle relations enforced, and every half-angle factor of
   the equal-term conditions kept away from zero.

Prints a JSON summary. Both searches reach values well above 2.
"""

import argparse
import json
import math

import numpy as np
from scipy import optimize

from sdiqkd.chsh import TSIRELSON, BasisConfig, angle_relation_residuals, max_chsh_on_angle_relations


def terms(z):
    t1, t2, f1, f2, x, y = z
    c = lambda a, b: x * math.cos(a - b) - y * math.cos(a + b)  # noqa: E731
    return np.array([c(t1, f1), c(t1, f2), c(t2, f1), -c(t2, f2)])


def half_angle_sides(z):
    t1, t2, f1, f2, x, y = z
    return np.array([
        x * math.sin((2 * t1 - f1 - f2) / 2), x * math.sin((2 * f1 - t1 - t2) / 2),
        x * math.cos((2 * t2 - f1 - f2) / 2), x * math.cos((2 * f2 - t1 - t2) / 2),
    ])


def constrained_search(starts: int, seed: int, floor: float):
    rng = np.random.default_rng(seed)
    cons = [
        {"type": "eq", "fun": lambda z: np.diff(terms(z))},
        {"type": "eq", "fun": lambda z: angle_relation_residuals(BasisConfig(z[:2], z[2:4]))},
        {"type": "ineq", "fun": lambda z: 1 - abs(z[4]) - abs(z[5])},
        {"type": "ineq", "fun": lambda z: np.abs(half_angle_sides(z)) - floor},
    ]
    best = None
    for _ in range(starts):
        z0 = np.concatenate([rng.uniform(-math.pi, math.pi, 4), rng.uniform(-0.5, 0.5, 2)])
        res = optimize.minimize(lambda z: -terms(z).sum(), z0, method="SLSQP", constraints=cons,
                                options={"maxiter": 500, "ftol": 1e-12})
        if not res.success:
            continue
        z = res.x
        feasible = (np.max(np.abs(np.diff(terms(z)))) < 1e-8
                    and np.max(np.abs(angle_relation_residuals(BasisConfig(z[:2], z[2:4])))) < 1e-8
                    and abs(z[4]) + abs(z[5]) <= 1 + 1e-9
                    and np.min(np.abs(half_angle_sides(z))) >= floor - 1e-9)
        if feasible and (best is None or terms(z).sum() > best[0]):
            best = (float(terms(z).sum()), z)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", type=int, default=100)
    ap.add_argument("--starts", type=int, default=400)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--floor", type=float, default=1e-3, help="minimum |half-angle side|")
    args = ap.parse_args()

    s_grid, cfg, n = max_chsh_on_angle_relations(args.grid)
    out = {
        "grid": {"points": n, "max_abs_s": s_grid, "alice": list(cfg.alice), "bob": list(cfg.bob),
                 "relation_residuals": angle_relation_residuals(cfg).tolist()},
        "tsirelson": TSIRELSON,
    }
    best = constrained_search(args.starts, args.seed, args.floor)
    if best is not None:
        s, z = best
        out["constrained"] = {"s": s, "alice": z[:2].tolist(), "bob": z[2:4].tolist(),
                              "one_minus_p_minus_p3": z[4], "p1_minus_p2": z[5],
                              "min_half_angle_side": float(np.min(np.abs(half_angle_sides(z))))}
    else:
        out["constrained"] = None
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
