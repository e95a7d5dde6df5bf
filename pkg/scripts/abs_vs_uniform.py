#!/usr/bin/env python3
"""Compare adaptive (score-inverse) sampling against uniform sampling in the
simulated closed loop and print per-dimension gains.

Usage: python3 scripts/abs_vs_uniform.py [--rounds N] [--items N] [--seed N]
"""

from __future__ import annotations

import argparse

from dataengine.engine import run_policy_simulation
from dataengine.pool import parse_type_mapping
from dataengine.prompts import load_asset
from dataengine.question_types import QuestionType


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rounds", default=3, type=int)
    parser.add_argument("--items", default=900, type=int, help="items per round")
    parser.add_argument("--seed", default=7, type=int)
    parser.add_argument("--sigma", default=0.0, type=float,
                        help="simulated trainer noise")
    args = parser.parse_args()

    type_map = parse_type_mapping(load_asset("type_mapping.txt"))
    dims = [qt.value for qt in QuestionType]
    scores = {dim: 0.2 + 0.7 * i / (len(dims) - 1) for i, dim in enumerate(dims)}

    results = {}
    for policy in ("abs", "uniform"):
        history = run_policy_simulation(
            scores, rounds=args.rounds, items_per_round=args.items,
            policy=policy, type_map=type_map, sigma=args.sigma, seed=args.seed,
        )
        results[policy] = history[-1].scoreboard

    print(f"{'dimension':<28} {'start':>7} {'abs':>7} {'uniform':>8} {'edge':>7}")
    for dim in sorted(scores, key=scores.get):
        start = scores[dim]
        a = results["abs"][dim]
        u = results["uniform"][dim]
        print(f"{dim:<28} {start:7.3f} {a:7.3f} {u:8.3f} {a - u:+7.3f}")

    weakest = sorted(scores, key=scores.get)[:6]
    abs_gain = sum(results["abs"][d] - scores[d] for d in weakest) / len(weakest)
    uni_gain = sum(results["uniform"][d] - scores[d] for d in weakest) / len(weakest)
    print(f"\nweakest-6 mean gain: abs={abs_gain:.4f} uniform={uni_gain:.4f} "
          f"({abs_gain / uni_gain:.2f}x)")


if __name__ == "__main__":
    main()
