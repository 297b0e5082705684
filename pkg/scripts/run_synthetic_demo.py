#!/usr/bin/env python3
"""Demo: search a 4-architecture synthetic landscape and print the trajectory.

Usage: run_synthetic_demo.py [--seed N] [--iterations N]
"""

import argparse

from hiersearch.engine import EngineConfig, run_search
from hiersearch.evaluators import ArchLandscape, SyntheticEvaluator, SyntheticLandscape
from hiersearch.policy import MutationPolicyConfig
from hiersearch.space import ParamKind, ParamSpec, SearchSpace
from hiersearch.stats import StatsConfig


def build_space():
    macro = (
        ParamSpec("backbone", ParamKind.BINARY, 0, 1, 1, fixed=True),
        ParamSpec("m1", ParamKind.BINARY, 0, 1, 0),
        ParamSpec("m2", ParamKind.BINARY, 0, 1, 0),
    )
    micro = (
        ParamSpec("lr", ParamKind.CONTINUOUS, 0.0, 1.0, 0.5),
        ParamSpec("dropout", ParamKind.CONTINUOUS, 0.0, 1.0, 0.5),
        ParamSpec("width", ParamKind.DISCRETE, 1, 8, 4),
    )
    return SearchSpace(macro, {a: micro for a in range(4)})


def build_landscape():
    def arch(bonus, lr, dropout, width):
        return ArchLandscape(
            bonus=bonus,
            optimum={"lr": lr, "dropout": dropout, "width": float(width)},
            weights={"lr": 0.6, "dropout": 0.6, "width": 0.01},
        )

    return SyntheticLandscape(archs={
        0: arch(0.4, 0.5, 0.5, 4),
        1: arch(0.7, 0.2, 0.8, 3),
        2: arch(0.2, 0.9, 0.1, 7),
        3: arch(1.0, 0.3, 0.6, 6),
    })


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--iterations", type=int, default=150)
    args = parser.parse_args()

    space, scape = build_space(), build_landscape()
    cfg = EngineConfig(
        iterations=args.iterations, seed=args.seed, acceptance="greedy_elitist",
        policy=MutationPolicyConfig(max_prob=0.5),
        stats=StatsConfig(k=0.3, mean_sign_mode="sign_corrected"),
    )
    result = run_search(space, SyntheticEvaluator(scape), cfg)

    print(f"known optimum reward : {scape.optimum_reward():.4f} (arch {scape.best_arch()})")
    print(f"best found           : {result.best_reward:.4f} "
          f"(arch {result.best_candidate.arch_index}, "
          f"iteration {result.best_candidate.iteration})")
    print(f"best micro values    : { {k: round(v, 4) for k, v in sorted(result.best_candidate.micro_values.items())} }")
    print("\nper-arch best:")
    for arch, (cand, reward) in sorted(result.per_arch_best.items()):
        visits = sum(1 for rec in result.history if rec.candidate.arch_index == arch)
        print(f"  arch {arch}: reward {reward:.4f} over {visits} visits")

    print("\nbest-so-far curve (every 10 iterations):")
    best = 0.0
    for rec in result.history:
        best = max(best, rec.reward)
        if rec.iteration % 10 == 0:
            print(f"  iter {rec.iteration:4d}  best {best:.4f}")


if __name__ == "__main__":
    main()
