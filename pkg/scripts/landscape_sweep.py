#!/usr/bin/env python3
"""Run every policy on the deep- and wide-favored landscapes and print
success-curve summaries, one per landscape."""

import argparse
import math

from adabranch.harness import (
    ExperimentConfig,
    GeneratorSpec,
    aggregate,
    format_summary,
    run_experiment,
    write_records,
)
from adabranch.generators import LANDSCAPE_PRESETS
from adabranch.mixedmodel import McmcConfig
from adabranch.policies import PolicyConfig


def build_policies(include_mixed: bool) -> tuple[PolicyConfig, ...]:
    policies = [
        PolicyConfig(kind="repeated-sampling"),
        PolicyConfig(kind="sequential-refinement"),
        PolicyConfig(kind="std-mcts", width=5),
        PolicyConfig(kind="progressive-widening", pw_k=1.0, pw_alpha=0.45),
        PolicyConfig(kind="abmcts-a-gauss"),
        PolicyConfig(kind="abmcts-a-beta"),
    ]
    if include_mixed:
        policies.append(
            PolicyConfig(kind="abmcts-m", mcmc=McmcConfig(warmup=300, keep=300))
        )
    return tuple(policies)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=10)
    parser.add_argument("--max-budget", type=int, default=128)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument(
        "--with-mixed",
        action="store_true",
        help="include the MCMC-backed policy (slower)",
    )
    parser.add_argument("--out-prefix", default="landscape")
    args = parser.parse_args()

    budgets = tuple(
        2**i for i in range(int(math.log2(args.max_budget)) + 1)
    )
    for preset in ("deep-favored", "wide-favored"):
        cfg = ExperimentConfig(
            policies=build_policies(args.with_mixed),
            generators=(
                GeneratorSpec(
                    type="landscape",
                    label=preset,
                    landscape=LANDSCAPE_PRESETS[preset],
                ),
            ),
            budgets=budgets,
            n_seeds=args.seeds,
            seed=args.seed,
            task=preset,
        )
        records = list(run_experiment(cfg))
        out = f"{args.out_prefix}-{preset}.jsonl"
        write_records(records, out)
        print(f"== {preset} ({len(records)} records -> {out})")
        print(format_summary(aggregate(records)))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
