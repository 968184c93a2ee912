#!/usr/bin/env python3
"""Prior-sensitivity sweep for one adaptive policy on one landscape,
mirroring the harness `sweep` subcommand as a library example."""

import argparse

from adabranch.harness import (
    ExperimentConfig,
    GeneratorSpec,
    format_summary,
    sensitivity_sweep,
)
from adabranch.generators import LANDSCAPE_PRESETS
from adabranch.mixedmodel import McmcConfig
from adabranch.policies import PolicyConfig

DEFAULT_GRIDS = {
    "abmcts-a-gauss": ("m", [0.0, 0.1, 0.5, 1.0]),
    "abmcts-a-beta": ("alpha", [0.1, 0.4, 0.5, 0.6, 1.0]),
    "abmcts-m": ("mu_alpha_mean", [0.0, 0.4, 0.5, 0.6, 1.0]),
}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--policy", default="abmcts-a-beta", choices=DEFAULT_GRIDS)
    parser.add_argument("--param", help="prior field (default: per-policy pick)")
    parser.add_argument("--values", help="comma-separated grid values")
    parser.add_argument("--landscape", default="deep-favored", choices=LANDSCAPE_PRESETS)
    parser.add_argument("--seeds", type=int, default=10)
    parser.add_argument("--budget", type=int, default=16)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    field, values = DEFAULT_GRIDS[args.policy]
    if args.param:
        field = args.param
    if args.values:
        values = [float(v) for v in args.values.split(",")]

    cfg = ExperimentConfig(
        policies=(
            PolicyConfig(kind=args.policy, mcmc=McmcConfig(warmup=300, keep=300)),
        ),
        generators=(
            GeneratorSpec(
                type="landscape",
                label=args.landscape,
                landscape=LANDSCAPE_PRESETS[args.landscape],
            ),
        ),
        budgets=(args.budget,),
        n_seeds=args.seeds,
        seed=args.seed,
        task=args.landscape,
    )
    for entry in sensitivity_sweep(cfg, field, values):
        print(f"== {field} = {entry['value']}")
        print(format_summary(entry["summary"]))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
