"""Command-line front end: run / aggregate / sweep / export-tree.

Exit codes: 0 on success, 1 on configuration errors, 2 when a run
completed but some generator calls failed (partial results).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .harness import (
    ConfigError,
    ExperimentConfig,
    aggregate,
    format_summary,
    read_records,
    run_one,
    run_experiment,
    sensitivity_sweep,
    write_records,
)
from .tree import export_tree, import_records

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PARTIAL = 2


def _load_config(path: str, args) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if getattr(args, "budget", None):
        doc["budgets"] = [int(b) for b in args.budget.split(",")]
    if getattr(args, "seeds", None):
        doc["seeds"] = args.seeds
    if getattr(args, "batch", None):
        doc["batch"] = args.batch
    if getattr(args, "policy", None):
        kinds = set(args.policy)
        doc["policies"] = [
            p for p in doc.get("policies", []) if p.get("kind") in kinds
        ]
        if not doc["policies"]:
            raise ConfigError(
                f"--policy {sorted(kinds)} matches nothing in the config"
            )
    return ExperimentConfig.from_dict(doc)


def _cmd_run(args) -> int:
    cfg = _load_config(args.config, args)
    partial = False
    records = []
    for rec in run_experiment(cfg):
        records.append(rec)
        if rec.n_failed > 0 or rec.aborted:
            partial = True
    write_records(records, args.out)
    print(f"wrote {len(records)} records to {args.out}")
    if args.trees:
        os.makedirs(args.trees, exist_ok=True)
        for policy_idx, pcfg in enumerate(cfg.policies):
            for seed_idx in range(cfg.n_seeds):
                tree, _, _, _ = run_one(cfg, policy_idx, seed_idx)
                name = f"{pcfg.kind}_seed{seed_idx}.tree.json"
                path = os.path.join(args.trees, name)
                with open(path, "w", encoding="utf-8") as fh:
                    fh.write(export_tree(tree, args.format))
        print(f"wrote {len(cfg.policies) * cfg.n_seeds} trees to {args.trees}")
    return EXIT_PARTIAL if partial else EXIT_OK


def _cmd_aggregate(args) -> int:
    records = read_records(args.records)
    if not records:
        print("no records found", file=sys.stderr)
        return EXIT_CONFIG
    summary = aggregate(records)
    sys.stdout.write(format_summary(summary))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
        print(f"summary written to {args.out}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _load_config(args.config, args)
    values = [float(v) for v in args.values.split(",") if v != ""]
    results = sensitivity_sweep(cfg, args.param, values)
    for entry in results:
        print(f"== {args.param} = {entry['value']}")
        sys.stdout.write(format_summary(entry["summary"]))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(results, fh, indent=2, sort_keys=True)
        print(f"sweep written to {args.out}")
    return EXIT_OK


def _cmd_export_tree(args) -> int:
    with open(args.tree, "r", encoding="utf-8") as fh:
        tree = import_records(fh.read())
    text = export_tree(tree, args.format)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adabranch",
        description="Adaptive-branching tree search over answer generators.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a policy/budget/seed sweep")
    run.add_argument("--config", required=True, help="experiment config (JSON)")
    run.add_argument("--out", default="records.jsonl", help="records output path")
    run.add_argument("--budget", help="comma-separated budget checkpoints")
    run.add_argument("--seeds", type=int, help="number of seeds")
    run.add_argument("--batch", type=int, help="proposal batch size B")
    run.add_argument(
        "--policy",
        action="append",
        help="restrict to this policy kind (repeatable)",
    )
    run.add_argument("--trees", help="directory for final tree exports")
    run.add_argument(
        "--format",
        choices=("dot", "records"),
        default="records",
        help="tree export format for --trees",
    )
    run.set_defaults(func=_cmd_run)

    agg = sub.add_parser("aggregate", help="summarize a records file")
    agg.add_argument("--records", required=True)
    agg.add_argument("--out", help="write the summary as JSON")
    agg.set_defaults(func=_cmd_aggregate)

    sweep = sub.add_parser("sweep", help="prior-sensitivity sweep")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--param", required=True, help="prior field to vary")
    sweep.add_argument("--values", required=True, help="comma-separated values")
    sweep.add_argument("--budget", help="comma-separated budget checkpoints")
    sweep.add_argument("--seeds", type=int)
    sweep.add_argument("--batch", type=int)
    sweep.add_argument("--policy", action="append")
    sweep.add_argument("--out", help="write sweep results as JSON")
    sweep.set_defaults(func=_cmd_sweep)

    export = sub.add_parser("export-tree", help="convert a stored tree record")
    export.add_argument("--tree", required=True, help="tree record file")
    export.add_argument("--format", choices=("dot", "records"), default="dot")
    export.add_argument("--out")
    export.set_defaults(func=_cmd_export_tree)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
