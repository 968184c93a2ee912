"""Seeded sweep runner and reporting.

One search runs per (policy, seed) at the maximum budget; every smaller
budget checkpoint is read off the same tree by truncating the total
creation order (anytime evaluation), which is exactly what a shorter run
would have produced for sequential execution. Records stream out as one
JSON object per line so partially written files stay parseable.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .conjugate import BetaPosterior, GaussianPosterior
from .generators import (
    LANDSCAPE_PRESETS,
    ExternalGenerator,
    LandscapeParams,
    ScriptedGenerator,
    SyntheticGenerator,
)
from .mixedmodel import McmcConfig, MixedModelPriors
from .multigen import MULTIGEN_ALGORITHMS, MultiGenPolicy, usage_fractions
from .policies import PolicyConfig, make_policy, run_search
from .tree import (
    SearchTree,
    TreeMetrics,
    select_best,
    top_k,
    tree_metrics,
    tree_prefix,
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorSpec:
    """Declarative generator description from the experiment config."""

    type: str  # "landscape" | "script" | "external"
    label: str = ""
    landscape: LandscapeParams | None = None
    scores: tuple[float, ...] = ()
    cmd: tuple[str, ...] = ()
    timeout: float = 600.0
    pool: int = 1

    def build(self, seed: int):
        if self.type == "landscape":
            return SyntheticGenerator(self.landscape, seed=seed)
        if self.type == "script":
            return ScriptedGenerator(list(self.scores))
        return ExternalGenerator(list(self.cmd), timeout=self.timeout, pool=self.pool)


def _generator_spec_from_dict(d: dict, index: int) -> GeneratorSpec:
    kind = d.get("type")
    label = d.get("label", f"gen-{index}")
    if kind == "landscape":
        if "preset" in d:
            preset = d["preset"]
            if preset not in LANDSCAPE_PRESETS:
                raise ConfigError(f"unknown landscape preset {preset!r}")
            params = LANDSCAPE_PRESETS[preset]
        else:
            fields = {
                k: d[k]
                for k in (
                    "root_a",
                    "root_b",
                    "refine_drift",
                    "refine_sd",
                    "improve_prob",
                    "obs_noise",
                    "success_threshold",
                )
                if k in d
            }
            try:
                params = LandscapeParams(**fields)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        return GeneratorSpec(type="landscape", label=label, landscape=params)
    if kind == "script":
        scores = d.get("scores")
        if not scores:
            raise ConfigError("script generator needs a non-empty scores list")
        return GeneratorSpec(type="script", label=label, scores=tuple(scores))
    if kind == "external":
        cmd = d.get("cmd")
        if not cmd:
            raise ConfigError("external generator needs a cmd list")
        return GeneratorSpec(
            type="external",
            label=label,
            cmd=tuple(cmd),
            timeout=float(d.get("timeout", 600.0)),
            pool=int(d.get("pool", 1)),
        )
    raise ConfigError(f"unknown generator type {kind!r}")


_GAUSSIAN_FIELDS = ("m", "kappa", "nu", "tau2")
_BETA_FIELDS = ("alpha", "beta")
_MIXED_FIELDS = (
    "mu_alpha_mean",
    "mu_alpha_sd",
    "sigma_alpha_scale",
    "sigma_y_scale",
)


def policy_config_from_dict(d: dict) -> PolicyConfig:
    if "kind" not in d:
        raise ConfigError("policy entry needs a kind")
    kwargs: dict = {"kind": d["kind"]}
    for key in (
        "width",
        "pw_k",
        "pw_alpha",
        "uct_c",
        "failed_score",
        "max_lineage_depth",
        "scatter_uses_posterior_mean",
    ):
        if key in d:
            kwargs[key] = d[key]
    try:
        if "gaussian_prior" in d:
            kwargs["gaussian_prior"] = GaussianPosterior(**d["gaussian_prior"])
        if "beta_prior" in d:
            kwargs["beta_prior"] = BetaPosterior(**d["beta_prior"])
        if "mixed_priors" in d:
            kwargs["mixed_priors"] = MixedModelPriors(**d["mixed_priors"])
        if "mcmc" in d:
            kwargs["mcmc"] = McmcConfig(**d["mcmc"])
        return PolicyConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad policy entry: {exc}") from exc


@dataclass(frozen=True)
class ExperimentConfig:
    policies: tuple[PolicyConfig, ...]
    generators: tuple[GeneratorSpec, ...]
    budgets: tuple[int, ...]
    n_seeds: int = 1
    seed: int = 0
    task: str = "task"
    batch: int = 1
    pass_k: int = 2
    multi_gen_algorithm: str = "pooled"
    success_threshold: float | None = None

    def __post_init__(self):
        if not self.policies:
            raise ConfigError("need at least one policy")
        if not self.generators:
            raise ConfigError("need at least one generator")
        if not self.budgets:
            raise ConfigError("need at least one budget")
        if any(b < 1 for b in self.budgets):
            raise ConfigError("budgets must be >= 1")
        if list(self.budgets) != sorted(self.budgets):
            raise ConfigError("budgets must be ascending")
        if len(set(self.budgets)) != len(self.budgets):
            raise ConfigError("budgets must be distinct")
        if self.n_seeds < 1:
            raise ConfigError("seeds must be >= 1")
        if self.batch < 1:
            raise ConfigError("batch must be >= 1")
        if self.pass_k < 1:
            raise ConfigError("pass_k must be >= 1")
        if self.multi_gen_algorithm not in MULTIGEN_ALGORITHMS:
            raise ConfigError(
                f"unknown multi-generator algorithm {self.multi_gen_algorithm!r}"
            )
        if len(self.generators) > 1:
            for p in self.policies:
                if p.kind not in ("abmcts-m", "abmcts-a-gauss", "abmcts-a-beta"):
                    raise ConfigError(
                        "multiple generators require adaptive policies"
                    )

    @property
    def max_budget(self) -> int:
        return max(self.budgets)

    def threshold(self) -> float | None:
        if self.success_threshold is not None:
            return self.success_threshold
        thresholds = {
            g.landscape.success_threshold
            for g in self.generators
            if g.type == "landscape"
        }
        if not thresholds:
            return None
        if len(thresholds) > 1:
            raise ConfigError(
                "landscape generators disagree on success_threshold; "
                "set it explicitly"
            )
        return thresholds.pop()

    @staticmethod
    def from_dict(d: dict) -> "ExperimentConfig":
        try:
            policies = tuple(
                policy_config_from_dict(p) for p in d.get("policies", [])
            )
            generators = tuple(
                _generator_spec_from_dict(g, i)
                for i, g in enumerate(d.get("generators", []))
            )
            return ExperimentConfig(
                policies=policies,
                generators=generators,
                budgets=tuple(int(b) for b in d.get("budgets", [])),
                n_seeds=int(d.get("seeds", 1)),
                seed=int(d.get("seed", 0)),
                task=str(d.get("task", "task")),
                batch=int(d.get("batch", 1)),
                pass_k=int(d.get("pass_k", 2)),
                multi_gen_algorithm=str(d.get("multi_gen_algorithm", "pooled")),
                success_threshold=d.get("success_threshold"),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc


@dataclass
class RunRecord:
    policy: str
    budget: int
    seed: int
    success: bool | None
    success_pass_k: bool | None
    pass_k: int
    best_score: float | None
    best_latent: float | None
    metrics: TreeMetrics
    generator_usage: list[float]
    wall_time: float
    aborted: bool = False
    n_failed: int = 0

    def to_dict(self) -> dict:
        m = self.metrics
        ratio = m.depth_width_log_ratio
        return {
            "policy": self.policy,
            "budget": self.budget,
            "seed": self.seed,
            "success": self.success,
            "success_pass_k": self.success_pass_k,
            "pass_k": self.pass_k,
            "best_score": self.best_score,
            "best_latent": self.best_latent,
            "metrics": {
                "n_answer_nodes": m.n_answer_nodes,
                "max_depth": m.max_depth,
                "mean_depth": m.mean_depth,
                "mean_width": m.mean_width,
                "depth_width_log_ratio": None if math.isnan(ratio) else ratio,
                "degree_histogram": {str(k): v for k, v in m.degree_histogram.items()},
            },
            "generator_usage": self.generator_usage,
            "wall_time": self.wall_time,
            "aborted": self.aborted,
            "n_failed": self.n_failed,
        }

    @staticmethod
    def from_dict(d: dict) -> "RunRecord":
        md = d["metrics"]
        ratio = md["depth_width_log_ratio"]
        metrics = TreeMetrics(
            n_answer_nodes=md["n_answer_nodes"],
            max_depth=md["max_depth"],
            mean_depth=md["mean_depth"],
            mean_width=md["mean_width"],
            depth_width_log_ratio=float("nan") if ratio is None else ratio,
            degree_histogram={int(k): v for k, v in md["degree_histogram"].items()},
        )
        return RunRecord(
            policy=d["policy"],
            budget=d["budget"],
            seed=d["seed"],
            success=d["success"],
            success_pass_k=d["success_pass_k"],
            pass_k=d["pass_k"],
            best_score=d["best_score"],
            best_latent=d["best_latent"],
            metrics=metrics,
            generator_usage=list(d["generator_usage"]),
            wall_time=d["wall_time"],
            aborted=d["aborted"],
            n_failed=d["n_failed"],
        )


def _run_streams(cfg: ExperimentConfig, policy_idx: int, seed_idx: int):
    """Documented derivation: every random stream of one run descends
    from SeedSequence(root_seed, spawn_key=(policy_idx, seed_idx))."""
    ss = np.random.SeedSequence(
        entropy=cfg.seed, spawn_key=(policy_idx, seed_idx)
    )
    children = ss.spawn(2 + len(cfg.generators))
    policy_rng = np.random.default_rng(children[0])
    mcmc_seed = int(children[1].generate_state(1, dtype=np.uint64)[0])
    gen_seeds = [
        int(c.generate_state(1, dtype=np.uint64)[0]) for c in children[2:]
    ]
    return policy_rng, mcmc_seed, gen_seeds


def _build_policy(cfg: ExperimentConfig, pcfg: PolicyConfig, mcmc_seed: int):
    pcfg = dataclasses.replace(
        pcfg, mcmc=dataclasses.replace(pcfg.mcmc, seed=mcmc_seed)
    )
    if len(cfg.generators) > 1:
        return MultiGenPolicy(
            pcfg, len(cfg.generators), algorithm=cfg.multi_gen_algorithm
        )
    return make_policy(pcfg)


def run_one(
    cfg: ExperimentConfig, policy_idx: int, seed_idx: int
) -> tuple[SearchTree, list[float | None], list[float], PolicyConfig]:
    """One full-budget search; returns the tree, per-step latents and
    per-step elapsed wall times."""
    pcfg = cfg.policies[policy_idx]
    policy_rng, mcmc_seed, gen_seeds = _run_streams(cfg, policy_idx, seed_idx)
    policy = _build_policy(cfg, pcfg, mcmc_seed)
    generators = [
        gspec.build(seed) for gspec, seed in zip(cfg.generators, gen_seeds)
    ]
    latents: list[float | None] = []
    ticks: list[float] = []
    t0 = time.perf_counter()

    def on_commit(nid, result):
        latents.append(result.latent)
        ticks.append(time.perf_counter() - t0)

    try:
        tree = run_search(
            policy,
            generators,
            cfg.max_budget,
            policy_rng,
            task=cfg.task,
            batch=cfg.batch,
            on_commit=on_commit,
        )
    finally:
        for g in generators:
            if hasattr(g, "close"):
                g.close()
    return tree, latents, ticks, pcfg


def _checkpoint_record(
    cfg: ExperimentConfig,
    pcfg: PolicyConfig,
    tree: SearchTree,
    latents: list[float | None],
    ticks: list[float],
    budget: int,
    seed_idx: int,
) -> RunRecord:
    sub = tree_prefix(tree, budget, failed_score=pcfg.failed_score)
    threshold = cfg.threshold()
    try:
        best = select_best(sub)
        best_node = sub.node(best)
        best_score = best_node.score
        best_latent = latents[best_node.created_at]
    except ValueError:
        best_score = None
        best_latent = None
    success = None
    if threshold is not None and best_latent is not None:
        success = best_latent >= threshold
    success_pass_k = None
    if threshold is not None:
        top = top_k(sub, cfg.pass_k)
        top_latents = [
            latents[sub.node(nid).created_at] for nid in top
        ]
        known = [t for t in top_latents if t is not None]
        if known:
            success_pass_k = any(t >= threshold for t in known)
    n_failed = sum(
        1 for n in sub.nodes if n.kind.value == "answer" and n.failed
    )
    steps_done = min(budget, len(ticks))
    return RunRecord(
        policy=pcfg.kind,
        budget=budget,
        seed=seed_idx,
        success=success,
        success_pass_k=success_pass_k,
        pass_k=cfg.pass_k,
        best_score=best_score,
        best_latent=best_latent,
        metrics=tree_metrics(sub, include_failed=pcfg.failed_score is not None),
        generator_usage=usage_fractions(sub, len(cfg.generators)),
        wall_time=ticks[steps_done - 1] if steps_done else 0.0,
        aborted=tree.aborted and budget >= len(ticks),
        n_failed=n_failed,
    )


def run_experiment(cfg: ExperimentConfig) -> Iterator[RunRecord]:
    """Yield one record per (policy, budget, seed), streaming."""
    for policy_idx in range(len(cfg.policies)):
        for seed_idx in range(cfg.n_seeds):
            tree, latents, ticks, pcfg = run_one(cfg, policy_idx, seed_idx)
            for budget in cfg.budgets:
                yield _checkpoint_record(
                    cfg, pcfg, tree, latents, ticks, budget, seed_idx
                )


def write_records(records: Iterable[RunRecord], path: str) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")
            fh.flush()
            n += 1
    return n


def read_records(path: str) -> list[RunRecord]:
    """Parse a record stream; a truncated final line is ignored so
    crash-interrupted files load to their completed prefix."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.endswith("\n"):
                break
            line = line.strip()
            if not line:
                continue
            try:
                out.append(RunRecord.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError):
                break
    return out


def _mean_ci(values: list[float]) -> tuple[float, float]:
    n = len(values)
    mean = sum(values) / n
    if n < 2:
        return mean, 0.0
    sd = math.sqrt(sum((v - mean) ** 2 for v in values) / (n - 1))
    return mean, 1.96 * sd / math.sqrt(n)


def rank_values(values: list[float]) -> list[int]:
    """Competition ranks, higher value is better; ties share the better rank."""
    order = sorted(range(len(values)), key=lambda i: values[i], reverse=True)
    ranks = [0] * len(values)
    for pos, i in enumerate(order):
        if pos > 0 and values[i] == values[order[pos - 1]]:
            ranks[i] = ranks[order[pos - 1]]
        else:
            ranks[i] = pos + 1
    return ranks


def aggregate(records: list[RunRecord]) -> dict:
    """Per-(policy, budget) means with 95% CIs, ranks per budget, and the
    average rank per policy. Ranks use the success rate when every group
    reports one, otherwise the mean best score."""
    if not records:
        raise ValueError("no records to aggregate")
    groups: dict[tuple[str, int], list[RunRecord]] = {}
    for rec in records:
        groups.setdefault((rec.policy, rec.budget), []).append(rec)
    use_success = all(
        rec.success is not None for rec in records
    )
    rows = []
    for (policy, budget), recs in sorted(groups.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        scores = [r.best_score for r in recs if r.best_score is not None]
        row: dict = {"policy": policy, "budget": budget, "n": len(recs)}
        if use_success:
            rate, ci = _mean_ci([1.0 if r.success else 0.0 for r in recs])
            row["success_rate"], row["success_ci"] = rate, ci
        if scores:
            mean, ci = _mean_ci(scores)
            row["best_score_mean"], row["best_score_ci"] = mean, ci
        row["metric"] = row.get("success_rate", row.get("best_score_mean"))
        rows.append(row)
    budgets = sorted({r["budget"] for r in rows})
    rank_sum: dict[str, float] = {}
    rank_n: dict[str, int] = {}
    for b in budgets:
        sub = [r for r in rows if r["budget"] == b and r["metric"] is not None]
        ranks = rank_values([r["metric"] for r in sub])
        for r, rk in zip(sub, ranks):
            r["rank"] = rk
            rank_sum[r["policy"]] = rank_sum.get(r["policy"], 0.0) + rk
            rank_n[r["policy"]] = rank_n.get(r["policy"], 0) + 1
    average_rank = {
        p: rank_sum[p] / rank_n[p] for p in rank_sum
    }
    return {
        "metric": "success_rate" if use_success else "best_score",
        "rows": rows,
        "average_rank": average_rank,
    }


def format_summary(summary: dict) -> str:
    lines = []
    header = f"{'policy':<26} {'budget':>6} {'n':>4} {'metric':>10} {'ci95':>8} {'rank':>4}"
    lines.append(header)
    lines.append("-" * len(header))
    for row in summary["rows"]:
        metric = row.get("metric")
        ci = row.get("success_ci", row.get("best_score_ci", 0.0))
        lines.append(
            f"{row['policy']:<26} {row['budget']:>6} {row['n']:>4} "
            f"{metric if metric is None else f'{metric:.4f}':>10} "
            f"{ci:>8.4f} {row.get('rank', '-'):>4}"
        )
    lines.append("")
    lines.append("average rank (lower is better):")
    for policy, rank in sorted(summary["average_rank"].items(), key=lambda kv: kv[1]):
        lines.append(f"  {policy:<26} {rank:.2f}")
    return "\n".join(lines) + "\n"


PRIOR_FIELDS = {
    "gaussian": set(_GAUSSIAN_FIELDS),
    "beta": set(_BETA_FIELDS),
    "mixed": set(_MIXED_FIELDS),
}


def _prior_family_for(field_name: str) -> str:
    for family, names in PRIOR_FIELDS.items():
        if field_name in names:
            return family
    raise ConfigError(f"unknown prior field {field_name!r}")


_FAMILY_BY_KIND = {
    "abmcts-a-gauss": "gaussian",
    "abmcts-a-beta": "beta",
    "abmcts-m": "mixed",
}


def _apply_prior(pcfg: PolicyConfig, field_name: str, value: float) -> PolicyConfig:
    family = _prior_family_for(field_name)
    if family == "gaussian":
        prior = dataclasses.replace(pcfg.gaussian_prior, **{field_name: value})
        return dataclasses.replace(pcfg, gaussian_prior=prior)
    if family == "beta":
        prior = dataclasses.replace(pcfg.beta_prior, **{field_name: value})
        return dataclasses.replace(pcfg, beta_prior=prior)
    prior = dataclasses.replace(pcfg.mixed_priors, **{field_name: value})
    return dataclasses.replace(pcfg, mixed_priors=prior)


def sensitivity_sweep(
    cfg: ExperimentConfig, field_name: str, values: list[float]
) -> list[dict]:
    """One aggregate per prior-grid point; the grid field must belong to
    the prior family of every policy in the config."""
    if not values:
        raise ConfigError("empty prior grid")
    family = _prior_family_for(field_name)
    for p in cfg.policies:
        if _FAMILY_BY_KIND.get(p.kind) != family:
            raise ConfigError(
                f"prior field {field_name!r} does not apply to policy {p.kind!r}"
            )
    out = []
    for value in values:
        policies = tuple(
            _apply_prior(p, field_name, value) for p in cfg.policies
        )
        grid_cfg = dataclasses.replace(cfg, policies=policies)
        records = list(run_experiment(grid_cfg))
        out.append({"value": value, "summary": aggregate(records)})
    return out
