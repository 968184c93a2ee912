"""Search policies behind one stepping interface.

Every policy implements select-target / commit over a shared tree; the
run loop (one generator call per budget unit) lives in ``run_search``.
The adaptive policies pick between "generate a new sibling" and "descend
into an existing child" by Thompson sampling over score posteriors; the
baselines (repeated sampling, sequential refinement, fixed-width MCTS,
progressive widening) reproduce the classic behaviors they are named for.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .conjugate import (
    DEFAULT_BETA_PRIOR,
    DEFAULT_GAUSSIAN_PRIOR,
    BetaPosterior,
    GaussianPosterior,
    beta_predictive_sample,
    beta_update,
    gaussian_predictive_sample,
    gaussian_update,
    thompson_argmax,
)
from .generators import (
    GenerationRequest,
    GenerationResult,
    GeneratorUnavailable,
    LineageRecord,
    generate_many,
)
from .mixedmodel import (
    GroupedObservations,
    McmcConfig,
    MixedModelFit,
    MixedModelPriors,
    fit as fit_mixed_model,
    predictive_draw,
)
from .tree import (
    NodeId,
    NodeKind,
    SearchTree,
    TreeVariant,
    add_answer_node,
    answer_ancestry,
    answer_children,
    backup,
    cont_child,
    gen_child,
    new_tree,
)

KIND_REPEATED = "repeated-sampling"
KIND_SEQUENTIAL = "sequential-refinement"
KIND_STD_MCTS = "std-mcts"
KIND_PW = "progressive-widening"
KIND_MIXED = "abmcts-m"
KIND_AGG_GAUSS = "abmcts-a-gauss"
KIND_AGG_BETA = "abmcts-a-beta"

POLICY_KINDS = (
    KIND_REPEATED,
    KIND_SEQUENTIAL,
    KIND_STD_MCTS,
    KIND_PW,
    KIND_MIXED,
    KIND_AGG_GAUSS,
    KIND_AGG_BETA,
)

ADAPTIVE_KINDS = (KIND_MIXED, KIND_AGG_GAUSS, KIND_AGG_BETA)


@dataclass(frozen=True)
class PolicyConfig:
    kind: str
    width: int = 5
    pw_k: float = 1.0
    pw_alpha: float = 0.45
    uct_c: float = math.sqrt(2.0)
    gaussian_prior: GaussianPosterior = DEFAULT_GAUSSIAN_PRIOR
    beta_prior: BetaPosterior = DEFAULT_BETA_PRIOR
    mixed_priors: MixedModelPriors = MixedModelPriors()
    mcmc: McmcConfig = McmcConfig()
    failed_score: float | None = None
    max_lineage_depth: int | None = None
    scatter_uses_posterior_mean: bool = False

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.width < 1:
            raise ValueError("width must be >= 1")
        if self.pw_k <= 0:
            raise ValueError("pw_k must be positive")
        if not 0.0 < self.pw_alpha < 1.0:
            raise ValueError("pw_alpha must lie in (0, 1)")
        if self.uct_c <= 0:
            raise ValueError("uct_c must be positive")


@dataclass(frozen=True)
class ExpansionTarget:
    """Root or answer node whose generate action fired, plus the answer
    lineage (root-to-target order) handed to the generator."""

    parent: NodeId
    lineage: tuple[LineageRecord, ...]
    generator: int = 0

    @property
    def mode(self) -> str:
        return "direct" if not self.lineage else "refine"


def uct_score(mean: float, c: float, n_parent: int, n_child: int) -> float:
    if n_child == 0:
        return math.inf
    return mean + c * math.sqrt(math.log(n_parent) / n_child)


def uct_select_child(tree: SearchTree, node: NodeId, c: float) -> NodeId:
    """Classic UCT over the answer children; unvisited children first."""
    kids = answer_children(tree, node)
    if not kids:
        raise ValueError("uct_select_child needs children")
    n_parent = max(1, len(tree.node(node).observations))
    best, best_score = None, -math.inf
    for kid in kids:
        obs = tree.node(kid).observations
        n = len(obs)
        mean = sum(obs) / n if n else 0.0
        s = uct_score(mean, c, n_parent, n)
        if s > best_score:
            best, best_score = kid, s
    return best


def pw_should_widen(n: int, children: int, k: float, alpha: float) -> bool:
    """Progressive-widening rule: add a child iff children < k * n^alpha."""
    if n < 1:
        raise ValueError("visit count must be >= 1")
    return children < k * n**alpha


class Policy:
    """Single-writer stepping interface shared by every search policy."""

    variant: TreeVariant = TreeVariant.PLAIN

    def __init__(self, config: PolicyConfig):
        self.config = config
        self._budget: int | None = None

    def new_tree(self) -> SearchTree:
        return new_tree(self.variant)

    def start(self, budget: int) -> None:
        """Reset per-run state; called once before stepping."""
        self._budget = budget

    def select_target(
        self, tree: SearchTree, rng: np.random.Generator
    ) -> ExpansionTarget:
        raise NotImplementedError

    def propose_batch(
        self, tree: SearchTree, b: int, rng: np.random.Generator
    ) -> list[ExpansionTarget]:
        """B targets without intermediate backups; fresh draws keep the
        proposals diverse. Determinism is only guaranteed for b=1."""
        if b < 1:
            raise ValueError("batch size must be >= 1")
        return [self.select_target(tree, rng) for _ in range(b)]

    def commit(
        self, tree: SearchTree, target: ExpansionTarget, result: GenerationResult
    ) -> NodeId:
        """Append the generation result and run the variant backup."""
        nid = add_answer_node(
            tree,
            target.parent,
            payload=result.payload,
            score=None if result.failed else result.score,
            generator=target.generator,
            failed=result.failed,
            feedback=result.feedback,
        )
        backup(tree, nid, self.config.failed_score)
        self._after_commit(tree, nid)
        return nid

    def _after_commit(self, tree: SearchTree, nid: NodeId) -> None:
        pass

    def _target(
        self, tree: SearchTree, parent: NodeId, generator: int = 0
    ) -> ExpansionTarget:
        records = []
        for nid in answer_ancestry(tree, parent):
            node = tree.node(nid)
            records.append(
                LineageRecord(
                    payload=node.payload or "",
                    score=node.score,
                    feedback=node.feedback,
                )
            )
        cap = self.config.max_lineage_depth
        if cap is not None and len(records) > cap:
            records = records[-cap:]
        return ExpansionTarget(
            parent=parent, lineage=tuple(records), generator=generator
        )


class RepeatedSampling(Policy):
    """Pure width: every generation starts fresh from the root prompt."""

    def select_target(self, tree, rng):
        return self._target(tree, tree.root)


class SequentialRefinement(Policy):
    """Pure depth: always refine the most recently generated answer."""

    def select_target(self, tree, rng):
        latest, latest_step = tree.root, -1
        for node in tree.nodes:
            if node.kind is NodeKind.ANSWER and node.created_at > latest_step:
                latest, latest_step = node.id, node.created_at
        return self._target(tree, latest)


class StandardMcts(Policy):
    """Fixed-width MCTS: each node expanded once with `width` children
    (the final expansion truncated to the remaining budget), UCT descent
    by mean score plus exploration bonus."""

    def __init__(self, config: PolicyConfig):
        super().__init__(config)
        self.start(2**62)

    def start(self, budget):
        super().start(budget)
        self._committed = 0
        self._plan_parent: NodeId | None = None
        self._plan_left = 0
        self._planned = 0

    def select_target(self, tree, rng):
        if self._plan_left == 0:
            node = tree.root
            while answer_children(tree, node):
                node = uct_select_child(tree, node, self.config.uct_c)
            remaining = self._budget - self._planned
            self._plan_parent = node
            self._plan_left = min(self.config.width, max(1, remaining))
        self._plan_left -= 1
        self._planned += 1
        return self._target(tree, self._plan_parent)

    def _after_commit(self, tree, nid):
        self._committed += 1


class ProgressiveWidening(Policy):
    """UCT MCTS whose branching is capped at k * visits^alpha per node."""

    def select_target(self, tree, rng):
        k, alpha = self.config.pw_k, self.config.pw_alpha
        node = tree.root
        while True:
            kids = answer_children(tree, node)
            visits = max(1, len(tree.node(node).observations))
            if pw_should_widen(visits, len(kids), k, alpha):
                return self._target(tree, node)
            node = uct_select_child(tree, node, self.config.uct_c)


class MixedModelSearch(Policy):
    """Adaptive branching driven by the hierarchical score model.

    At each node the children's subtree observations form the model's
    groups; one joint posterior draw backs a Thompson comparison between
    "generate here" (a fresh group) and each child. Fits are cached per
    node and recomputed only when the grouped observations changed.
    """

    variant = TreeVariant.M

    def __init__(self, config: PolicyConfig):
        super().__init__(config)
        self._fit_cache: dict = {}

    def start(self, budget):
        super().start(budget)
        self._fit_cache = {}

    def _fit_for(
        self, tree: SearchTree, node: NodeId, groups: list[list[float]], key=None
    ) -> MixedModelFit:
        cache_key = (node, key)
        signature = tuple(tuple(g) for g in groups)
        cached = self._fit_cache.get(cache_key)
        if cached is not None and cached[0] == signature:
            return cached[1]
        n_obs = sum(len(g) for g in groups)
        # node is offset by one: -1 marks the generator-level pooled model
        seed = int(
            np.random.SeedSequence(
                entropy=self.config.mcmc.seed, spawn_key=(node + 1, n_obs)
            ).generate_state(1, dtype=np.uint64)[0]
        )
        cfg = dataclasses.replace(self.config.mcmc, seed=seed)
        fit = fit_mixed_model(
            GroupedObservations([list(g) for g in groups]),
            self.config.mixed_priors,
            cfg,
        )
        self._fit_cache[cache_key] = (signature, fit)
        return fit

    def _prior_predictive(self, rng: np.random.Generator) -> float:
        p = self.config.mixed_priors
        mu = rng.normal(p.mu_alpha_mean, p.mu_alpha_sd)
        sa = abs(rng.normal(0.0, p.sigma_alpha_scale))
        sy = abs(rng.normal(0.0, p.sigma_y_scale))
        return float(mu + sa * rng.standard_normal() + sy * rng.standard_normal())

    def _decide(
        self,
        tree: SearchTree,
        node: NodeId,
        kids: Sequence[NodeId],
        rng: np.random.Generator,
        want_value: bool = False,
        generator: int | None = None,
    ) -> tuple[NodeId | None, float | None]:
        """(choice, sampled value); choice None means generate here."""
        groups = [tree.node(k).observations for k in kids]
        if not kids or all(len(g) == 0 for g in groups):
            # nothing to rank refinement against: generation is forced
            value = self._prior_predictive(rng) if want_value else None
            return None, value
        fit = self._fit_for(tree, node, groups, key=generator)
        draw = int(rng.integers(fit.n_draws))
        actions: list[NodeId | None] = [None] + list(kids)
        values = [predictive_draw(fit, None, rng, draw)]
        values += [
            predictive_draw(fit, j, rng, draw) for j in range(len(kids))
        ]
        idx = thompson_argmax(list(zip(range(len(actions)), values)), rng)
        return actions[idx], values[idx]

    def select_child(
        self, tree: SearchTree, node: NodeId, rng: np.random.Generator
    ) -> NodeId | None:
        """Thompson pick at one node: None = the generate action."""
        choice, _ = self._decide(tree, node, answer_children(tree, node), rng)
        return choice

    def select_target(self, tree, rng):
        node = tree.root
        while True:
            choice = self.select_child(tree, node, rng)
            if choice is None:
                return self._target(tree, node)
            node = choice


class AggregatedSearch(Policy):
    """Adaptive branching with independent conjugate posteriors.

    Selection at a node is two-stage: Thompson between the generate
    action (gen node's backed-up scores) and the continue action (cont
    node's scores, falling back to the bare prior when empty), then,
    when continuing, Thompson over the children by their own scores.
    """

    variant = TreeVariant.A

    def __init__(self, config: PolicyConfig):
        super().__init__(config)
        if config.kind == KIND_AGG_BETA:
            self._model = "beta"
        elif config.kind == KIND_AGG_GAUSS:
            self._model = "gaussian"
        else:
            raise ValueError(f"not an aggregated-search kind: {config.kind}")

    def _posterior(self, obs: Sequence[float]):
        if self._model == "beta":
            return beta_update(self.config.beta_prior, obs)
        return gaussian_update(
            self.config.gaussian_prior,
            obs,
            scatter_uses_posterior_mean=self.config.scatter_uses_posterior_mean,
        )

    def _sample(self, posterior, rng: np.random.Generator) -> float:
        if self._model == "beta":
            return beta_predictive_sample(posterior, rng)
        return gaussian_predictive_sample(posterior, rng)

    def _cont_observations(
        self, tree: SearchTree, node: NodeId, kids: Sequence[NodeId], generator
    ) -> list[float]:
        if generator is None:
            return tree.node(cont_child(tree, node)).observations
        # restricted view: scores backed up under this generator's children,
        # i.e. each child's list minus the child's own leading score
        out: list[float] = []
        for k in kids:
            child = tree.node(k)
            own = (
                1
                if (
                    child.score is not None
                    or (child.failed and self.config.failed_score is not None)
                )
                else 0
            )
            out.extend(child.observations[own:])
        return out

    def _decide(
        self,
        tree: SearchTree,
        node: NodeId,
        kids: Sequence[NodeId],
        rng: np.random.Generator,
        want_value: bool = False,
        generator: int | None = None,
    ) -> tuple[NodeId | None, float | None]:
        gen_obs = tree.node(gen_child(tree, node, generator or 0)).observations
        if not kids:
            value = (
                self._sample(self._posterior(gen_obs), rng) if want_value else None
            )
            return None, value
        cont_obs = self._cont_observations(tree, node, kids, generator)
        gen_value = self._sample(self._posterior(gen_obs), rng)
        cont_value = self._sample(self._posterior(cont_obs), rng)
        if thompson_argmax([(0, gen_value), (1, cont_value)], rng) == 0:
            return None, gen_value
        values = [self._sample(self._posterior(tree.node(k).observations), rng) for k in kids]
        idx = thompson_argmax(list(zip(range(len(kids)), values)), rng)
        return kids[idx], values[idx]

    def select_child(
        self, tree: SearchTree, node: NodeId, rng: np.random.Generator
    ) -> NodeId | None:
        choice, _ = self._decide(tree, node, answer_children(tree, node), rng)
        return choice

    def select_gen_vs_cont(
        self, tree: SearchTree, node: NodeId, rng: np.random.Generator
    ) -> str:
        """Level-1 decision alone, for frequency tests: 'gen' or 'cont'."""
        kids = answer_children(tree, node)
        if not kids:
            return "gen"
        gen_obs = tree.node(gen_child(tree, node)).observations
        cont_obs = self._cont_observations(tree, node, kids, None)
        gen_value = self._sample(self._posterior(gen_obs), rng)
        cont_value = self._sample(self._posterior(cont_obs), rng)
        pick = thompson_argmax([("gen", gen_value), ("cont", cont_value)], rng)
        return pick

    def select_target(self, tree, rng):
        node = tree.root
        while True:
            choice = self.select_child(tree, node, rng)
            if choice is None:
                return self._target(tree, node)
            node = choice


_POLICY_CLASSES = {
    KIND_REPEATED: RepeatedSampling,
    KIND_SEQUENTIAL: SequentialRefinement,
    KIND_STD_MCTS: StandardMcts,
    KIND_PW: ProgressiveWidening,
    KIND_MIXED: MixedModelSearch,
    KIND_AGG_GAUSS: AggregatedSearch,
    KIND_AGG_BETA: AggregatedSearch,
}


def make_policy(config: PolicyConfig) -> Policy:
    return _POLICY_CLASSES[config.kind](config)


def make_request(
    target: ExpansionTarget, task: str, stream: int
) -> GenerationRequest:
    return GenerationRequest(
        task=task, mode=target.mode, lineage=target.lineage, stream=stream
    )


def run_search(
    policy: Policy,
    generators,
    budget: int,
    rng: np.random.Generator,
    task: str = "task",
    batch: int = 1,
    on_commit=None,
) -> SearchTree:
    """Select -> expand (one generator call) -> backup, `budget` times.

    `generators` is a single generator or a list indexed by the target's
    generator field. A permanently unavailable generator aborts the run
    and returns the partial tree with its aborted flag set.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if batch < 1:
        raise ValueError("batch must be >= 1")
    gens = list(generators) if isinstance(generators, (list, tuple)) else [generators]
    policy.start(budget)
    tree = policy.new_tree()
    step = 0
    try:
        while step < budget:
            b = min(batch, budget - step)
            if b == 1:
                targets = [policy.select_target(tree, rng)]
            else:
                targets = policy.propose_batch(tree, b, rng)
            reqs = [
                make_request(t, task, step + i) for i, t in enumerate(targets)
            ]
            used = {t.generator for t in targets}
            if len(used) == 1:
                results = generate_many(gens[used.pop()], reqs)
            else:
                results = [
                    gens[t.generator].generate(r) for t, r in zip(targets, reqs)
                ]
            for target, result in zip(targets, results):
                nid = policy.commit(tree, target, result)
                if on_commit is not None:
                    on_commit(nid, result)
                step += 1
    except GeneratorUnavailable:
        tree.aborted = True
    return tree
