"""Choosing among several answer generators during the search.

Two schemes, both reducing exactly to the single-generator policy when
only one generator is configured:

* "pooled": the base policy picks the expansion target as usual, then a
  generator is Thompson-sampled from per-generator posteriors over the
  scores of every node each generator has produced anywhere in the tree.
* "per-gen": every expandable node carries one generate action per
  generator; selection runs the base logic independently inside each
  generator's sub-view (its gen action plus the children it created),
  then the per-generator winners' sampled scores are compared.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conjugate import thompson_argmax
from .mixedmodel import predictive_draw
from .policies import (
    ADAPTIVE_KINDS,
    ExpansionTarget,
    MixedModelSearch,
    Policy,
    PolicyConfig,
    make_policy,
)
from .tree import NodeKind, SearchTree, answer_children, new_tree

ALG_POOLED = "pooled"
ALG_PER_GEN = "per-gen"

MULTIGEN_ALGORITHMS = (ALG_POOLED, ALG_PER_GEN)


@dataclass(frozen=True)
class GeneratorId:
    """Stable identity of one answer generator within an experiment."""

    index: int
    label: str


def generator_score_lists(tree: SearchTree, n_generators: int) -> list[list[float]]:
    """Scores of all scored answer nodes, grouped by producing generator,
    in creation order."""
    lists: list[list[float]] = [[] for _ in range(n_generators)]
    answers = sorted(
        (n for n in tree.nodes if n.kind is NodeKind.ANSWER),
        key=lambda n: n.created_at,
    )
    for node in answers:
        if node.score is not None:
            lists[node.generator or 0].append(node.score)
    return lists


def usage_fractions(tree: SearchTree, n_generators: int) -> list[float]:
    """Fraction of generation calls handled by each generator; sums to 1."""
    counts = [0] * n_generators
    total = 0
    for node in tree.nodes:
        if node.kind is NodeKind.ANSWER:
            counts[node.generator or 0] += 1
            total += 1
    if total == 0:
        return [0.0] * n_generators
    return [c / total for c in counts]


class MultiGenPolicy(Policy):
    """Wraps an adaptive base policy with generator selection."""

    def __init__(
        self,
        base_config: PolicyConfig,
        n_generators: int,
        algorithm: str = ALG_POOLED,
    ):
        if base_config.kind not in ADAPTIVE_KINDS:
            raise ValueError(
                "multi-generator selection wraps the adaptive policies only"
            )
        if n_generators < 1:
            raise ValueError("need at least one generator")
        if algorithm not in MULTIGEN_ALGORITHMS:
            raise ValueError(f"unknown multi-generator algorithm {algorithm!r}")
        super().__init__(base_config)
        self.base = make_policy(base_config)
        self.n_generators = n_generators
        self.algorithm = algorithm
        self.variant = self.base.variant

    def new_tree(self) -> SearchTree:
        gens = self.n_generators if self.algorithm == ALG_PER_GEN else 1
        return new_tree(self.variant, gens_per_node=gens)

    def start(self, budget: int) -> None:
        super().start(budget)
        self.base.start(budget)

    def _after_commit(self, tree, nid):
        self.base._after_commit(tree, nid)

    # --- pooled (single gen node, global per-generator statistics) ---------

    def select_generator_pooled(
        self, tree: SearchTree, rng: np.random.Generator
    ) -> int:
        """Thompson over per-generator posteriors of pooled node scores;
        a generator with no nodes yet draws from the bare prior."""
        if self.n_generators == 1:
            return 0
        lists = generator_score_lists(tree, self.n_generators)
        if isinstance(self.base, MixedModelSearch):
            return self._pooled_mixed(tree, lists, rng)
        samples = [
            (l, self.base._sample(self.base._posterior(scores), rng))
            for l, scores in enumerate(lists)
        ]
        return thompson_argmax(samples, rng)

    def _pooled_mixed(self, tree, lists, rng) -> int:
        if all(len(s) == 0 for s in lists):
            samples = [
                (l, self.base._prior_predictive(rng))
                for l in range(self.n_generators)
            ]
            return thompson_argmax(samples, rng)
        fit = self.base._fit_for(tree, -1, lists, key="pooled")
        draw = int(rng.integers(fit.n_draws))
        samples = []
        for l, scores in enumerate(lists):
            group = l if scores else None  # untried: fresh intercept draw
            samples.append((l, predictive_draw(fit, group, rng, draw)))
        return thompson_argmax(samples, rng)

    # --- per-gen (one generate action per generator at every node) ---------

    def _select_target_per_gen(
        self, tree: SearchTree, rng: np.random.Generator
    ) -> ExpansionTarget:
        node = tree.root
        while True:
            kids = answer_children(tree, node)
            if self.n_generators == 1:
                choice, _ = self.base._decide(tree, node, kids, rng)
                winner_gen = 0
            else:
                winners = []
                for l in range(self.n_generators):
                    kids_l = [k for k in kids if tree.node(k).generator == l]
                    choice_l, value_l = self.base._decide(
                        tree, node, kids_l, rng, want_value=True, generator=l
                    )
                    winners.append((choice_l, value_l))
                winner_gen = thompson_argmax(
                    [(l, v) for l, (_, v) in enumerate(winners)], rng
                )
                choice = winners[winner_gen][0]
            if choice is None:
                return self.base._target(tree, node, generator=winner_gen)
            node = choice

    def select_target(self, tree, rng):
        if self.algorithm == ALG_PER_GEN:
            return self._select_target_per_gen(tree, rng)
        target = self.base.select_target(tree, rng)
        chosen = self.select_generator_pooled(tree, rng)
        if chosen == target.generator:
            return target
        return ExpansionTarget(
            parent=target.parent, lineage=target.lineage, generator=chosen
        )
