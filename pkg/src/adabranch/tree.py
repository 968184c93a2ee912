"""Search-tree arena shared by every policy.

The tree mixes three node kinds: answer nodes (one per generator call),
"gen" pseudo-children (the action of generating a fresh sibling answer)
and, in the aggregated variant, "cont" pseudo-children (the action of
refining an existing child).  Scores are backed up into per-node
observation lists; which nodes receive a score differs per variant and is
the substance of ``backup_m`` / ``backup_a`` / ``backup_plain``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

NodeId = int

TREE_FORMAT_VERSION = 1


class NodeKind(str, Enum):
    ROOT = "root"
    ANSWER = "answer"
    GEN = "gen"
    CONT = "cont"


class TreeVariant(str, Enum):
    """Structural flavor: gen-only, gen+cont, or bare baseline trees."""

    M = "m"
    A = "a"
    PLAIN = "plain"


@dataclass
class Node:
    id: NodeId
    parent: NodeId | None
    kind: NodeKind
    payload: str | None = None
    score: float | None = None
    generator: int | None = None
    created_at: int | None = None
    failed: bool = False
    feedback: str | None = None
    observations: list[float] = field(default_factory=list)
    children: list[NodeId] = field(default_factory=list)


@dataclass
class TreeMetrics:
    """Shape summary over answer nodes plus the root (gen/cont invisible)."""

    n_answer_nodes: int
    max_depth: int
    mean_depth: float
    mean_width: float
    depth_width_log_ratio: float
    degree_histogram: dict[int, int]


@dataclass
class SearchTree:
    variant: TreeVariant
    nodes: list[Node] = field(default_factory=list)
    gens_per_node: int = 1
    step: int = 0
    aborted: bool = False

    @property
    def root(self) -> NodeId:
        return 0

    def node(self, nid: NodeId) -> Node:
        return self.nodes[nid]

    def __len__(self) -> int:
        return len(self.nodes)


def new_tree(variant: TreeVariant, gens_per_node: int = 1) -> SearchTree:
    """Create a tree holding only the root plus its structural children."""
    if gens_per_node < 1:
        raise ValueError("gens_per_node must be >= 1")
    if variant is TreeVariant.PLAIN and gens_per_node != 1:
        raise ValueError("plain trees have no gen nodes")
    tree = SearchTree(variant=variant, gens_per_node=gens_per_node)
    tree.nodes.append(Node(id=0, parent=None, kind=NodeKind.ROOT))
    _attach_structural_children(tree, 0)
    return tree


def _attach_structural_children(tree: SearchTree, owner: NodeId) -> None:
    if tree.variant is TreeVariant.PLAIN:
        return
    for l in range(tree.gens_per_node):
        gid = len(tree.nodes)
        tree.nodes.append(Node(id=gid, parent=owner, kind=NodeKind.GEN, generator=l))
        tree.node(owner).children.append(gid)
    if tree.variant is TreeVariant.A:
        cid = len(tree.nodes)
        tree.nodes.append(Node(id=cid, parent=owner, kind=NodeKind.CONT))
        tree.node(owner).children.append(cid)


def gen_child(tree: SearchTree, owner: NodeId, generator: int = 0) -> NodeId:
    for cid in tree.node(owner).children:
        c = tree.node(cid)
        if c.kind is NodeKind.GEN and c.generator == generator:
            return cid
    raise ValueError(f"node {owner} has no gen child for generator {generator}")


def cont_child(tree: SearchTree, owner: NodeId) -> NodeId:
    for cid in tree.node(owner).children:
        if tree.node(cid).kind is NodeKind.CONT:
            return cid
    raise ValueError(f"node {owner} has no cont child")


def answer_children(tree: SearchTree, owner: NodeId) -> list[NodeId]:
    """Direct answer children of an answer/root node, in creation order."""
    node = tree.node(owner)
    if node.kind not in (NodeKind.ROOT, NodeKind.ANSWER):
        raise ValueError("answer_children expects a root or answer node")
    if tree.variant is TreeVariant.A:
        holder = tree.node(cont_child(tree, owner))
    else:
        holder = node
    return [c for c in holder.children if tree.node(c).kind is NodeKind.ANSWER]


def answer_parent(tree: SearchTree, nid: NodeId) -> NodeId | None:
    """Nearest answer/root ancestor, skipping cont nodes."""
    parent = tree.node(nid).parent
    while parent is not None and tree.node(parent).kind not in (
        NodeKind.ROOT,
        NodeKind.ANSWER,
    ):
        parent = tree.node(parent).parent
    return parent


def answer_ancestry(tree: SearchTree, nid: NodeId) -> list[NodeId]:
    """Answer-node chain from the root's first-level ancestor down to nid."""
    chain: list[NodeId] = []
    cur: NodeId | None = nid
    while cur is not None and tree.node(cur).kind is NodeKind.ANSWER:
        chain.append(cur)
        cur = answer_parent(tree, cur)
    chain.reverse()
    return chain


def answer_depth(tree: SearchTree, nid: NodeId) -> int:
    """Depth in the collapsed answer tree; the root sits at 0."""
    if tree.node(nid).kind is NodeKind.ROOT:
        return 0
    return len(answer_ancestry(tree, nid))


def add_answer_node(
    tree: SearchTree,
    parent: NodeId,
    payload: str,
    score: float | None = None,
    generator: int = 0,
    failed: bool = False,
    feedback: str | None = None,
) -> NodeId:
    """Append one answer node under `parent` and advance the step counter.

    In the aggregated variant the node structurally hangs under the
    parent's cont child; in all variants it receives its own structural
    gen (and cont) children so it is immediately expandable.
    """
    pnode = tree.node(parent)
    if pnode.kind not in (NodeKind.ROOT, NodeKind.ANSWER):
        raise ValueError("expansion parent must be the root or an answer node")
    if payload is None:
        raise ValueError("answer nodes require a payload (may be empty)")
    if failed and score is not None:
        raise ValueError("failed nodes carry no score")
    structural_parent = (
        cont_child(tree, parent) if tree.variant is TreeVariant.A else parent
    )
    nid = len(tree.nodes)
    tree.nodes.append(
        Node(
            id=nid,
            parent=structural_parent,
            kind=NodeKind.ANSWER,
            payload=payload,
            score=score,
            generator=generator,
            created_at=tree.step,
            failed=failed,
            feedback=feedback,
        )
    )
    tree.node(structural_parent).children.append(nid)
    _attach_structural_children(tree, nid)
    tree.step += 1
    return nid


def _backup_value(tree: SearchTree, new_node: NodeId, failed_score: float | None):
    node = tree.node(new_node)
    if node.kind is not NodeKind.ANSWER:
        raise ValueError("backup starts from an answer node")
    if node.score is not None:
        return node.score
    if node.failed and failed_score is not None:
        return failed_score
    return None


def backup_m(
    tree: SearchTree, new_node: NodeId, failed_score: float | None = None
) -> None:
    """Append the new node's score to itself and every answer/root ancestor.

    Gen nodes receive nothing in this variant. A failed node is a no-op
    unless a substitute score is supplied.
    """
    if tree.variant is not TreeVariant.M:
        raise ValueError("backup_m requires an m-variant tree")
    value = _backup_value(tree, new_node, failed_score)
    if value is None:
        return
    cur: NodeId | None = new_node
    while cur is not None:
        node = tree.node(cur)
        if node.kind in (NodeKind.ANSWER, NodeKind.ROOT):
            node.observations.append(value)
        cur = node.parent


def backup_a(
    tree: SearchTree, new_node: NodeId, failed_score: float | None = None
) -> None:
    """Aggregated-variant backup.

    The score goes to the new node, then to the gen node whose selection
    created it, then to that gen node's ancestors. Those ancestors are
    only answer/root and cont nodes, so a gen node only ever holds scores
    of answers created through it.
    """
    if tree.variant is not TreeVariant.A:
        raise ValueError("backup_a requires an a-variant tree")
    value = _backup_value(tree, new_node, failed_score)
    if value is None:
        return
    node = tree.node(new_node)
    node.observations.append(value)
    owner = answer_parent(tree, new_node)
    assert owner is not None
    gen_idx = (node.generator or 0) if tree.gens_per_node > 1 else 0
    gen = tree.node(gen_child(tree, owner, gen_idx))
    gen.observations.append(value)
    cur: NodeId | None = gen.parent
    while cur is not None:
        anc = tree.node(cur)
        anc.observations.append(value)
        cur = anc.parent


def backup_plain(
    tree: SearchTree, new_node: NodeId, failed_score: float | None = None
) -> None:
    """Classic full-path backup used by the baseline policies."""
    if tree.variant is not TreeVariant.PLAIN:
        raise ValueError("backup_plain requires a plain tree")
    value = _backup_value(tree, new_node, failed_score)
    if value is None:
        return
    cur: NodeId | None = new_node
    while cur is not None:
        node = tree.node(cur)
        node.observations.append(value)
        cur = node.parent


def backup(tree: SearchTree, new_node: NodeId, failed_score: float | None = None):
    """Variant dispatch for the three backup rules."""
    if tree.variant is TreeVariant.M:
        backup_m(tree, new_node, failed_score)
    elif tree.variant is TreeVariant.A:
        backup_a(tree, new_node, failed_score)
    else:
        backup_plain(tree, new_node, failed_score)


def select_best(tree: SearchTree) -> NodeId:
    """Scored answer node with the highest score; ties go to the latest."""
    best: NodeId | None = None
    best_key: tuple[float, int] | None = None
    for node in tree.nodes:
        if node.kind is not NodeKind.ANSWER or node.score is None:
            continue
        key = (node.score, node.created_at if node.created_at is not None else -1)
        if best_key is None or key > best_key:
            best, best_key = node.id, key
    if best is None:
        raise ValueError("tree holds no scored answer node")
    return best


def top_k(tree: SearchTree, k: int) -> list[NodeId]:
    """Top-k scored answers by (score desc, created_at desc)."""
    scored = [
        n
        for n in tree.nodes
        if n.kind is NodeKind.ANSWER and n.score is not None
    ]
    scored.sort(key=lambda n: (n.score, n.created_at), reverse=True)
    return [n.id for n in scored[:k]]


def _metric_visible(tree: SearchTree, include_failed: bool) -> list[Node]:
    out = []
    for node in tree.nodes:
        if node.kind is not NodeKind.ANSWER:
            continue
        if node.score is None and node.failed and not include_failed:
            continue
        out.append(node)
    return out


def tree_metrics(tree: SearchTree, include_failed: bool = False) -> TreeMetrics:
    """Shape metrics over answer nodes plus the root.

    Unscored failed nodes are omitted unless `include_failed` (set when a
    substitute score was backed up for them); depth still counts failed
    structural ancestors as levels.
    """
    visible = _metric_visible(tree, include_failed)
    visible_ids = {n.id for n in visible}
    depths = {n.id: answer_depth(tree, n.id) for n in visible}
    n_answers = len(visible)
    if n_answers:
        max_depth = max(depths.values())
        mean_depth = sum(depths.values()) / n_answers
    else:
        max_depth = 0
        mean_depth = 0.0
    per_level: dict[int, int] = {0: 1}
    for d in depths.values():
        per_level[d] = per_level.get(d, 0) + 1
    mean_width = sum(per_level.values()) / len(per_level)
    if mean_depth > 0 and mean_width > 0:
        log_ratio = math.log(mean_depth / mean_width)
    else:
        log_ratio = float("nan")
    histogram: dict[int, int] = {}
    for owner in [tree.node(tree.root)] + visible:
        degree = sum(
            1 for c in answer_children(tree, owner.id) if c in visible_ids
        )
        histogram[degree] = histogram.get(degree, 0) + 1
    return TreeMetrics(
        n_answer_nodes=n_answers,
        max_depth=max_depth,
        mean_depth=mean_depth,
        mean_width=mean_width,
        depth_width_log_ratio=log_ratio,
        degree_histogram=histogram,
    )


def check_invariants(tree: SearchTree) -> None:
    """Validator walk over the structural rules; raises on violation."""
    if not tree.nodes or tree.node(0).kind is not NodeKind.ROOT:
        raise AssertionError("node 0 must be the root")
    seen: set[NodeId] = set()
    stack = [tree.root]
    while stack:
        nid = stack.pop()
        if nid in seen:
            raise AssertionError(f"node {nid} reachable twice (cycle)")
        seen.add(nid)
        node = tree.node(nid)
        for cid in node.children:
            if tree.node(cid).parent != nid:
                raise AssertionError(f"child {cid} disowns parent {nid}")
            stack.append(cid)
    if len(seen) != len(tree.nodes):
        raise AssertionError("unreachable nodes present")
    for node in tree.nodes:
        if node.kind is NodeKind.ROOT:
            if node.parent is not None:
                raise AssertionError("root has a parent")
        elif node.parent is None:
            raise AssertionError(f"non-root node {node.id} has no parent")
        if node.kind is NodeKind.ANSWER:
            if node.payload is None:
                raise AssertionError(f"answer node {node.id} lacks a payload")
            if node.failed and node.score is not None:
                raise AssertionError(f"failed node {node.id} carries a score")
        if node.kind in (NodeKind.GEN, NodeKind.CONT):
            if node.payload is not None or node.score is not None:
                raise AssertionError("structural nodes carry no payload/score")
        if node.kind in (NodeKind.ROOT, NodeKind.ANSWER):
            gens = [
                c for c in node.children if tree.node(c).kind is NodeKind.GEN
            ]
            conts = [
                c for c in node.children if tree.node(c).kind is NodeKind.CONT
            ]
            if tree.variant is TreeVariant.M:
                if len(gens) != tree.gens_per_node or conts:
                    raise AssertionError(f"bad m-variant structure at {node.id}")
            elif tree.variant is TreeVariant.A:
                if len(gens) != tree.gens_per_node or len(conts) != 1:
                    raise AssertionError(f"bad a-variant structure at {node.id}")
                direct_answers = [
                    c for c in node.children if tree.node(c).kind is NodeKind.ANSWER
                ]
                if direct_answers:
                    raise AssertionError(
                        f"a-variant answers must hang under cont, node {node.id}"
                    )
            else:
                if gens or conts:
                    raise AssertionError("plain trees carry no gen/cont nodes")
        if node.kind is NodeKind.GEN and node.children:
            raise AssertionError(f"gen node {node.id} must stay childless")


# --- serialization ---------------------------------------------------------


def _node_to_dict(node: Node) -> dict:
    return {
        "id": node.id,
        "parent": node.parent,
        "kind": node.kind.value,
        "payload": node.payload,
        "score": node.score,
        "generator": node.generator,
        "created_at": node.created_at,
        "failed": node.failed,
        "feedback": node.feedback,
        "observations": node.observations,
        "children": node.children,
    }


def _node_from_dict(d: dict) -> Node:
    return Node(
        id=d["id"],
        parent=d["parent"],
        kind=NodeKind(d["kind"]),
        payload=d["payload"],
        score=d["score"],
        generator=d["generator"],
        created_at=d["created_at"],
        failed=d["failed"],
        feedback=d["feedback"],
        observations=list(d["observations"]),
        children=list(d["children"]),
    )


def export_records(tree: SearchTree) -> str:
    """Lossless single-document record; byte-stable for identical trees."""
    doc = {
        "format": "tree-record",
        "version": TREE_FORMAT_VERSION,
        "variant": tree.variant.value,
        "gens_per_node": tree.gens_per_node,
        "step": tree.step,
        "aborted": tree.aborted,
        "nodes": [_node_to_dict(n) for n in tree.nodes],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def import_records(text: str) -> SearchTree:
    doc = json.loads(text)
    if doc.get("format") != "tree-record":
        raise ValueError("not a tree record document")
    if doc.get("version") != TREE_FORMAT_VERSION:
        raise ValueError(f"unsupported tree record version {doc.get('version')}")
    tree = SearchTree(
        variant=TreeVariant(doc["variant"]),
        gens_per_node=doc["gens_per_node"],
        step=doc["step"],
        aborted=doc["aborted"],
        nodes=[_node_from_dict(d) for d in doc["nodes"]],
    )
    return tree


def _score_color(score: float) -> str:
    # low scores dark red, high scores green; clamped to [0, 1]
    s = min(1.0, max(0.0, score))
    red = int(round(205 * (1.0 - s))) + 50
    green = int(round(205 * s)) + 50
    return f"#{red:02x}{green:02x}50"


def export_dot(tree: SearchTree) -> str:
    """Graphviz rendering: answers colored by score, labeled by step order."""
    lines = ["digraph search_tree {", "  node [style=filled];"]
    for node in tree.nodes:
        if node.kind is NodeKind.ROOT:
            attrs = 'label="root", shape=doublecircle, fillcolor="#d0d0f0"'
        elif node.kind is NodeKind.GEN:
            label = "GEN" if tree.gens_per_node == 1 else f"GEN{node.generator}"
            attrs = f'label="{label}", shape=triangle, fillcolor="#f0e8c0"'
        elif node.kind is NodeKind.CONT:
            attrs = 'label="CONT", shape=box, fillcolor="#c0e8f0"'
        elif node.failed:
            attrs = (
                f'label="{node.created_at}", shape=circle, '
                'fillcolor="#bbbbbb", style="filled,dashed"'
            )
        else:
            score = node.score if node.score is not None else 0.0
            attrs = (
                f'label="{node.created_at}", shape=circle, '
                f'fillcolor="{_score_color(score)}"'
            )
        lines.append(f"  n{node.id} [{attrs}];")
    for node in tree.nodes:
        for cid in node.children:
            lines.append(f"  n{node.id} -> n{cid};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_tree(tree: SearchTree, fmt: str = "records") -> str:
    if fmt == "records":
        return export_records(tree)
    if fmt == "dot":
        return export_dot(tree)
    raise ValueError(f"unknown export format {fmt!r}")


def tree_prefix(
    tree: SearchTree, budget: int, failed_score: float | None = None
) -> SearchTree:
    """Replay the first `budget` generation steps into a fresh tree.

    Node creation order is total (the step counter), so the prefix of a
    long run is exactly the tree a shorter run would have produced.
    """
    out = new_tree(tree.variant, tree.gens_per_node)
    id_map = {tree.root: out.root}
    answers = sorted(
        (n for n in tree.nodes if n.kind is NodeKind.ANSWER),
        key=lambda n: n.created_at,
    )
    for node in answers:
        if node.created_at >= budget:
            break
        parent = answer_parent(tree, node.id)
        nid = add_answer_node(
            out,
            id_map[parent],
            payload=node.payload,
            score=node.score,
            generator=node.generator or 0,
            failed=node.failed,
            feedback=node.feedback,
        )
        id_map[node.id] = nid
        backup(out, nid, failed_score)
    out.aborted = tree.aborted and budget >= tree.step
    return out
