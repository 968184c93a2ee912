import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from adabranch.tree import (
    TreeVariant,
    add_answer_node,
    backup_a,
    backup_m,
    new_tree,
)


def build_fig2_tree():
    """Mixed-variant fixture: root with three children whose subtree
    score groups are (0.8, 0.8, 1.0), (0.0,) and (0.2, 0.3)."""
    t = new_tree(TreeVariant.M)
    n1 = add_answer_node(t, 0, "n1", 0.8)
    backup_m(t, n1)
    n2 = add_answer_node(t, 0, "n2", 0.0)
    backup_m(t, n2)
    n3 = add_answer_node(t, 0, "n3", 0.2)
    backup_m(t, n3)
    n1p = add_answer_node(t, n1, "n1p", 0.8)
    backup_m(t, n1p)
    n2p = add_answer_node(t, n1, "n2p", 1.0)
    backup_m(t, n2p)
    n3c = add_answer_node(t, n3, "n3c", 0.3)
    backup_m(t, n3c)
    return t, {"n1": n1, "n2": n2, "n3": n3, "n1p": n1p, "n2p": n2p, "n3c": n3c}


def build_fig3_tree():
    """Aggregated-variant fixture with the walkthrough observation state:
    root gen (0.8, 0.0, 0.2), root cont (0.8, 1.0, 0.3), n1 gen (0.8, 1.0)."""
    t = new_tree(TreeVariant.A)
    n1 = add_answer_node(t, 0, "n1", 0.8)
    backup_a(t, n1)
    n2 = add_answer_node(t, 0, "n2", 0.0)
    backup_a(t, n2)
    n3 = add_answer_node(t, 0, "n3", 0.2)
    backup_a(t, n3)
    c1 = add_answer_node(t, n1, "c1", 0.8)
    backup_a(t, c1)
    c2 = add_answer_node(t, n1, "c2", 1.0)
    backup_a(t, c2)
    d1 = add_answer_node(t, n3, "d1", 0.3)
    backup_a(t, d1)
    return t, {"n1": n1, "n2": n2, "n3": n3, "c1": c1, "c2": c2, "d1": d1}


@pytest.fixture
def fig2():
    return build_fig2_tree()


@pytest.fixture
def fig3():
    return build_fig3_tree()
