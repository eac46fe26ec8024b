"""
Symmetry-only canonicalization of expression trees.

Commutative operands are sorted under a total order, associative chains
are flattened and re-associated to the left, and neutral elements
(x + 0, x * 1, x ^ 1) are removed. No algebraic rewriting happens beyond
these symmetries, so two trees compare structurally equal exactly when
they differ only by commutativity, associativity, or neutral elements.
"""

from __future__ import annotations

from .nodes import Literal, Node, Operator, OperatorKind
from .syntax import serialize


def _flatten(node: Node, kind: OperatorKind) -> list[Node]:
    if isinstance(node, Operator) and node.op is kind:
        out: list[Node] = []
        for child in node.children:
            out.extend(_flatten(child, kind))
        return out
    return [node]


def _sort_key(node: Node) -> tuple:
    # Literals first, ordered by value; everything else by serialized form.
    if isinstance(node, Literal):
        return (0, node.value, "")
    return (1, 0.0, serialize(node))


def _rebuild_left(kind: OperatorKind, operands: list[Node]) -> Node:
    node = operands[0]
    for operand in operands[1:]:
        node = Operator(kind, (node, operand))
    return node


_NEUTRAL = {OperatorKind.ADD: 0.0, OperatorKind.MUL: 1.0}


def canonicalize(tree: Node) -> Node:
    """Return the canonical form; idempotent and structure-deterministic."""
    if not isinstance(tree, Operator):
        return tree
    children = tuple(canonicalize(c) for c in tree.children)
    kind = tree.op
    if kind in _NEUTRAL:
        operands = []
        for child in children:
            operands.extend(_flatten(child, kind))
        neutral = _NEUTRAL[kind]
        operands = [
            n for n in operands
            if not (isinstance(n, Literal) and n.value == neutral)
        ]
        if not operands:
            return Literal(neutral)
        operands.sort(key=_sort_key)
        return _rebuild_left(kind, operands)
    if kind is OperatorKind.POW:
        base, exponent = children
        if isinstance(exponent, Literal) and exponent.value == 1.0:
            return base
    return Operator(kind, children)


def structurally_equal(a: Node, b: Node) -> bool:
    """Equality up to commutativity, associativity, and neutral elements."""
    return canonicalize(a) == canonicalize(b)
