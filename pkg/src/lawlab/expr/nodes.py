"""
Expression-tree node types and structural utilities.

An expression is an immutable tree: leaves are variables, numeric literals,
or named hidden constants; internal nodes apply one of a closed set of 14
operators. Trees are plain frozen dataclasses so structural equality and
hashing come for free.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Union


class OperatorKind(Enum):
    """The closed operator set: 5 binary, 9 unary."""

    ADD = "add"
    SUB = "sub"
    MUL = "mul"
    DIV = "div"
    POW = "pow"
    EXP = "exp"
    LOG = "log"
    SQRT = "sqrt"
    SIN = "sin"
    COS = "cos"
    TAN = "tan"
    ASIN = "asin"
    ACOS = "acos"
    ATAN = "atan"

    @property
    def arity(self) -> int:
        return 2 if self in _BINARY else 1


_BINARY = frozenset({
    OperatorKind.ADD, OperatorKind.SUB, OperatorKind.MUL,
    OperatorKind.DIV, OperatorKind.POW,
})

UNARY_OPERATORS = frozenset(op for op in OperatorKind if op.arity == 1)
BINARY_OPERATORS = frozenset(_BINARY)


@dataclass(frozen=True)
class Variable:
    """An input variable leaf."""

    name: str


@dataclass(frozen=True)
class Literal:
    """A numeric literal leaf."""

    value: float


@dataclass(frozen=True)
class Constant:
    """A named hidden constant with a default value and an opaque units tag."""

    name: str
    default_value: float = 1.0
    units_tag: str = ""


@dataclass(frozen=True)
class Operator:
    """An internal operator node with an ordered child tuple."""

    op: OperatorKind
    children: tuple["Node", ...]

    def __post_init__(self) -> None:
        if len(self.children) != self.op.arity:
            raise ValueError(
                f"operator {self.op.value} expects {self.op.arity} "
                f"children, got {len(self.children)}"
            )


Node = Union[Variable, Literal, Constant, Operator]


def op(kind: OperatorKind, *children: Node) -> Operator:
    """Convenience constructor for operator nodes."""
    return Operator(kind, tuple(children))


def iter_nodes(tree: Node) -> Iterator[tuple[tuple[int, ...], Node]]:
    """Yield (path, node) pairs in pre-order; path is a child-index tuple."""
    stack = [((), tree)]
    while stack:
        path, node = stack.pop()
        yield path, node
        if isinstance(node, Operator):
            for i in reversed(range(len(node.children))):
                stack.append((path + (i,), node.children[i]))


def node_count(tree: Node) -> int:
    return sum(1 for _ in iter_nodes(tree))


def node_at(tree: Node, path: tuple[int, ...]) -> Node:
    """Return the node addressed by a child-index path from the root."""
    node = tree
    for i in path:
        if not isinstance(node, Operator) or i >= len(node.children):
            raise IndexError(f"no node at path {path}")
        node = node.children[i]
    return node


def replace_at(tree: Node, path: tuple[int, ...], new_node: Node) -> Node:
    """Return a copy of the tree with the node at `path` replaced."""
    if not path:
        return new_node
    if not isinstance(tree, Operator) or path[0] >= len(tree.children):
        raise IndexError(f"no node at path {path}")
    i = path[0]
    children = list(tree.children)
    children[i] = replace_at(children[i], path[1:], new_node)
    return Operator(tree.op, tuple(children))


def variable_names(tree: Node) -> set[str]:
    return {n.name for _, n in iter_nodes(tree) if isinstance(n, Variable)}


def constant_leaves(tree: Node) -> list[Constant]:
    """All constant leaves in pre-order, deduplicated by name."""
    seen: dict[str, Constant] = {}
    for _, n in iter_nodes(tree):
        if isinstance(n, Constant) and n.name not in seen:
            seen[n.name] = n
    return list(seen.values())


def validate_tree(tree: Node) -> None:
    """Check the structural invariants: arity (enforced at construction)
    and unique default per constant name within one tree."""
    defaults: dict[str, float] = {}
    for _, n in iter_nodes(tree):
        if isinstance(n, Constant):
            if n.name in defaults and defaults[n.name] != n.default_value:
                raise ValueError(
                    f"constant {n.name} appears with conflicting defaults"
                )
            defaults[n.name] = n.default_value


@dataclass(frozen=True)
class EvalResult:
    """A defined finite value or an undefined marker with a reason."""

    value: float | None
    reason: str | None = None  # "domain-error" | "overflow" when undefined

    @property
    def defined(self) -> bool:
        return self.value is not None

    @staticmethod
    def of(value: float) -> "EvalResult":
        return EvalResult(value=value)

    @staticmethod
    def undefined(reason: str) -> "EvalResult":
        return EvalResult(value=None, reason=reason)
