"""Expression trees: parsing, canonical form, serialization, evaluation."""

from .canon import canonicalize, structurally_equal
from .compile import Program, backend_name, compile_tree, evaluate_batch
from .evaluate import DOMAIN_ERROR, OVERFLOW, MissingBindingError, evaluate
from .nodes import (
    BINARY_OPERATORS,
    Constant,
    EvalResult,
    Literal,
    Node,
    Operator,
    OperatorKind,
    UNARY_OPERATORS,
    Variable,
    constant_leaves,
    iter_nodes,
    node_at,
    node_count,
    op,
    replace_at,
    validate_tree,
    variable_names,
)
from .syntax import ParseError, format_literal, parse_expression, serialize

__all__ = [
    "BINARY_OPERATORS",
    "Constant",
    "DOMAIN_ERROR",
    "EvalResult",
    "Literal",
    "MissingBindingError",
    "Node",
    "Operator",
    "OperatorKind",
    "OVERFLOW",
    "ParseError",
    "Program",
    "UNARY_OPERATORS",
    "Variable",
    "backend_name",
    "canonicalize",
    "compile_tree",
    "constant_leaves",
    "evaluate",
    "evaluate_batch",
    "format_literal",
    "iter_nodes",
    "node_at",
    "node_count",
    "op",
    "parse_expression",
    "replace_at",
    "serialize",
    "structurally_equal",
    "validate_tree",
    "variable_names",
]
