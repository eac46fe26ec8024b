"""
Canonical text syntax for expression trees.

Infix with `^` for exponentiation, function-call form for unary operators,
and reserved identifiers `C`, `C1`, `C2`, ... for hidden constants. This
syntax is the interchange format between every module and the wire
protocol; `serialize` and `parse_expression` round-trip exactly on
canonical text.
"""

from __future__ import annotations

import re
from typing import Mapping

from .nodes import (
    Constant,
    Literal,
    Node,
    Operator,
    OperatorKind,
    Variable,
)

_FUNCTIONS = {
    "exp": OperatorKind.EXP,
    "log": OperatorKind.LOG,
    "ln": OperatorKind.LOG,
    "sqrt": OperatorKind.SQRT,
    "sin": OperatorKind.SIN,
    "cos": OperatorKind.COS,
    "tan": OperatorKind.TAN,
    "asin": OperatorKind.ASIN,
    "acos": OperatorKind.ACOS,
    "atan": OperatorKind.ATAN,
    "arcsin": OperatorKind.ASIN,
    "arccos": OperatorKind.ACOS,
    "arctan": OperatorKind.ATAN,
}

_CANONICAL_FUNCTION_NAME = {
    OperatorKind.EXP: "exp",
    OperatorKind.LOG: "log",
    OperatorKind.SQRT: "sqrt",
    OperatorKind.SIN: "sin",
    OperatorKind.COS: "cos",
    OperatorKind.TAN: "tan",
    OperatorKind.ASIN: "asin",
    OperatorKind.ACOS: "acos",
    OperatorKind.ATAN: "atan",
}

_RESERVED_CONSTANT = re.compile(r"^C[0-9]*$")

_TOKEN = re.compile(
    r"\s*(?:(?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>\*\*|[+\-*/^()]))"
)


class ParseError(ValueError):
    """Syntax or identifier error with the offending position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            raise ParseError(
                f"unexpected character {stripped[0]!r}",
                pos + (len(text[pos:]) - len(stripped)),
            )
        if m.lastgroup == "op" and m.group("op") == "**":
            tokens.append(("op", "^", m.start("op")))
        else:
            tokens.append((m.lastgroup, m.group(m.lastgroup), m.start(m.lastgroup)))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(
        self,
        text: str,
        known_vars: set[str] | None,
        known_consts: Mapping[str, Constant] | set[str] | None,
    ):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.known_vars = known_vars
        if known_consts is None:
            self.consts: dict[str, Constant] | None = None
        elif isinstance(known_consts, Mapping):
            self.consts = dict(known_consts)
        else:
            self.consts = {name: Constant(name) for name in known_consts}

    def peek(self) -> tuple[str, str, int] | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def next(self) -> tuple[str, str, int]:
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of input", len(self.text))
        self.i += 1
        return tok

    def expect_op(self, symbol: str) -> None:
        tok = self.peek()
        if tok is None or tok[0] != "op" or tok[1] != symbol:
            pos = tok[2] if tok else len(self.text)
            raise ParseError(f"expected {symbol!r}", pos)
        self.i += 1

    def parse(self) -> Node:
        node = self.expr()
        tok = self.peek()
        if tok is not None:
            raise ParseError(f"unexpected token {tok[1]!r}", tok[2])
        return node

    def expr(self) -> Node:
        node = self.term()
        while True:
            tok = self.peek()
            if tok is None or tok[0] != "op" or tok[1] not in "+-":
                return node
            self.i += 1
            kind = OperatorKind.ADD if tok[1] == "+" else OperatorKind.SUB
            node = Operator(kind, (node, self.term()))

    def term(self) -> Node:
        node = self.unary()
        while True:
            tok = self.peek()
            if tok is None or tok[0] != "op" or tok[1] not in "*/":
                return node
            self.i += 1
            kind = OperatorKind.MUL if tok[1] == "*" else OperatorKind.DIV
            node = Operator(kind, (node, self.unary()))

    def unary(self) -> Node:
        tok = self.peek()
        if tok is not None and tok[0] == "op" and tok[1] == "-":
            self.i += 1
            operand = self.unary()
            if isinstance(operand, Literal):
                return Literal(-operand.value)
            return Operator(OperatorKind.MUL, (Literal(-1.0), operand))
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        tok = self.peek()
        if tok is not None and tok[0] == "op" and tok[1] == "^":
            self.i += 1
            return Operator(OperatorKind.POW, (base, self.unary()))
        return base

    def atom(self) -> Node:
        tok = self.next()
        kind, value, pos = tok
        if kind == "number":
            return Literal(float(value))
        if kind == "op" and value == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        if kind == "ident":
            nxt = self.peek()
            if value in _FUNCTIONS and nxt is not None and nxt[1] == "(":
                self.i += 1
                arg = self.expr()
                self.expect_op(")")
                return Operator(_FUNCTIONS[value], (arg,))
            return self.identifier(value, pos)
        raise ParseError(f"unexpected token {value!r}", pos)

    def identifier(self, name: str, pos: int) -> Node:
        if self.consts is not None and name in self.consts:
            return self.consts[name]
        if self.known_vars is not None:
            if name in self.known_vars:
                return Variable(name)
            raise ParseError(f"unknown identifier {name!r}", pos)
        # Inference mode: reserved constant names become hidden constants.
        if _RESERVED_CONSTANT.match(name):
            return Constant(name)
        return Variable(name)


def parse_expression(
    text: str,
    known_vars: set[str] | None = None,
    known_consts: Mapping[str, Constant] | set[str] | None = None,
) -> Node:
    """Parse canonical-syntax text into an expression tree.

    When `known_vars` is given, identifiers outside
    `known_vars | known_consts` are rejected. Without it, identifiers
    matching the reserved pattern C, C1, C2, ... become hidden constants
    and everything else becomes a variable.
    """
    if not text or not text.strip():
        raise ParseError("empty expression", 0)
    return _Parser(text, known_vars, known_consts).parse()


def format_literal(value: float) -> str:
    """Round-trip-exact decimal rendering; integral values drop the '.0'."""
    if value == int(value) and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


# Precedence levels: add/sub = 1, mul/div = 2, pow = 3, atoms = 4.
_PRECEDENCE = {
    OperatorKind.ADD: 1,
    OperatorKind.SUB: 1,
    OperatorKind.MUL: 2,
    OperatorKind.DIV: 2,
    OperatorKind.POW: 3,
}

_INFIX_SYMBOL = {
    OperatorKind.ADD: "+",
    OperatorKind.SUB: "-",
    OperatorKind.MUL: "*",
    OperatorKind.DIV: "/",
    OperatorKind.POW: "^",
}


def _precedence(node: Node) -> int:
    if isinstance(node, Operator) and node.op in _PRECEDENCE:
        return _PRECEDENCE[node.op]
    return 4


def _needs_parens_left(parent: OperatorKind, child: Node) -> bool:
    child_prec = _precedence(child)
    parent_prec = _PRECEDENCE[parent]
    if parent is OperatorKind.POW:
        # pow is right-associative and binds tighter than unary minus.
        if isinstance(child, Literal) and child.value < 0:
            return True
        return child_prec <= parent_prec
    return child_prec < parent_prec


def _needs_parens_right(parent: OperatorKind, child: Node) -> bool:
    child_prec = _precedence(child)
    parent_prec = _PRECEDENCE[parent]
    if parent is OperatorKind.POW:
        # Right-associative: x ^ y ^ z parses as x ^ (y ^ z).
        return child_prec < parent_prec
    # +, -, *, / are left-associative: a - (b - c), a * (b / c), and a
    # trailing negative literal all need explicit grouping on the right.
    if isinstance(child, Literal) and child.value < 0:
        return True
    return child_prec <= parent_prec


def serialize(tree: Node) -> str:
    """Render a tree as canonical-syntax text; parse(serialize(t)) == t."""
    if isinstance(tree, Literal):
        return format_literal(tree.value)
    if isinstance(tree, (Variable, Constant)):
        return tree.name
    if tree.op in _INFIX_SYMBOL:
        left, right = tree.children
        left_text = serialize(left)
        if _needs_parens_left(tree.op, left):
            left_text = f"({left_text})"
        right_text = serialize(right)
        if _needs_parens_right(tree.op, right):
            right_text = f"({right_text})"
        return f"{left_text} {_INFIX_SYMBOL[tree.op]} {right_text}"
    return f"{_CANONICAL_FUNCTION_NAME[tree.op]}({serialize(tree.children[0])})"
