"""
Recursive post-order evaluation of expression trees.

Defined results are always finite; domain violations (log or sqrt of a
negative, asin/acos outside [-1, 1], division by zero, fractional powers
of negatives) yield undefined(domain-error) and any intermediate past the
largest finite double yields undefined(overflow). Evaluation never raises
for finite bindings; a missing variable binding is a caller bug and does
raise.
"""

from __future__ import annotations

import math
from typing import Mapping

from .nodes import (
    Constant,
    EvalResult,
    Literal,
    Node,
    Operator,
    OperatorKind,
    Variable,
)

DOMAIN_ERROR = "domain-error"
OVERFLOW = "overflow"


class MissingBindingError(KeyError):
    """Raised when a variable has no binding; distinct from undefined."""


class _Undefined(Exception):
    def __init__(self, reason: str):
        self.reason = reason


def _check(value: float) -> float:
    if math.isinf(value):
        raise _Undefined(OVERFLOW)
    if math.isnan(value):
        raise _Undefined(DOMAIN_ERROR)
    return value


def _apply(op: OperatorKind, args: list[float]) -> float:
    if op is OperatorKind.ADD:
        return _check(args[0] + args[1])
    if op is OperatorKind.SUB:
        return _check(args[0] - args[1])
    if op is OperatorKind.MUL:
        return _check(args[0] * args[1])
    if op is OperatorKind.DIV:
        if args[1] == 0.0:
            raise _Undefined(DOMAIN_ERROR)
        return _check(args[0] / args[1])
    if op is OperatorKind.POW:
        base, exponent = args
        if base < 0.0 and exponent != int(exponent):
            raise _Undefined(DOMAIN_ERROR)
        if base == 0.0 and exponent < 0.0:
            raise _Undefined(DOMAIN_ERROR)
        try:
            return _check(math.pow(base, exponent))
        except (OverflowError, ValueError):
            raise _Undefined(OVERFLOW) from None
    if op is OperatorKind.EXP:
        try:
            return _check(math.exp(args[0]))
        except OverflowError:
            raise _Undefined(OVERFLOW) from None
    if op is OperatorKind.LOG:
        if args[0] <= 0.0:
            raise _Undefined(DOMAIN_ERROR)
        return _check(math.log(args[0]))
    if op is OperatorKind.SQRT:
        if args[0] < 0.0:
            raise _Undefined(DOMAIN_ERROR)
        return _check(math.sqrt(args[0]))
    if op is OperatorKind.SIN:
        return _check(math.sin(args[0]))
    if op is OperatorKind.COS:
        return _check(math.cos(args[0]))
    if op is OperatorKind.TAN:
        return _check(math.tan(args[0]))
    if op is OperatorKind.ASIN:
        if not -1.0 <= args[0] <= 1.0:
            raise _Undefined(DOMAIN_ERROR)
        return _check(math.asin(args[0]))
    if op is OperatorKind.ACOS:
        if not -1.0 <= args[0] <= 1.0:
            raise _Undefined(DOMAIN_ERROR)
        return _check(math.acos(args[0]))
    if op is OperatorKind.ATAN:
        return _check(math.atan(args[0]))
    raise AssertionError(f"unhandled operator {op}")


def _evaluate(node: Node, bindings: Mapping[str, float]) -> float:
    if isinstance(node, Literal):
        return node.value
    if isinstance(node, Variable):
        try:
            value = bindings[node.name]
        except KeyError:
            raise MissingBindingError(node.name) from None
        return _finite_input(value)
    if isinstance(node, Constant):
        value = bindings.get(node.name, node.default_value)
        return _finite_input(value)
    args = [_evaluate(child, bindings) for child in node.children]
    return _apply(node.op, args)


def _finite_input(value: float) -> float:
    value = float(value)
    if math.isinf(value):
        raise _Undefined(OVERFLOW)
    if math.isnan(value):
        raise _Undefined(DOMAIN_ERROR)
    return value


def evaluate(tree: Node, bindings: Mapping[str, float] | None = None) -> EvalResult:
    """Evaluate the tree under the given bindings.

    Constants fall back to their default values unless overridden in
    `bindings`. Returns a defined finite value or an undefined marker.
    """
    try:
        return EvalResult.of(_evaluate(tree, bindings or {}))
    except _Undefined as exc:
        return EvalResult.undefined(exc.reason)
