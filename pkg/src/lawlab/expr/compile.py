"""
Batch evaluation of expression trees via postfix programs.

A tree is compiled once into a flat stack-machine program, then evaluated
over whole input matrices. Two interchangeable kernels exist: a compiled
extension (`lawlab.expr._speedups`, Cython) and a pure-NumPy fallback
(`lawlab.expr._pure`). The compiled kernel is preferred automatically
when the extension built. Undefined points (domain errors or overflow)
come back as NaN; the semantics match the recursive evaluator exactly on
defined-vs-undefined for finite inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .nodes import Constant, Literal, Node, Operator, OperatorKind, Variable

try:
    from . import _speedups
except ImportError:  # pragma: no cover - depends on the build
    _speedups = None

from . import _pure

PUSH_CONST = 0
PUSH_VAR = 1

OPCODES = {
    OperatorKind.ADD: 10,
    OperatorKind.SUB: 11,
    OperatorKind.MUL: 12,
    OperatorKind.DIV: 13,
    OperatorKind.POW: 14,
    OperatorKind.EXP: 15,
    OperatorKind.LOG: 16,
    OperatorKind.SQRT: 17,
    OperatorKind.SIN: 18,
    OperatorKind.COS: 19,
    OperatorKind.TAN: 20,
    OperatorKind.ASIN: 21,
    OperatorKind.ACOS: 22,
    OperatorKind.ATAN: 23,
}


@dataclass(frozen=True)
class Program:
    """A compiled postfix program over a fixed variable order."""

    codes: np.ndarray  # int32, one opcode per instruction
    args: np.ndarray   # int32, constant-pool or variable-column index
    consts: np.ndarray  # float64 constant pool (literals + hidden constants)
    const_slots: dict[str, tuple[int, ...]]  # hidden-constant name -> slots
    var_order: tuple[str, ...]
    stack_size: int

    def const_pool(self, overrides: Mapping[str, float] | None) -> np.ndarray:
        """Constant pool with hidden-constant overrides applied."""
        if not overrides:
            return self.consts
        pool = self.consts.copy()
        for name, value in overrides.items():
            for slot in self.const_slots.get(name, ()):
                pool[slot] = value
        return pool


def compile_tree(tree: Node, var_order: tuple[str, ...] | list[str]) -> Program:
    """Flatten a tree into a postfix program over `var_order` columns."""
    var_index = {name: i for i, name in enumerate(var_order)}
    codes: list[int] = []
    args: list[int] = []
    consts: list[float] = []
    const_slots: dict[str, list[int]] = {}

    def emit(node: Node) -> int:
        if isinstance(node, Literal):
            codes.append(PUSH_CONST)
            args.append(len(consts))
            consts.append(node.value)
            return 1
        if isinstance(node, Constant):
            codes.append(PUSH_CONST)
            slot = len(consts)
            args.append(slot)
            consts.append(node.default_value)
            const_slots.setdefault(node.name, []).append(slot)
            return 1
        if isinstance(node, Variable):
            if node.name not in var_index:
                raise KeyError(f"variable {node.name!r} not in var_order")
            codes.append(PUSH_VAR)
            args.append(var_index[node.name])
            return 1
        depths = []
        for i, child in enumerate(node.children):
            depths.append(i + emit(child))
        codes.append(OPCODES[node.op])
        args.append(-1)
        # After an operator, the stack shrinks back to one result; the
        # transient peak is child depth plus the operands already held.
        return max(depths) if depths else 1

    depth = emit(tree)
    return Program(
        codes=np.asarray(codes, dtype=np.int32),
        args=np.asarray(args, dtype=np.int32),
        consts=np.asarray(consts, dtype=np.float64),
        const_slots={k: tuple(v) for k, v in const_slots.items()},
        var_order=tuple(var_order),
        stack_size=max(depth, 1),
    )


def backend_name() -> str:
    """Which batch kernel is active: 'compiled' or 'pure'."""
    return "compiled" if _speedups is not None else "pure"


def evaluate_batch(
    program: Program,
    inputs: np.ndarray,
    const_overrides: Mapping[str, float] | None = None,
    backend: str | None = None,
) -> np.ndarray:
    """Evaluate the program on an (n, n_vars) input matrix.

    Returns an n-vector of results with NaN marking undefined points.
    `backend` forces a kernel ('compiled' or 'pure'); the default picks
    the compiled extension when available.
    """
    inputs = np.ascontiguousarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != len(program.var_order):
        raise ValueError(
            f"inputs must be (n, {len(program.var_order)}), got {inputs.shape}"
        )
    pool = program.const_pool(const_overrides)
    if backend is None:
        backend = backend_name()
    if backend == "compiled":
        if _speedups is None:
            raise RuntimeError("compiled kernel requested but not built")
        out = np.empty(inputs.shape[0], dtype=np.float64)
        _speedups.evaluate_program(
            program.codes, program.args, pool, inputs, program.stack_size, out
        )
        return out
    if backend == "pure":
        return _pure.evaluate_program(
            program.codes, program.args, pool, inputs, program.stack_size
        )
    raise ValueError(f"unknown backend {backend!r}")
