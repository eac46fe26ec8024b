"""
Pure-NumPy batch kernel: vectorized postfix stack machine.

Fallback used when the compiled extension is unavailable. Any non-finite
intermediate poisons the affected points to NaN, mirroring the recursive
evaluator's undefined semantics.
"""

from __future__ import annotations

import numpy as np

_UNARY = {
    15: np.exp,
    16: np.log,
    17: np.sqrt,
    18: np.sin,
    19: np.cos,
    20: np.tan,
    21: np.arcsin,
    22: np.arccos,
    23: np.arctan,
}


def evaluate_program(
    codes: np.ndarray,
    args: np.ndarray,
    consts: np.ndarray,
    inputs: np.ndarray,
    stack_size: int,
    out: np.ndarray | None = None,
) -> np.ndarray:
    n = inputs.shape[0]
    stack = np.empty((stack_size, n), dtype=np.float64)
    # Once any intermediate is non-finite the point is undefined for good,
    # even if later arithmetic would mask it (e.g. nan ** 0 == 1).
    invalid = np.zeros(n, dtype=bool)
    top = 0
    with np.errstate(all="ignore"):
        for code, arg in zip(codes, args):
            if code == 0:
                stack[top] = consts[arg]
                top += 1
            elif code == 1:
                stack[top] = inputs[:, arg]
                top += 1
            elif code in _UNARY:
                stack[top - 1] = _UNARY[code](stack[top - 1])
            else:
                b = stack[top - 1]
                a = stack[top - 2]
                top -= 1
                if code == 10:
                    r = a + b
                elif code == 11:
                    r = a - b
                elif code == 12:
                    r = a * b
                elif code == 13:
                    r = a / b
                elif code == 14:
                    r = np.power(a, b)
                else:
                    raise ValueError(f"unknown opcode {code}")
                stack[top - 1] = r
            bad = ~np.isfinite(stack[top - 1])
            if bad.any():
                invalid |= bad
                stack[top - 1][bad] = np.nan
    result = stack[0]
    result[invalid] = np.nan
    if out is not None:
        out[:] = result
        return out
    return result.copy()
