# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""
Compiled batch kernel: scalar postfix stack machine over input rows.

Semantics match the pure-NumPy fallback: any non-finite intermediate
marks the point undefined (NaN) and aborts its evaluation.
"""

from libc.math cimport (
    acos, asin, atan, cos, exp, isfinite, log, NAN, pow, sin, sqrt, tan,
)

import numpy as np


def evaluate_program(
    int[::1] codes,
    int[::1] args,
    double[::1] consts,
    double[:, ::1] inputs,
    int stack_size,
    double[::1] out,
):
    cdef Py_ssize_t n = inputs.shape[0]
    cdef Py_ssize_t n_instr = codes.shape[0]
    cdef Py_ssize_t i, k
    cdef int top, code, arg
    cdef double a, b, v
    cdef bint bad
    cdef double[::1] stack = np.empty(stack_size, dtype=np.float64)

    for i in range(n):
        top = 0
        bad = False
        for k in range(n_instr):
            code = codes[k]
            arg = args[k]
            if code == 0:
                stack[top] = consts[arg]
                top += 1
            elif code == 1:
                stack[top] = inputs[i, arg]
                top += 1
            elif code < 15:
                b = stack[top - 1]
                a = stack[top - 2]
                top -= 1
                if code == 10:
                    v = a + b
                elif code == 11:
                    v = a - b
                elif code == 12:
                    v = a * b
                elif code == 13:
                    v = a / b if b != 0.0 else NAN
                else:
                    v = pow(a, b)
                stack[top - 1] = v
            else:
                a = stack[top - 1]
                if code == 15:
                    v = exp(a)
                elif code == 16:
                    v = log(a)
                elif code == 17:
                    v = sqrt(a)
                elif code == 18:
                    v = sin(a)
                elif code == 19:
                    v = cos(a)
                elif code == 20:
                    v = tan(a)
                elif code == 21:
                    v = asin(a)
                elif code == 22:
                    v = acos(a)
                else:
                    v = atan(a)
                stack[top - 1] = v
            if not isfinite(stack[top - 1]):
                bad = True
                break
        out[i] = NAN if bad else stack[0]
