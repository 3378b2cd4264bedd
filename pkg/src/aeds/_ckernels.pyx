# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: register-program evaluation and SplitMix64 sampling."""

from libc.math cimport exp, log, sin, cos, sqrt, isfinite, INFINITY
from libc.stdint cimport uint64_t
from libc.stdlib cimport malloc, free


cdef inline double _powi(double x, long n) nogil:
    cdef long m = -n if n < 0 else n
    cdef double result = 1.0
    cdef double base = x
    while m:
        if m & 1:
            result *= base
        base *= base
        m >>= 1
    if n < 0:
        if result == 0.0:
            return INFINITY
        return 1.0 / result
    return result


def run(int[::1] op, int[::1] a, int[::1] b, double[::1] imm,
        int[::1] outputs, double[:, ::1] points, double[:, ::1] out):
    """Evaluate the program at every row of ``points``.

    Returns ``(code, point, instruction)``; code 0 means success, otherwise
    1 division by zero, 2 log of non-positive, 3 sqrt of negative,
    4 non-finite result.
    """
    cdef Py_ssize_t n = op.shape[0]
    cdef Py_ssize_t npts = points.shape[0]
    cdef Py_ssize_t nout = outputs.shape[0]
    cdef Py_ssize_t p, k
    cdef double x, y, v = 0.0
    cdef int c
    cdef int code = 0
    cdef Py_ssize_t bad_p = -1, bad_k = -1
    cdef double *reg = <double *> malloc((n if n > 0 else 1) * sizeof(double))
    if reg == NULL:
        raise MemoryError()
    try:
        with nogil:
            for p in range(npts):
                for k in range(n):
                    c = op[k]
                    if c == 0:
                        v = imm[k]
                    elif c == 1:
                        v = points[p, a[k]]
                    elif c == 2:
                        v = reg[a[k]] + reg[b[k]]
                    elif c == 3:
                        v = reg[a[k]] - reg[b[k]]
                    elif c == 4:
                        v = reg[a[k]] * reg[b[k]]
                    elif c == 5:
                        y = reg[b[k]]
                        if y == 0.0:
                            code = 1
                        else:
                            v = reg[a[k]] / y
                    elif c == 6:
                        v = -reg[a[k]]
                    elif c == 7:
                        x = reg[a[k]]
                        if x == 0.0 and b[k] < 0:
                            code = 1
                        else:
                            v = _powi(x, b[k])
                    elif c == 8:
                        v = exp(reg[a[k]])
                    elif c == 9:
                        x = reg[a[k]]
                        if x <= 0.0:
                            code = 2
                        else:
                            v = log(x)
                    elif c == 10:
                        v = sin(reg[a[k]])
                    elif c == 11:
                        v = cos(reg[a[k]])
                    else:
                        x = reg[a[k]]
                        if x < 0.0:
                            code = 3
                        else:
                            v = sqrt(x)
                    if code == 0 and not isfinite(v):
                        code = 4
                    if code != 0:
                        bad_p = p
                        bad_k = k
                        break
                    reg[k] = v
                if code != 0:
                    break
                for k in range(nout):
                    out[p, k] = reg[outputs[k]]
    finally:
        free(reg)
    return code, bad_p, bad_k


def uniform01(unsigned long long seed, Py_ssize_t count, double[::1] out):
    """SplitMix64 stream mapped to [0, 1) with 53-bit resolution."""
    cdef uint64_t state = seed
    cdef uint64_t z
    cdef Py_ssize_t i
    with nogil:
        for i in range(count):
            state += 0x9E3779B97F4A7C15ULL
            z = state
            z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
            z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
            z = z ^ (z >> 31)
            out[i] = <double> (z >> 11) * (1.0 / 9007199254740992.0)
