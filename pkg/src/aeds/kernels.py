"""Kernel selection.

The compiled extension is used when it imports; setting ``AEDS_PURE_PYTHON=1``
forces the numpy fallback.  Both expose ``run`` and ``uniform01`` with the
same signatures and error codes.
"""

import os

import numpy as np

from . import _pykernels
from .errors import EvalError

_impl = _pykernels
BACKEND = "python"
if not os.environ.get("AEDS_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        pass

_REASONS = {
    1: "division by zero",
    2: "log of non-positive value",
    3: "sqrt of negative value",
    4: "non-finite value",
}


def backends():
    """Names of importable backends (fallback always present)."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels

        found["cython"] = _ckernels
    except ImportError:
        pass
    return found


class Packed:
    """Program arrays in the layout the kernels expect."""

    def __init__(self, program):
        self.program = program
        self.op = np.asarray(program.op, dtype=np.int32)
        self.a = np.asarray(program.a, dtype=np.int32)
        self.b = np.asarray(program.b, dtype=np.int32)
        self.imm = np.asarray(program.imm, dtype=np.float64)
        self.outputs = np.asarray(program.outputs, dtype=np.int32)


def run_program(program, points, impl=None):
    """Evaluate a compiled program on an ``(npoints, nvars)`` array.

    Returns an ``(npoints, noutputs)`` array or raises :class:`EvalError`.
    """
    impl = impl or _impl
    packed = program if isinstance(program, Packed) else Packed(program)
    pts = np.ascontiguousarray(points, dtype=np.float64)
    if pts.ndim != 2:
        raise ValueError("points must be a 2-d array")
    out = np.zeros((pts.shape[0], len(packed.outputs)), dtype=np.float64)
    if pts.shape[0] == 0 or len(packed.op) == 0:
        return out
    code, p, k = impl.run(packed.op, packed.a, packed.b, packed.imm, packed.outputs, pts, out)
    if code:
        prog = packed.program
        point = {name: float(pts[p, i]) for i, name in enumerate(prog.variables)}
        raise EvalError(_REASONS[code], prog.source[k], point)
    return out


def uniform01(seed, count, impl=None):
    impl = impl or _impl
    out = np.empty(count, dtype=np.float64)
    impl.uniform01(int(seed) & ((1 << 64) - 1), count, out)
    return out
