"""Pure-Python kernels with the same contract as the compiled ones.

Evaluation is vectorised over points with numpy, one instruction at a time,
so the error that gets reported is the first failing instruction at the
first failing point, matching the compiled kernel.
"""

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _powi(x, n):
    m = -n if n < 0 else n
    result = np.ones_like(x)
    base = x.copy()
    while m:
        if m & 1:
            result = result * base
        base = base * base
        m >>= 1
    if n < 0:
        with np.errstate(divide="ignore"):
            return 1.0 / result
    return result


def run(op, a, b, imm, outputs, points, out):
    n = len(op)
    npts = points.shape[0]
    reg = [None] * n
    bad = np.zeros(npts, dtype=bool)
    first = np.full(npts, n, dtype=np.int64)
    with np.errstate(all="ignore"):
        for k in range(n):
            c = op[k]
            fail = None
            if c == 0:
                v = np.full(npts, imm[k])
            elif c == 1:
                v = points[:, a[k]].copy()
            elif c == 2:
                v = reg[a[k]] + reg[b[k]]
            elif c == 3:
                v = reg[a[k]] - reg[b[k]]
            elif c == 4:
                v = reg[a[k]] * reg[b[k]]
            elif c == 5:
                y = reg[b[k]]
                fail = (y == 0.0, 1)
                v = reg[a[k]] / y
            elif c == 6:
                v = -reg[a[k]]
            elif c == 7:
                x = reg[a[k]]
                if b[k] < 0:
                    fail = (x == 0.0, 1)
                v = _powi(x, int(b[k]))
            elif c == 8:
                v = np.exp(reg[a[k]])
            elif c == 9:
                x = reg[a[k]]
                fail = (x <= 0.0, 2)
                v = np.log(x)
            elif c == 10:
                v = np.sin(reg[a[k]])
            elif c == 11:
                v = np.cos(reg[a[k]])
            else:
                x = reg[a[k]]
                fail = (x < 0.0, 3)
                v = np.sqrt(x)
            reg[k] = v
            mask = ~np.isfinite(v)
            if fail is not None:
                mask = mask | fail[0]
            newly = mask & ~bad
            if newly.any():
                first[newly] = k
                bad |= newly
    if bad.any():
        p = int(np.argmax(bad))
        k = int(first[p])
        c = op[k]
        code = 4
        x = reg[a[k]][p] if c in (5, 7, 9, 12) else None
        if c == 5 and reg[b[k]][p] == 0.0:
            code = 1
        elif c == 7 and b[k] < 0 and x == 0.0:
            code = 1
        elif c == 9 and x <= 0.0:
            code = 2
        elif c == 12 and x < 0.0:
            code = 3
        for j, r in enumerate(outputs):
            out[:p, j] = reg[r][:p]
        return code, p, k
    for j, r in enumerate(outputs):
        out[:, j] = reg[r]
    return 0, -1, -1


def uniform01(seed, count, out):
    with np.errstate(over="ignore"):
        state = np.uint64(seed) + _GAMMA * np.arange(1, count + 1, dtype=np.uint64)
        z = state
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        z = z ^ (z >> np.uint64(31))
    out[:count] = (z >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
