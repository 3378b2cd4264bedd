"""Compare the compiled and pure-Python evaluation kernels.

    python benchmarks/bench_kernels.py [--points N] [--repeat R]
"""

import argparse
import timeit

import numpy as np

from aeds import kernels
from aeds.expr import Chart, compile_program
from aeds.ip import structure_constants_from_entries, build_ip

SO3 = [(1, 2, 3, 1.0), (2, 3, 1, 1.0), (3, 1, 2, 1.0)]


def workloads():
    chart = Chart(("x", "y"))
    small = compile_program([chart.parse("x*y + sin(x)*exp(y) - x^3/(2 + y)")], chart.coordinates)
    ip = build_ip(3, structure_constants_from_entries(3, SO3), ["w1*w2 - t*w3", "w3^2 + w1", "t*w1*w2 + 1"])
    fields = [x for row in ip.phi for x in row] + [x for pl in ip.curv for row in pl for x in row]
    big = compile_program(fields, ip.chart.coordinates)
    return [("scalar expression", small, 2), ("so(3) phi + curvature", big, 4)]


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--points", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    impls = kernels.backends()
    print(f"backends: {', '.join(sorted(impls))} (selected: {kernels.BACKEND})")
    rng = np.random.default_rng(0)
    rows = []
    for label, prog, dim in workloads():
        pts = rng.uniform(-1, 1, size=(args.points, dim))
        packed = kernels.Packed(prog)
        ref = None
        for name, impl in sorted(impls.items()):
            t = min(timeit.repeat(lambda: kernels.run_program(packed, pts, impl), number=1, repeat=args.repeat))
            out = kernels.run_program(packed, pts, impl)
            if ref is None:
                ref = out
            agree = float(np.abs(out - ref).max())
            rows.append((label, name, len(prog.op), t, agree))
    n = args.points * 8
    for name, impl in sorted(impls.items()):
        t = min(timeit.repeat(lambda: kernels.uniform01(1, n, impl), number=1, repeat=args.repeat))
        rows.append((f"uniform01 x{n}", name, 0, t, 0.0))
    print(f"{'workload':28s} {'backend':8s} {'instrs':>6s} {'best s':>10s} {'max diff':>10s}")
    for label, name, ninst, t, agree in rows:
        print(f"{label:28s} {name:8s} {ninst:6d} {t:10.5f} {agree:10.2e}")


if __name__ == "__main__":
    main()
