"""Deterministic sample grids and numeric zero testing."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .expr import Chart, additive_terms, compile_program


@dataclass(frozen=True)
class SampleSpec:
    seed: int = 0
    count: int = 64
    box: tuple = ()
    tol_abs: float = 1e-9
    tol_rel: float = 1e-7

    def __post_init__(self):
        box = self.box
        if isinstance(box, dict):
            box = tuple(sorted((k, (float(v[0]), float(v[1]))) for k, v in box.items()))
        for name, (lo, hi) in box:
            if not lo < hi:
                raise ValueError(f"empty sampling interval for {name!r}")
        object.__setattr__(self, "box", tuple(box))
        if self.count < 1:
            raise ValueError("sample count must be positive")

    def interval(self, chart, name):
        for k, iv in self.box:
            if k == name:
                return iv
        return chart.interval(name)

    def derive(self, salt):
        """Same settings with an independent seed."""
        return replace(self, seed=(self.seed * 0x9E3779B1 + salt) & ((1 << 64) - 1))

    def describe(self, chart):
        return {
            "seed": self.seed,
            "count": self.count,
            "box": {c: list(self.interval(chart, c)) for c in chart.coordinates},
            "tol_abs": self.tol_abs,
            "tol_rel": self.tol_rel,
        }


def sample_points(chart, spec):
    """``spec.count`` points, coordinates drawn in declaration order."""
    dim = chart.dim
    u = kernels.uniform01(spec.seed, spec.count * dim).reshape(spec.count, dim)
    lo = np.array([spec.interval(chart, c)[0] for c in chart.coordinates])
    hi = np.array([spec.interval(chart, c)[1] for c in chart.coordinates])
    return lo + (hi - lo) * u


def evaluate_many(exprs, chart, points):
    """Values of ``exprs`` at ``points``; shape ``(npoints, len(exprs))``."""
    if not exprs:
        return np.zeros((len(points), 0))
    program = compile_program(list(exprs), chart.coordinates)
    return kernels.run_program(program, points)


@dataclass
class Family:
    """Outcome of checking that a family of residual expressions vanishes."""

    name: str
    max_residual: float
    worst_point: dict | None
    passed: bool
    count: int = 0
    required: bool = True
    note: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        out = {
            "name": self.name,
            "pass": self.passed,
            "max_residual": self.max_residual,
            "worst_point": self.worst_point,
            "instances": self.count,
            "required": self.required,
        }
        if self.note:
            out["note"] = self.note
        if self.extra:
            out.update(self.extra)
        return out


def zero_family(name, exprs, chart, spec, points=None, required=True, note=""):
    """Check every expression in ``exprs`` is numerically zero on the sample grid.

    A point passes when ``|e| <= tol_abs + tol_rel * scale`` with ``scale`` the
    largest magnitude among the top-level additive terms of ``e`` there.
    """
    exprs = list(exprs)
    if not exprs:
        return Family(name, 0.0, None, True, 0, required, note)
    if points is None:
        points = sample_points(chart, spec)
    term_lists = [additive_terms(e) for e in exprs]
    flat = list(exprs)
    slots = []
    for terms in term_lists:
        start = len(flat)
        flat.extend(terms)
        slots.append((start, len(flat)))
    values = evaluate_many(flat, chart, points)
    resid = np.abs(values[:, : len(exprs)])
    scale = np.empty_like(resid)
    for j, (s, t) in enumerate(slots):
        scale[:, j] = np.abs(values[:, s:t]).max(axis=1)
    ok = resid <= spec.tol_abs + spec.tol_rel * scale
    p, _ = np.unravel_index(int(np.argmax(resid)), resid.shape)
    worst = float(resid.max())
    point = {c: float(points[p, i]) for i, c in enumerate(chart.coordinates)}
    return Family(name, worst, point, bool(ok.all()), len(exprs), required, note)


def value_family(name, values, points, chart, threshold, required=True, note=""):
    """Family from precomputed residual magnitudes against a fixed threshold."""
    values = np.abs(np.asarray(values, dtype=float))
    if values.size == 0:
        return Family(name, 0.0, None, True, 0, required, note)
    flat = values.reshape(len(points), -1)
    p = int(np.argmax(flat.max(axis=1)))
    worst = float(flat.max())
    point = {c: float(points[p, i]) for i, c in enumerate(chart.coordinates)}
    return Family(name, worst, point, worst <= threshold, flat.shape[1], required, note)


def is_zero(e, spec=None, chart=None):
    """``(passed, max_residual)`` for a single expression."""
    spec = spec or SampleSpec()
    if chart is None:
        from .expr import free_vars

        chart = Chart(tuple(sorted(free_vars(e))))
    fam = zero_family("expr", [e], chart, spec)
    return fam.passed, fam.max_residual
