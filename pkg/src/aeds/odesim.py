"""Fixed-step RK4 for expression-defined vector fields."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import EvalError, ShapeMismatch
from .expr import Chart, as_expr, compile_program
from .report import Report
from .sampling import Family


@dataclass
class OdeSystem:
    time: str
    state: tuple
    rhs: list

    def __post_init__(self):
        self.state = tuple(self.state)
        if len(self.rhs) != len(self.state):
            raise ShapeMismatch("one right-hand side per state coordinate")
        self.chart = Chart((self.time,) + self.state)
        self.rhs = [self.chart.parse(e) if isinstance(e, str) else as_expr(e) for e in self.rhs]
        self._program = compile_program(self.rhs, self.chart.coordinates)

    def field(self, t, x):
        pt = np.concatenate(([t], x)).reshape(1, -1)
        try:
            return kernels.run_program(self._program, pt)[0]
        except EvalError as err:
            raise EvalError(f"{err.reason} at {self.time}={t:.17g}", err.node, err.point) from None


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    h: float


def rk4(system, x0, t0, t1, h):
    """Classical RK4 with step ``h``; the final step is shortened to land on ``t1``."""
    if not h > 0:
        raise ValueError("step size must be positive")
    if not t1 > t0:
        raise ValueError("t1 must exceed t0")
    x = np.array(x0, dtype=float)
    if x.shape != (len(system.state),):
        raise ShapeMismatch(f"initial state needs {len(system.state)} entries")
    span = t1 - t0
    steps = span / h
    full = int(math.floor(steps + 1e-9))
    if abs(steps - round(steps)) < 1e-9:
        full = int(round(steps))
    times = [t0 + i * h for i in range(full + 1)]
    if t1 - times[-1] > 1e-12 * max(1.0, abs(t1)):
        times.append(t1)
    else:
        times[-1] = t1
    states = np.empty((len(times), len(x)))
    states[0] = x
    f = system.field
    for i in range(1, len(times)):
        t, dt = times[i - 1], times[i] - times[i - 1]
        k1 = f(t, x)
        k2 = f(t + dt / 2, x + dt / 2 * k1)
        k3 = f(t + dt / 2, x + dt / 2 * k2)
        k4 = f(t + dt, x + dt * k3)
        x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise EvalError(f"solution blew up at {system.time}={times[i]:.17g}", None,
                            {system.time: times[i]})
        states[i] = x
    return Trajectory(np.array(times), states, h)


def compare_closed_form(traj, exact, time="t", names=None, tol=None):
    """Per-coordinate max error of the trajectory against closed-form expressions of time."""
    if len(exact) != traj.states.shape[1]:
        raise ShapeMismatch("one closed form per state coordinate")
    chart = Chart((time,))
    exprs = [chart.parse(e) if isinstance(e, str) else as_expr(e) for e in exact]
    vals = kernels.run_program(compile_program(exprs, (time,)), traj.times.reshape(-1, 1))
    err = np.abs(traj.states - vals)
    names = names or [f"x{i + 1}" for i in range(len(exprs))]
    fams = []
    for j, name in enumerate(names):
        p = int(np.argmax(err[:, j]))
        worst = float(err[p, j])
        fams.append(Family(
            f"error[{name}]",
            worst,
            {time: float(traj.times[p])},
            True if tol is None else worst <= tol,
            len(traj.times),
        ))
    return Report("ode", fams, details={"steps": len(traj.times) - 1, "h": traj.h})
