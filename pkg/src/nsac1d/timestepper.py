"""Explicit RK4 time stepping with step rejection and a recorded history.

The history keeps full snapshots on a fixed time lattice plus running
trapezoid accumulators that are updated after *every* accepted step, so the
time integrals used by the representation formula do not depend on how
densely snapshots are stored.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels
from .discretization import FloorViolation, eval_rhs
from .state import FieldState, Params

logger = logging.getLogger(__name__)

_FIELD_OF_STATUS = {_kernels.BAD_V: "v", _kernels.BAD_THETA: "theta", _kernels.BAD_CHI: "chi"}


class RejectedStep(FloorViolation):
    """A trial step left some field at or below its floor."""


class SolverAbort(RuntimeError):
    """The step size underflowed without producing an admissible step."""

    def __init__(self, message: str, state: FieldState):
        super().__init__(message)
        self.state = state


@dataclass
class StepControl:
    dt_current: float
    dt_max: float
    rejects: int = 0
    accepted: int = 0
    cfl_safety: float = 0.4


def stable_dt(state: FieldState, params: Params) -> float:
    """Parabolic limit cfl * dx^2 / (2 max(eta/v, kappa/v, 1/v))."""
    return float(_kernels.stable_dt(state.v, state.chi, state.theta, state.grid.dx,
                                    float(params.alpha), float(params.beta),
                                    float(params.cfl_safety)))


def _floor_for(field_name: str, params: Params) -> float:
    return {"v": params.v_floor, "theta": params.theta_floor, "chi": params.chi_floor}[field_name]


def step_rk(state: FieldState, dt: float, params: Params) -> FieldState:
    """One classical RK4 step; raises RejectedStep if any stage hits a floor."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    y = state.stacked()
    k = eval_rhs(state, params).stacked()
    out = np.empty_like(y)
    work = np.empty((5,) + y.shape)
    st, node = _kernels.rk4_step(y, k, float(dt), state.grid.dx, float(params.alpha),
                                 float(params.beta), params.floors, out,
                                 work, np.empty((5, state.grid.size)))
    if st != _kernels.OK:
        name = _FIELD_OF_STATUS[st]
        row = {"v": 0, "chi": 2, "theta": 3}[name]
        floor = _floor_for(name, params)
        # the violation sits either in the last stage state or in the result
        value = out[row, node]
        if value > floor:
            value = work[3, row, node]
        raise RejectedStep(name, int(node), float(value), floor)
    return FieldState.from_stacked(state.grid, state.t + dt, out, state.normalized)


@dataclass
class History:
    """Snapshots on a time lattice plus exact running time integrals.

    ``acc_phi`` integrates the per-node integrand of the representation
    potential, ``acc_B`` the exponent of B(t) and ``acc_W`` the dissipation
    rate. Each snapshot stores the accumulator values at its time.
    """

    params: Params
    snapshot_dt: float
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    acc_phi_snap: list = field(default_factory=list)
    acc_B_snap: list = field(default_factory=list)
    acc_W_snap: list = field(default_factory=list)
    control: StepControl | None = None
    # running accumulators and integrands at the current time
    acc_phi: np.ndarray | None = None
    acc: np.ndarray | None = None
    f_phi: np.ndarray | None = None
    f_scal: np.ndarray | None = None
    cache: dict = field(default_factory=dict)

    @classmethod
    def start(cls, state: FieldState, params: Params, snapshot_dt: float | None = None):
        if snapshot_dt is None:
            snapshot_dt = state.grid.dx
        h = cls(params=params, snapshot_dt=float(snapshot_dt))
        try:
            rhs = eval_rhs(state, params)
        except FloorViolation as exc:
            raise SolverAbort(f"initial state violates a floor: {exc}", state) from exc
        m = state.grid.size
        h.acc_phi = np.zeros(m)
        h.acc = np.zeros(2)
        h.f_phi = np.empty(m)
        b, w = _kernels.integrands(state.stacked(), rhs.stacked(), rhs.mu, state.grid.dx,
                                   float(params.alpha), float(params.beta), h.f_phi)
        h.f_scal = np.array([b, w])
        dt0 = stable_dt(state, params)
        h.control = StepControl(dt_current=dt0, dt_max=dt0, cfl_safety=params.cfl_safety)
        h._snap(state)
        return h

    def _snap(self, state: FieldState):
        if self.times and not state.t > self.times[-1]:
            return
        self.times.append(float(state.t))
        self.states.append(state)
        self.acc_phi_snap.append(self.acc_phi.copy())
        self.acc_B_snap.append(float(self.acc[0]))
        self.acc_W_snap.append(float(self.acc[1]))

    @property
    def grid(self):
        return self.states[0].grid

    @property
    def initial(self) -> FieldState:
        return self.states[0]

    def index_of(self, t: float, tol: float = 1e-10) -> int:
        times = np.asarray(self.times)
        k = int(np.argmin(np.abs(times - t)))
        if abs(times[k] - t) > tol * max(1.0, abs(t)):
            raise ValueError(f"t={t} is not a snapshot time (recorded range "
                             f"[{times[0]}, {times[-1]}])")
        return k

    def __len__(self):
        return len(self.times)


def _event_times(t0: float, t1: float, spacing: float, extra=()) -> list[float]:
    inv = 1.0 / spacing
    # k / inv is exact for spacings like 1/128 or 0.05, k * spacing is not
    denom = round(inv) if abs(inv - round(inv)) <= 1e-9 * inv else None
    k = math.floor(t0 / spacing + 1e-9) + 1
    out = []
    while True:
        tk = k / denom if denom else k * spacing
        if not tk < t1 - 1e-12 * max(1.0, t1):
            break
        out.append(tk)
        k += 1
    out.extend(e for e in extra if t0 < e < t1)
    out.append(t1)
    return sorted(set(out))


def advance(state: FieldState, t_target: float, params: Params,
            record: History | None = None,
            on_snapshot: Callable[[FieldState, History], None] | None = None,
            extra_times=()) -> FieldState:
    """Integrate from ``state.t`` to exactly ``t_target``.

    A snapshot is stored at every multiple of ``record.snapshot_dt``, at each
    of ``extra_times`` and at ``t_target``; ``on_snapshot`` is called after
    each one. Raises SolverAbort when the step size underflows.
    """
    if t_target < state.t:
        raise ValueError(f"t_target={t_target} precedes state time {state.t}")
    if t_target == state.t:
        return state
    if record is None:
        record = History.start(state, params)
    elif not record.times or abs(record.times[-1] - state.t) > 1e-12:
        raise ValueError("history does not end at the state's time")

    g = state.grid
    y = state.stacked()
    ctl = record.control
    counters = np.array([ctl.accepted, ctl.rejects], dtype=np.int64)
    t = state.t
    for te in _event_times(t, t_target, record.snapshot_dt, extra_times):
        t, dt_cur, st, node = _kernels.integrate(
            y, t, te, ctl.dt_current, g.dx, float(params.alpha), float(params.beta),
            float(params.cfl_safety), params.floors, record.acc_phi, record.acc,
            record.f_phi, record.f_scal, counters)
        ctl.dt_current = dt_cur
        ctl.accepted, ctl.rejects = int(counters[0]), int(counters[1])
        current = FieldState.from_stacked(g, t, y, state.normalized)
        if st != _kernels.OK:
            raise SolverAbort(f"step size underflow at t={t:.6g} (node {node})", current)
        t = te
        current = current.evolve(t=te)
        ctl.dt_max = stable_dt(current, params)
        record._snap(current)
        if on_snapshot is not None:
            on_snapshot(current, record)
    return current
