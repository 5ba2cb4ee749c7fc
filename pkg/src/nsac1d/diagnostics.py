"""Monitored functionals: conserved integrals, Lyapunov functional and its
dissipation rate, extremal bounds, discrete Sobolev norms, the smallness
bookkeeping for the a priori bounds and the Eulerian coordinate map.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .discretization import ddx_central, eval_mu, face_diff, face_mean
from .state import FieldState, Grid, Params


def trapezoid(f, grid: Grid) -> float:
    f = np.asarray(f, dtype=float)
    if f.shape != (grid.size,):
        raise ValueError(f"field has shape {f.shape}, expected ({grid.size},)")
    return float(np.dot(grid.weights, f))


def cumulative_trapezoid(f, grid: Grid) -> np.ndarray:
    """Running trapezoid integral from 0 to every node (first entry 0)."""
    f = np.asarray(f, dtype=float)
    if f.shape != (grid.size,):
        raise ValueError(f"field has shape {f.shape}, expected ({grid.size},)")
    out = np.zeros(grid.size)
    np.cumsum(0.5 * grid.dx * (f[1:] + f[:-1]), out=out[1:])
    return out


def Phi(s):
    s = np.asarray(s, dtype=float)
    return s - np.log(s) - 1.0


def _chi_x(state: FieldState) -> np.ndarray:
    return ddx_central(state.chi, state.grid, "even")


def gradient_energy(state: FieldState) -> float:
    """Integral of chi_x^2 / (2 v), by the midpoint rule on cell faces.

    This is the quadrature whose variational derivative in chi is exactly the
    discrete chemical potential, so the phase-field energy exchange balances
    without a stencil mismatch.
    """
    g = state.grid
    cx = face_diff(state.chi, g)
    return float(g.dx * np.sum(cx ** 2 / (2 * face_mean(state.v, g))))


def conserved_quantities(state: FieldState) -> tuple[float, float]:
    """(mass, total energy)."""
    g = state.grid
    chi = state.chi
    local = state.theta + 0.5 * state.u ** 2 + 0.25 * (chi ** 2 - 1) ** 2
    return trapezoid(state.v, g), trapezoid(local, g) + gradient_energy(state)


def lyapunov_and_W(state: FieldState, params: Params) -> tuple[float, float]:
    v, u, chi, th = state.v, state.u, state.chi, state.theta
    if np.any(~(v > 0)) or np.any(~(th > 0)):
        raise ValueError("lyapunov_and_W needs positive v and theta")
    g = state.grid
    lyap = trapezoid(0.5 * u ** 2 + 0.25 * (chi ** 2 - 1) ** 2 + Phi(v) + Phi(th), g)
    lyap += gradient_energy(state)
    tx = ddx_central(th, g, "even")
    ux = ddx_central(u, g, "odd")
    mu = eval_mu(state)
    W = trapezoid(params.kappa(th) * tx ** 2 / (v * th ** 2)
                  + params.eta(chi) * ux ** 2 / (v * th) + v * mu ** 2 / th, g)
    return lyap, W


@dataclass(frozen=True)
class Bounds:
    min_v: float
    max_v: float
    min_theta: float
    max_theta: float
    min_chi: float
    max_chi: float
    max_principle: bool


def bounds_monitor(state: FieldState, V0: float, tol_mp: float = 1e-8) -> Bounds:
    chi = state.chi
    lo, hi = float(chi.min()), float(chi.max())
    return Bounds(
        min_v=float(state.v.min()), max_v=float(state.v.max()),
        min_theta=float(state.theta.min()), max_theta=float(state.theta.max()),
        min_chi=lo, max_chi=hi,
        max_principle=bool(V0 - tol_mp <= lo and hi <= 1.0 + tol_mp))


def theta_bar_check(state: FieldState, gamma1: float, normalized: bool = True,
                    tol: float = 1e-10):
    """Mean temperature and whether it sits in [gamma1, 1].

    The band only applies to normalized data; otherwise ``in_band`` is None.
    """
    tb = trapezoid(state.theta, state.grid)
    if not normalized:
        return tb, None
    return tb, bool(gamma1 - tol <= tb <= 1.0 + tol)


def sobolev_norm(f, grid: Grid, order: int) -> float:
    """Discrete H^k norm: sqrt of the summed squared L2 norms of f, f', ..., f^(k)."""
    if order not in (0, 1, 2, 3):
        raise ValueError(f"order must be 0..3, got {order}")
    d = np.asarray(f, dtype=float)
    total = trapezoid(d ** 2, grid)
    for _ in range(order):
        d = ddx_central(d, grid, "one-sided")
        total += trapezoid(d ** 2, grid)
    return math.sqrt(total)


def sobolev_E(state: FieldState) -> float:
    """Instantaneous ||(v_x, u_x, chi_x, theta_x)||^2 in discrete H^1."""
    g = state.grid
    ders = (ddx_central(state.v, g, "one-sided"), ddx_central(state.u, g, "odd"),
            _chi_x(state), ddx_central(state.theta, g, "even"))
    return sum(sobolev_norm(d, g, 1) ** 2 for d in ders)


@dataclass(frozen=True)
class Smallness:
    H: float
    cond1: bool
    cond2: bool
    alphaH: float


def smallness_condition(m1: float, m2: float, m3: float, N: float, alpha: float) -> Smallness:
    """Smallness hypotheses under which v stays bounded above and below.

    The threshold for ``alpha * H`` is not known numerically, so it is
    reported raw.
    """
    if min(m1, m2, m3, N) <= 0:
        raise ValueError("m1, m2, m3 and N must be positive")
    H = (1.0 + 1.0 / m1 + 1.0 / m2 + 1.0 / m3 + N) ** 8
    return Smallness(H=H, cond1=bool(m2 ** (-alpha) <= 2.0),
                     cond2=bool((2.0 * N) ** alpha <= 1.0), alphaH=alpha * H)


def eulerian_map(state: FieldState) -> np.ndarray:
    """Physical position of each mass node (dx_eulerian/dx = v)."""
    return cumulative_trapezoid(state.v, state.grid)


@dataclass
class DiagnosticsRecord:
    t: float
    mass: float
    total_energy: float
    lyapunov: float
    W: float
    theta_bar: float
    min_v: float
    max_v: float
    min_theta: float
    max_theta: float
    min_chi: float
    max_chi: float
    sobolev_E: float
    repr_residual: float = float("nan")
    # decay monitors, not part of the series CSV
    theta_osc: float = 0.0
    u_max: float = 0.0
    chi_dev_l1: float = 0.0
    W_integral: float = 0.0
    chi_t_l2sq: float = 0.0

    CSV_FIELDS = ("t", "mass", "total_energy", "lyapunov", "W", "theta_bar",
                  "min_v", "max_v", "min_theta", "max_theta", "min_chi",
                  "max_chi", "sobolev_E", "repr_residual")

    def csv_row(self) -> list[float]:
        return [getattr(self, k) for k in self.CSV_FIELDS]

    def as_dict(self) -> dict:
        return asdict(self)


def record(state: FieldState, params: Params, W_integral: float = 0.0) -> DiagnosticsRecord:
    g = state.grid
    mass, energy = conserved_quantities(state)
    lyap, W = lyapunov_and_W(state, params)
    b = bounds_monitor(state, V0=0.0)
    tb = trapezoid(state.theta, g)
    chi_t = -state.v * state.mu
    return DiagnosticsRecord(
        t=state.t, mass=mass, total_energy=energy, lyapunov=lyap, W=W, theta_bar=tb,
        min_v=b.min_v, max_v=b.max_v, min_theta=b.min_theta, max_theta=b.max_theta,
        min_chi=b.min_chi, max_chi=b.max_chi, sobolev_E=sobolev_E(state),
        theta_osc=float(np.max(np.abs(state.theta - tb))),
        u_max=float(np.max(np.abs(state.u))),
        chi_dev_l1=trapezoid(np.abs(state.chi ** 2 - 1), g),
        W_integral=W_integral, chi_t_l2sq=trapezoid(chi_t ** 2, g))


@dataclass
class DecaySummary:
    t: list = field(default_factory=list)
    theta_osc: list = field(default_factory=list)
    u_max: list = field(default_factory=list)
    chi_dev_l1: list = field(default_factory=list)
    W_integral: list = field(default_factory=list)
    trending_down: dict = field(default_factory=dict)


def _trending_down(t, y) -> bool:
    """Least-squares slope over the final quartile is non-positive."""
    t = np.asarray(t)
    y = np.asarray(y)
    sel = t >= t[0] + 0.75 * (t[-1] - t[0])
    if sel.sum() < 2:
        sel = np.zeros_like(sel)
        sel[-2:] = True
    ts, ys = t[sel], y[sel]
    if np.ptp(ys) == 0:
        return True
    return bool(np.polyfit(ts - ts.mean(), ys, 1)[0] <= 0)


def long_time_metrics(records) -> DecaySummary:
    records = list(records)
    if len(records) < 2:
        raise ValueError("long_time_metrics needs at least two samples")
    out = DecaySummary(t=[r.t for r in records])
    for key in ("theta_osc", "u_max", "chi_dev_l1", "W_integral"):
        setattr(out, key, [getattr(r, key) for r in records])
    for key in ("theta_osc", "u_max", "chi_dev_l1"):
        out.trending_down[key] = _trending_down(out.t, getattr(out, key))
    return out
