"""Independent reconstruction of the specific volume from recorded history.

The reconstruction writes ``v = B(t) D(x,t) A(x,t)`` with

* ``B`` the exponential of minus the accumulated space-time integral of
  ``(theta + u^2)/eta + chi_x^2/(2 eta v)``,
* ``D`` built from v0, the velocity potential ``u/eta`` and a mean-value
  point ``alpha0(t)``,
* ``A = 1 + int_0^t v J / (B D) dtau``.

Nothing here feeds back into the solver; it is a cross-check of the
simulated v.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diagnostics import cumulative_trapezoid, trapezoid
from .discretization import ddx_central, eval_mu
from .state import FieldState, Params
from .timestepper import History

MIN_SNAPSHOTS = 16


class RepresentationError(ValueError):
    pass


@dataclass(frozen=True)
class ReprResult:
    t: float
    v_repr: np.ndarray
    v_sim: np.ndarray
    alpha0: float
    B_value: float
    residual_max: float
    residual_l2: float
    a_factor: np.ndarray
    n_snapshots: int


def eval_g(state: FieldState, params: Params, chi_t=None) -> np.ndarray:
    """Correction field collecting every term that carries a factor alpha."""
    a = params.alpha
    if a == 0.0:
        return np.zeros(state.grid.size)
    if np.any(~(state.chi > params.chi_floor)):
        raise RepresentationError("eval_g needs chi above chi_floor")
    v, u, chi, th = state.v, state.u, state.chi, state.theta
    g = state.grid
    if chi_t is None:
        chi_t = -v * eval_mu(state)
    cx = ddx_central(chi, g, "even")
    ux = ddx_central(u, g, "odd")
    d_inv_eta = -a * chi ** (-a - 1)
    inv_eta_t = d_inv_eta * chi_t
    inv_eta_x = d_inv_eta * cx
    eta_x = a * chi ** (a - 1) * cx
    eta = chi ** a
    return -(u * inv_eta_t + th / v * inv_eta_x + cx ** 2 / (2 * v ** 2) * inv_eta_x
             + eta_x * ux / (eta * v))


def eval_J(state: FieldState, g_field, params: Params) -> np.ndarray:
    grid = state.grid
    eta = params.eta(state.chi)
    cx = ddx_central(state.chi, grid, "even")
    G = cumulative_trapezoid(g_field, grid)
    return (state.theta / (eta * state.v) + cx ** 2 / (2 * eta * state.v ** 2) + G
            - trapezoid(state.v * G, grid))


def _initial_potential(history: History) -> np.ndarray:
    s0 = history.initial
    key = "u0_over_eta0"
    if key not in history.cache:
        eta0 = history.params.eta(s0.chi)
        history.cache[key] = cumulative_trapezoid(s0.u / eta0, s0.grid)
    return history.cache[key]


def _check_t(history: History, t: float) -> int:
    try:
        return history.index_of(t)
    except ValueError as exc:
        raise RepresentationError(str(exc)) from None


def eval_phi(history: History, t: float) -> np.ndarray:
    k = _check_t(history, t)
    return history.acc_phi_snap[k] + _initial_potential(history)


def mean_value_point(phi, v, grid, tol: float = 1e-9) -> float:
    """Leftmost x where the linear interpolant of ``phi`` hits int v*phi dx."""
    phi = np.asarray(phi, dtype=float)
    target = trapezoid(np.asarray(v) * phi, grid)
    d = phi - target
    zero = np.abs(d) <= 1e-12 * max(1.0, abs(target))
    x = grid.nodes
    for i in range(grid.n_cells):
        if zero[i]:
            return float(x[i])
        if d[i] * d[i + 1] < 0:
            return float(x[i] + grid.dx * d[i] / (d[i] - d[i + 1]))
    if zero[-1]:
        return 1.0
    miss = float(np.min(np.abs(d)))
    if miss <= tol:
        return float(x[int(np.argmin(np.abs(d)))])
    raise RepresentationError(
        f"mean of phi ({target:.6g}) lies outside [{phi.min():.6g}, {phi.max():.6g}] "
        f"by {miss:.3g}; history broken or mass not normalized")


def find_alpha0(history: History, t: float) -> float:
    k = _check_t(history, t)
    cache = history.cache.setdefault("alpha0", {})
    if k not in cache:
        cache[k] = mean_value_point(eval_phi(history, t), history.states[k].v, history.grid)
    return cache[k]


def eval_B(history: History, t: float, params: Params | None = None) -> float:
    k = _check_t(history, t)
    return float(np.exp(-history.acc_B_snap[k]))


def _interp_at(f, grid, x0: float) -> float:
    return float(np.interp(x0, grid.nodes, f))


def eval_D(history: History, t: float, alpha0: float) -> np.ndarray:
    k = _check_t(history, t)
    grid = history.grid
    s = history.states[k]
    s0 = history.initial
    p = history.params
    U = cumulative_trapezoid(s.u / p.eta(s.chi), grid)
    U0 = _initial_potential(history)
    expo = U - _interp_at(U, grid, alpha0) - U0 + trapezoid(s0.v * U0, grid)
    return s0.v * np.exp(expo)


def _exp_weights(d: np.ndarray):
    """Integrals of e^{d r} (1 - r) and e^{d r} r over r in [0, 1]."""
    small = np.abs(d) < 1e-3
    ds = np.where(small, 1.0, d)
    ed = np.exp(ds)
    p1 = (ed - 1.0) / ds
    q = (ed * (ds - 1.0) + 1.0) / ds ** 2
    p1s = 1 + d / 2 + d ** 2 / 6 + d ** 3 / 24 + d ** 4 / 120
    qs = 0.5 + d / 3 + d ** 2 / 8 + d ** 3 / 30 + d ** 4 / 144
    p1 = np.where(small, p1s, p1)
    q = np.where(small, qs, q)
    return p1 - q, q


def reconstruct_v(history: History, t: float, params: Params | None = None) -> ReprResult:
    """Evaluate the representation formula at snapshot time ``t``.

    The time integral uses product integration over the snapshots: the factor
    ``1/(B D)`` is interpolated exponentially and ``v J`` linearly between
    neighbouring snapshots. This is second order in the snapshot spacing and
    exact when ``log(B D)`` is linear in time and ``v J`` is constant.
    """
    params = params or history.params
    k_end = _check_t(history, t)
    if t > 0 and k_end + 1 < MIN_SNAPSHOTS:
        raise RepresentationError(
            f"only {k_end + 1} snapshots cover [0, {t}]; need at least {MIN_SNAPSHOTS}")
    grid = history.grid

    E = []  # log(1 / (B D)) per snapshot
    F = []  # v J per snapshot
    for k in range(k_end + 1):
        tk = history.times[k]
        s = history.states[k]
        a0 = find_alpha0(history, tk)
        D = eval_D(history, tk, a0)
        g = eval_g(s, params)
        J = eval_J(s, g, params)
        E.append(history.acc_B_snap[k] - np.log(D))
        F.append(s.v * J)

    E_end = E[-1]
    total = np.exp(-E_end)  # = B(t) D(x, t)
    for k in range(k_end):
        h = history.times[k + 1] - history.times[k]
        w0, w1 = _exp_weights(E[k + 1] - E[k])
        total = total + h * np.exp(E[k] - E_end) * (w0 * F[k] + w1 * F[k + 1])

    s_end = history.states[k_end]
    diff = total - s_end.v
    B = float(np.exp(-history.acc_B_snap[k_end]))
    D_end = np.exp(history.acc_B_snap[k_end] - E_end)
    return ReprResult(
        t=float(history.times[k_end]), v_repr=total, v_sim=s_end.v.copy(),
        alpha0=find_alpha0(history, history.times[k_end]), B_value=B,
        residual_max=float(np.max(np.abs(diff))),
        residual_l2=float(np.sqrt(trapezoid(diff ** 2, grid))),
        a_factor=s_end.v / (B * D_end), n_snapshots=k_end + 1)


def write_comparison(result: ReprResult, grid, path) -> None:
    cols = np.column_stack([grid.nodes, result.v_sim, result.v_repr,
                            result.v_repr - result.v_sim])
    np.savetxt(path, cols, fmt="%.17g", delimiter=",", header="x,v_sim,v_repr,diff",
               comments="")
