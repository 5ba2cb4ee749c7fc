"""Spatial operators and the semi-discrete right-hand side.

Divergence terms are written in flux form on the cell faces ``x_{i+1/2}``.
Face values are arithmetic means of nodal values, face derivatives are plain
differences of neighbouring nodes, and the two boundary nodes own half cells
closed by the physical boundary flux. With trapezoid weights every
divergence therefore telescopes to the boundary flux difference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .state import FieldState, Grid, Params

BCS = ("odd", "even", "one-sided")


class FloorViolation(ArithmeticError):
    """A field dropped to or below its abort floor."""

    def __init__(self, field: str, node: int, value: float, floor: float):
        self.field = field
        self.node = node
        self.value = value
        self.floor = floor
        super().__init__(f"{field}[{node}] = {value:.6g} <= floor {floor:.3g}")


@dataclass(frozen=True)
class Rhs:
    dv_dt: np.ndarray
    du_dt: np.ndarray
    dchi_dt: np.ndarray
    dtheta_dt: np.ndarray
    mu: np.ndarray

    def stacked(self) -> np.ndarray:
        return np.stack([self.dv_dt, self.du_dt, self.dchi_dt, self.dtheta_dt])


def _check_len(f, grid: Grid, n=None):
    f = np.asarray(f, dtype=float)
    want = grid.size if n is None else n
    if f.shape != (want,):
        raise ValueError(f"field has shape {f.shape}, expected ({want},)")
    return f


def ddx_central(f, grid: Grid, bc: str = "one-sided") -> np.ndarray:
    """Second-order nodal derivative.

    ``bc`` selects the endpoint rows: ``odd`` reflects f about its endpoint
    value (Dirichlet-type data such as u), ``even`` mirrors it (Neumann data,
    giving an exact zero), ``one-sided`` uses the biased three-point stencil.
    """
    f = _check_len(f, grid)
    h = grid.dx
    d = np.empty_like(f)
    d[1:-1] = (f[2:] - f[:-2]) / (2 * h)
    if bc == "even":
        d[0] = d[-1] = 0.0
    elif bc == "odd":
        d[0] = (f[1] - f[0]) / h
        d[-1] = (f[-1] - f[-2]) / h
    elif bc == "one-sided":
        # difference form keeps constants exactly at zero
        d[0] = (4 * (f[1] - f[0]) - (f[2] - f[0])) / (2 * h)
        d[-1] = (4 * (f[-1] - f[-2]) - (f[-1] - f[-3])) / (2 * h)
    else:
        raise ValueError(f"unknown bc {bc!r}; expected one of {BCS}")
    return d


def face_mean(f, grid: Grid) -> np.ndarray:
    f = _check_len(f, grid)
    return 0.5 * (f[1:] + f[:-1])


def face_diff(f, grid: Grid) -> np.ndarray:
    f = _check_len(f, grid)
    return np.diff(f) / grid.dx


def div_flux(flux_at_faces, grid: Grid, left: float = 0.0, right: float = 0.0) -> np.ndarray:
    """Conservative divergence of a face flux; ``left``/``right`` are boundary fluxes."""
    F = _check_len(flux_at_faces, grid, grid.n_cells)
    h = grid.dx
    d = np.empty(grid.size)
    d[1:-1] = (F[1:] - F[:-1]) / h
    d[0] = (F[0] - left) / (0.5 * h)
    d[-1] = (right - F[-1]) / (0.5 * h)
    return d


def _check_positive(state: FieldState, params: Params | None = None):
    p = params or Params()
    for name, floor in (("v", p.v_floor), ("theta", p.theta_floor)):
        a = getattr(state, name)
        bad = np.flatnonzero(~(a > floor))
        if bad.size:
            i = int(bad[0])
            raise FloorViolation(name, i, float(a[i]), floor)
    if p.alpha != 0.0:
        bad = np.flatnonzero(~(state.chi > p.chi_floor))
        if bad.size:
            i = int(bad[0])
            raise FloorViolation("chi", i, float(state.chi[i]), p.chi_floor)


def eval_mu(state: FieldState) -> np.ndarray:
    """Chemical potential -(chi_x / v)_x + chi^3 - chi with zero boundary flux."""
    g = state.grid
    if np.any(~(state.v > 0)):
        i = int(np.flatnonzero(~(state.v > 0))[0])
        raise FloorViolation("v", i, float(state.v[i]), 0.0)
    q = face_diff(state.chi, g) / face_mean(state.v, g)
    chi = state.chi
    return -div_flux(q, g) + (chi ** 3 - chi)


def momentum_fluxes(state: FieldState, params: Params) -> dict[str, np.ndarray]:
    """Face fluxes of the momentum equation, split by physical origin.

    ``du_dt`` in the interior is the divergence of
    ``-pressure + viscous - 0.5 * capillary``.
    """
    g = state.grid
    vf = face_mean(state.v, g)
    return {
        "pressure": face_mean(state.theta / state.v, g),
        "viscous": face_mean(params.eta(state.chi), g) * face_diff(state.u, g) / vf,
        "capillary": face_diff(state.chi, g) ** 2 / vf ** 2,
    }


def eval_rhs(state: FieldState, params: Params) -> Rhs:
    """Time derivatives of (v, u, chi, theta) for the Lagrangian system."""
    _check_positive(state, params)
    g = state.grid
    dv, du, dchi, dth, mu = (np.empty(g.size) for _ in range(5))
    _kernels.rhs(state.v, state.u, state.chi, state.theta, g.dx,
                 float(params.alpha), float(params.beta), dv, du, dchi, dth, mu,
                 np.empty((5, g.size)))
    return Rhs(dv, du, dchi, dth, mu)


def eval_rhs_reference(state: FieldState, params: Params) -> Rhs:
    """Array-expression version of :func:`eval_rhs`, kept for cross-checking."""
    _check_positive(state, params)
    g = state.grid
    fl = momentum_fluxes(state, params)
    u_face = face_mean(state.u, g)
    dv = div_flux(u_face, g, left=state.u[0], right=state.u[-1])
    du = div_flux(-fl["pressure"] + fl["viscous"] - 0.5 * fl["capillary"], g)
    du[0] = du[-1] = 0.0
    mu = eval_mu(state)
    dchi = -state.v * mu
    heat = div_flux(face_mean(params.kappa(state.theta), g) * face_diff(state.theta, g)
                    / face_mean(state.v, g), g)
    ux = dv
    dth = (-state.theta / state.v * ux + heat
           + params.eta(state.chi) * ux ** 2 / state.v + state.v * mu ** 2)
    return Rhs(dv, du, dchi, dth, mu)
