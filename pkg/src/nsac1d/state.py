"""Grid, parameters, field state and initial data.

All fields are collocated at the nodes ``x_i = i * dx`` of the mass coordinate
interval [0, 1]. Velocity carries a homogeneous Dirichlet condition; phase
field and temperature are Neumann, which the operators enforce through an
even reflection across each endpoint.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

MIN_CELLS = 8
PRESETS = ("steady", "cosine-perturbation", "tabulated-file")
_PRESET_ALIASES = {"cosine": "cosine-perturbation", "tabulated": "tabulated-file"}


@dataclass(frozen=True, eq=False)
class Grid:
    n_cells: int

    def __post_init__(self):
        if int(self.n_cells) != self.n_cells or self.n_cells < MIN_CELLS:
            raise ValueError(f"n_cells must be an integer >= {MIN_CELLS}, got {self.n_cells}")

    @property
    def dx(self) -> float:
        return 1.0 / self.n_cells

    @cached_property
    def nodes(self) -> np.ndarray:
        x = np.arange(self.n_cells + 1, dtype=float) / self.n_cells
        x.flags.writeable = False
        return x

    @cached_property
    def faces(self) -> np.ndarray:
        x = (np.arange(self.n_cells, dtype=float) + 0.5) / self.n_cells
        x.flags.writeable = False
        return x

    @cached_property
    def weights(self) -> np.ndarray:
        """Composite trapezoid weights."""
        w = np.full(self.n_cells + 1, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        w.flags.writeable = False
        return w

    @property
    def size(self) -> int:
        return self.n_cells + 1

    def __eq__(self, other):
        return isinstance(other, Grid) and other.n_cells == self.n_cells

    def __hash__(self):
        return hash(self.n_cells)


def build_grid(n_cells: int) -> Grid:
    return Grid(n_cells)


@dataclass(frozen=True)
class Params:
    """Physical exponents, fixed constants, abort floors and step control."""

    alpha: float = 0.0
    beta: float = 1.0
    R: float = 1.0
    c_v: float = 1.0
    eta_tilde: float = 1.0
    kappa_tilde: float = 1.0
    delta: float = 1.0
    v_floor: float = 1e-8
    theta_floor: float = 1e-8
    chi_floor: float = 1e-8
    cfl_safety: float = 0.4
    t_end: float = 5.0

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not self.beta > 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        for name in ("R", "c_v", "eta_tilde", "kappa_tilde", "delta"):
            if getattr(self, name) != 1.0:
                # the discrete operators are written for the unit-constant model
                raise ValueError(f"{name} is fixed to 1 in this model")
        for name in ("v_floor", "theta_floor", "chi_floor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError(f"cfl_safety must lie in (0, 1], got {self.cfl_safety}")
        if not self.t_end > 0:
            raise ValueError(f"t_end must be > 0, got {self.t_end}")

    def eta(self, chi):
        return _power(chi, self.alpha)

    def kappa(self, theta):
        return _power(theta, self.beta)

    @property
    def floors(self) -> np.ndarray:
        return np.array([self.v_floor, self.theta_floor, self.chi_floor])


def _power(x, a):
    x = np.asarray(x, dtype=float)
    if a == 0.0:
        return np.ones_like(x)
    if a == 1.0:
        return x.copy()
    if a == 2.0:
        return x * x
    return np.exp(a * np.log(x))


def _frozen(a, n):
    a = np.array(a, dtype=float)
    if a.shape != (n,):
        raise ValueError(f"field has shape {a.shape}, expected ({n},)")
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class FieldState:
    grid: Grid
    t: float
    v: np.ndarray
    u: np.ndarray
    chi: np.ndarray
    theta: np.ndarray
    normalized: bool = field(default=False)

    def __post_init__(self):
        n = self.grid.size
        for name in ("v", "u", "chi", "theta"):
            object.__setattr__(self, name, _frozen(getattr(self, name), n))

    @cached_property
    def mu(self) -> np.ndarray:
        from .discretization import eval_mu

        m = eval_mu(self)
        m.flags.writeable = False
        return m

    def stacked(self) -> np.ndarray:
        return np.stack([self.v, self.u, self.chi, self.theta])

    @classmethod
    def from_stacked(cls, grid: Grid, t: float, y: np.ndarray, normalized=False):
        return cls(grid, float(t), y[0], y[1], y[2], y[3], normalized)

    def evolve(self, **changes) -> "FieldState":
        return replace(self, **changes)


@dataclass(frozen=True)
class InitialDataReport:
    V0_estimate: float
    M0_estimate: float
    mass0: float
    energy0: float
    E0: float
    gamma1: float
    chi_min: float
    chi_max: float
    compliant: bool
    normalized: bool
    # the H^2/H^3 figures are discrete surrogates, not continuum norms
    norm_kind: str = "discrete-surrogate"


def make_initial_state(grid: Grid, preset: str = "cosine-perturbation", *,
                       amp_v: float = 0.1, amp_u: float = 0.1, amp_chi: float = 0.3,
                       chi_base: float = 0.7, amp_theta: float = 0.1,
                       chi_values=None, ic_file=None) -> FieldState:
    """Construct the t = 0 state for one of the presets.

    ``cosine-perturbation`` uses ``1 + amp*cos(pi x)`` for v and theta,
    ``chi_base + amp_chi*cos(pi x)`` for chi and ``amp_u*sin(pi x)`` for u, all
    of which are compatible with the boundary conditions. ``chi_values`` lets
    callers override the phase field of any preset.
    """
    preset = _PRESET_ALIASES.get(preset, preset)
    x = grid.nodes
    if preset == "steady":
        v = np.ones(grid.size)
        u = np.zeros(grid.size)
        chi = np.ones(grid.size)
        theta = np.ones(grid.size)
    elif preset == "cosine-perturbation":
        c = np.cos(np.pi * x)
        v = 1.0 + amp_v * c
        u = amp_u * np.sin(np.pi * x)
        chi = chi_base + amp_chi * c
        theta = 1.0 + amp_theta * c
    elif preset == "tabulated-file":
        if ic_file is None:
            raise ValueError("tabulated-file preset needs ic_file")
        v, u, chi, theta = load_tabulated(grid, ic_file)
    else:
        raise ValueError(f"unknown preset {preset!r}; expected one of {PRESETS}")

    if chi_values is not None:
        chi = np.asarray(chi_values, dtype=float)
    u = np.array(u, dtype=float)
    u[0] = u[-1] = 0.0

    if np.min(chi) <= 0 or np.max(chi) > 1.0 + 1e-12:
        raise ValueError(f"chi0 must lie in (0, 1], got range [{np.min(chi)}, {np.max(chi)}]")
    if np.min(v) <= 0:
        raise ValueError("v0 must be positive")
    if np.min(theta) <= 0:
        raise ValueError("theta0 must be positive")
    return FieldState(grid, 0.0, v, u, chi, theta)


def load_tabulated(grid: Grid, path):
    """Read ``x v u chi theta`` rows, one per node."""
    data = np.loadtxt(Path(path), comments="#", ndmin=2)
    if data.shape[1] != 5:
        raise ValueError(f"{path}: expected 5 columns (x v u chi theta), got {data.shape[1]}")
    if data.shape[0] != grid.size:
        raise ValueError(f"{path}: {data.shape[0]} rows but grid has {grid.size} nodes")
    if np.max(np.abs(data[:, 0] - grid.nodes)) > 1e-9:
        raise ValueError(f"{path}: x column does not match the uniform grid")
    return data[:, 1], data[:, 2], data[:, 3], data[:, 4]


def write_tabulated(state: FieldState, path) -> None:
    cols = np.column_stack([state.grid.nodes, state.v, state.u, state.chi, state.theta])
    np.savetxt(path, cols, fmt="%.17g", header="x v u chi theta")


def normalize_initial_data(state: FieldState, theta_floor: float = 1e-8) -> FieldState:
    """Rescale v to unit mass, then shift theta so the total energy is 1.

    If the shift would push theta to or below ``theta_floor`` the input is
    returned unchanged with ``normalized=False``.
    """
    from .diagnostics import conserved_quantities, trapezoid

    g = state.grid
    mass0 = trapezoid(state.v, g)
    scaled = state.evolve(v=state.v / mass0)
    _, energy = conserved_quantities(scaled)
    shift = (1.0 - energy) / trapezoid(np.ones(g.size), g)
    theta = scaled.theta + shift
    if np.min(theta) <= theta_floor:
        logger.warning("energy normalization needs theta shift %.3g; theta0 would drop to %.3g, "
                       "leaving data unnormalized", shift, np.min(theta))
        return state.evolve(normalized=False)
    return scaled.evolve(theta=theta, normalized=True)


def validate_initial_data(state: FieldState, params: Params | None = None) -> InitialDataReport:
    """Report the hypotheses of the global existence theorem for ``state``."""
    from .diagnostics import conserved_quantities, lyapunov_and_W, sobolev_norm

    params = params or Params()
    g = state.grid
    V0 = float(min(state.v.min(), state.chi.min(), state.theta.min()))
    low = np.sqrt(sum(sobolev_norm(f, g, 2) ** 2 for f in (state.v, state.u, state.theta)))
    M0 = float(low + sobolev_norm(state.chi, g, 3))
    mass0, energy0 = conserved_quantities(state)
    E0, _ = lyapunov_and_W(state, params)
    compliant = bool(V0 > 0 and state.chi.max() <= 1.0 + 1e-12)
    return InitialDataReport(
        V0_estimate=V0, M0_estimate=M0, mass0=mass0, energy0=energy0, E0=E0,
        gamma1=float(np.exp(-E0)), chi_min=float(state.chi.min()),
        chi_max=float(state.chi.max()), compliant=compliant,
        normalized=state.normalized)
