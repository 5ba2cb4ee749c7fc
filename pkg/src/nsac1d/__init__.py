"""Lagrangian 1D Navier-Stokes/Allen-Cahn solver with invariant monitoring."""

from .config import ConfigError, RunConfig, parse_config
from .diagnostics import (DiagnosticsRecord, bounds_monitor, conserved_quantities,
                          lyapunov_and_W, record, sobolev_norm, trapezoid)
from .discretization import FloorViolation, Rhs, ddx_central, div_flux, eval_mu, eval_rhs
from .representation import ReprResult, RepresentationError, reconstruct_v
from .runner import run_refinement, run_single, run_sweep, summarize_series
from .state import (FieldState, Grid, InitialDataReport, Params, build_grid,
                    make_initial_state, normalize_initial_data, validate_initial_data)
from .timestepper import History, SolverAbort, advance, stable_dt, step_rk

__version__ = "0.1.0"
