"""Run orchestration and persistence: single runs, refinement ladders, sweeps."""

from __future__ import annotations

import csv
import gzip
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig, parse_config
from .diagnostics import DiagnosticsRecord, long_time_metrics, record, smallness_condition
from .representation import RepresentationError, reconstruct_v, write_comparison
from .state import (FieldState, Grid, make_initial_state, normalize_initial_data,
                    validate_initial_data)
from .timestepper import History, SolverAbort, advance

logger = logging.getLogger(__name__)

MASS_TOL = 1e-11
LYAP_STEP_TOL = 1e-9
THETA_BAR_UPPER_TOL = 1e-10
THETA_BAR_LOWER_TOL = 1e-6
NORMALIZED_TOL = 1e-12
ROUNDOFF = 1e-12

SERIES_FILE = "series.csv"
DECAY_FILE = "decay.csv"
SNAPSHOT_FILE = "snapshot_final.csv"
SUMMARY_FILE = "summary.json"
HISTORY_FILE = "history.csv.gz"
CONFIG_FILE = "config.txt"
FAILED_MARKER = "FAILED"


def _fmt(x) -> str:
    return repr(float(x))


def _clean(obj):
    """Make a value JSON-safe: NaN/inf become None, numpy scalars become floats."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


# -- series CSV ------------------------------------------------------------

def write_series(records, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(DiagnosticsRecord.CSV_FIELDS) + "\n")
        for r in records:
            fh.write(",".join(_fmt(x) for x in r.csv_row()) + "\n")


def read_series(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != DiagnosticsRecord.CSV_FIELDS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [{k: float(v) for k, v in row.items()} for row in reader]


def summarize_series(rows, tol_mp: float = 1e-8) -> dict:
    """Invariant verdicts and drift figures computed from series rows alone.

    Whether the data was normalized is read off the first row (unit mass and
    unit energy), gamma1 is exp(-lyapunov at t0) and the lower bound of the
    maximum principle is the initial minimum of chi.
    """
    rows = list(rows)
    if not rows:
        raise ValueError("empty series")
    col = {k: np.array([r[k] for r in rows], dtype=float) for k in DiagnosticsRecord.CSV_FIELDS}
    t = col["t"]
    first = rows[0]
    normalized = (abs(first["mass"] - 1.0) <= NORMALIZED_TOL
                  and abs(first["total_energy"] - 1.0) <= NORMALIZED_TOL)
    gamma1 = math.exp(-first["lyapunov"])
    chi_lo = first["min_chi"]
    W = col["W"]
    lyap = col["lyapunov"]
    W_int = float(np.sum(0.5 * np.diff(t) * (W[1:] + W[:-1]))) if len(t) > 1 else 0.0

    drifts = {
        "mass_drift": float(np.max(np.abs(col["mass"] - first["mass"]))),
        "energy_drift": float(np.max(np.abs(col["total_energy"] - first["total_energy"]))),
        "energy_drift_final": float(col["total_energy"][-1] - first["total_energy"]),
        "lyapunov_residual": float(lyap[-1] - lyap[0] + W_int),
        "max_lyapunov_increase": float(np.max(np.diff(lyap), initial=0.0)),
        "theta_bar_min": float(col["theta_bar"].min()),
        "theta_bar_max": float(col["theta_bar"].max()),
        "repr_residual_max": (float(np.nanmax(col["repr_residual"]))
                              if np.any(np.isfinite(col["repr_residual"])) else float("nan")),
    }
    if normalized:
        drifts["mass_minus_one"] = float(np.max(np.abs(col["mass"] - 1.0)))

    verdicts = {
        "mass_conservation": drifts["mass_drift"] <= MASS_TOL * max(1.0, abs(first["mass"])),
        "W_nonnegative": bool(np.all(W >= 0)),
        "lyapunov_nonnegative": bool(np.all(lyap >= 0)),
        "lyapunov_nonincreasing": drifts["max_lyapunov_increase"] <= LYAP_STEP_TOL,
        "positivity": bool(np.all(col["min_v"] > 0) and np.all(col["min_theta"] > 0)),
        "max_principle": bool(np.all(col["min_chi"] >= chi_lo - tol_mp)
                              and np.all(col["max_chi"] <= 1.0 + tol_mp)),
    }
    if normalized:
        verdicts["theta_bar_band"] = bool(
            np.all(col["theta_bar"] <= 1.0 + THETA_BAR_UPPER_TOL)
            and np.all(col["theta_bar"] >= gamma1 - THETA_BAR_LOWER_TOL))
    return {
        "normalized": normalized, "gamma1": gamma1, "chi_lower_bound": chi_lo,
        "t_final": float(t[-1]), "n_samples": len(rows), "W_integral_trapezoid": W_int,
        "drifts": drifts, "verdicts": verdicts, "passed": all(verdicts.values()),
    }


# -- history persistence ---------------------------------------------------

_HISTORY_HEADER = "k,t,acc_B,acc_W,x,v,u,chi,theta,acc_phi"


def save_history(history: History, path) -> None:
    """Gzipped text table, one row per (snapshot, node); byte-stable across runs."""
    x = history.grid.nodes
    buf = io.StringIO()
    buf.write(_HISTORY_HEADER + "\n")
    for k, s in enumerate(history.states):
        block = np.column_stack([np.full(x.size, k), np.full(x.size, history.times[k]),
                                 np.full(x.size, history.acc_B_snap[k]),
                                 np.full(x.size, history.acc_W_snap[k]), x,
                                 s.v, s.u, s.chi, s.theta, history.acc_phi_snap[k]])
        np.savetxt(buf, block, fmt=["%d"] + ["%.17g"] * 9, delimiter=",")
    with open(path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", filename="",
                                                mtime=0) as gz:
        gz.write(buf.getvalue().encode())


def load_history(path, params) -> History:
    with gzip.open(path, "rt") as fh:
        header = fh.readline().strip()
        if header != _HISTORY_HEADER:
            raise ValueError(f"{path}: unexpected header {header!r}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    n_snap = int(data[-1, 0]) + 1
    m = data.shape[0] // n_snap
    if m * n_snap != data.shape[0]:
        raise ValueError(f"{path}: ragged history table")
    grid = Grid(m - 1)
    data = data.reshape(n_snap, m, -1)
    times = data[:, 0, 1]
    spacing = float(np.median(np.diff(times))) if n_snap > 1 else grid.dx
    h = History(params=params, snapshot_dt=spacing)
    for k in range(n_snap):
        d = data[k]
        h.times.append(float(d[0, 1]))
        h.states.append(FieldState(grid, float(d[0, 1]), d[:, 5], d[:, 6], d[:, 7], d[:, 8]))
        h.acc_phi_snap.append(d[:, 9].copy())
        h.acc_B_snap.append(float(d[0, 2]))
        h.acc_W_snap.append(float(d[0, 3]))
    return h


# -- single run ------------------------------------------------------------

@dataclass
class RunOutcome:
    status: str  # "ok", "refused" or "aborted"
    out_dir: Path
    summary: dict
    records: list = field(default_factory=list)
    history: History | None = None
    initial: FieldState | None = None
    final: FieldState | None = None


def _write_snapshot(state: FieldState, path) -> None:
    try:
        mu = state.mu
    except ArithmeticError:
        mu = np.full(state.grid.size, np.nan)
    cols = np.column_stack([state.grid.nodes, state.v, state.u, state.chi, state.theta, mu])
    np.savetxt(path, cols, fmt="%.17g", delimiter=",", header="x,v,u,chi,theta,mu",
               comments="")


def _write_decay(records, path) -> None:
    with open(path, "w") as fh:
        fh.write("t,theta_osc,u_max,chi_dev_l1,W_integral,chi_t_l2sq\n")
        for r in records:
            fh.write(",".join(_fmt(x) for x in (r.t, r.theta_osc, r.u_max, r.chi_dev_l1,
                                                  r.W_integral, r.chi_t_l2sq)) + "\n")


def _initial_state(config: RunConfig) -> FieldState:
    return make_initial_state(
        Grid(config.n_cells), config.preset, amp_v=config.amp_v, amp_u=config.amp_u,
        amp_chi=config.amp_chi, chi_base=config.chi_base, amp_theta=config.amp_theta,
        ic_file=config.ic_file)


def _smallness(records, alpha: float) -> dict:
    t = np.array([r.t for r in records])
    m1 = min(r.min_v for r in records)
    m2 = min(r.min_chi for r in records)
    m3 = min(r.min_theta for r in records)
    chi_t = np.array([r.chi_t_l2sq for r in records])
    chi_t_int = float(np.sum(0.5 * np.diff(t) * (chi_t[1:] + chi_t[:-1]))) if len(t) > 1 else 0.0
    N = math.sqrt(max(r.sobolev_E for r in records) + chi_t_int)
    out = {"m1": m1, "m2": m2, "m3": m3, "N": N}
    if min(m1, m2, m3, N) > 0:
        s = smallness_condition(m1, m2, m3, N, alpha)
        out.update(H=s.H, alphaH=s.alphaH, cond1=s.cond1, cond2=s.cond2)
    return out


def _near(t: float, targets) -> bool:
    return any(abs(t - s) <= 1e-10 * max(1.0, abs(s)) for s in targets)


def _write_partial(out: Path, records, state, extra: dict, exc) -> None:
    write_series(records, out / SERIES_FILE)
    _write_snapshot(state, out / SNAPSHOT_FILE)
    summary = {"status": "aborted", "passed": False, "failure": str(exc), **extra}
    write_json(summary, out / SUMMARY_FILE)
    (out / FAILED_MARKER).write_text(str(exc) + "\n")


def run_single(config: RunConfig, out_dir=None, *, keep_history: bool = False) -> RunOutcome:
    """Initial data, validation, integration to t_end and every output file.

    Non-compliant initial data is refused (status "refused"). A solver abort
    flushes the partial outputs, drops a FAILED marker and re-raises.
    """
    out = Path(out_dir if out_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / CONFIG_FILE).write_text(config.to_text())
    marker = out / FAILED_MARKER
    if marker.exists():
        marker.unlink()
    params = config.params()

    try:
        state = _initial_state(config)
    except ValueError as exc:
        summary = {"status": "refused", "reason": str(exc)}
        write_json(summary, out / SUMMARY_FILE)
        return RunOutcome("refused", out, summary)
    if config.normalize:
        state = normalize_initial_data(state, params.theta_floor)
    report = validate_initial_data(state, params)
    if not report.compliant:
        summary = {"status": "refused", "reason": "initial data not compliant",
                   "initial": asdict(report)}
        write_json(summary, out / SUMMARY_FILE)
        return RunOutcome("refused", out, summary)

    check_times = config.check_times
    snapshot_dt = config.snapshot_dt
    if snapshot_dt is None:
        # proportional to dx on every level, and at least 2 * n_cells snapshots
        # before the first representation check
        snapshot_dt = state.grid.dx * min(1.0, min(check_times) / 2)
    records = [record(state, params, 0.0)]
    try:
        history = History.start(state, params, snapshot_dt)
    except SolverAbort as exc:
        _write_partial(out, records, state, {"initial": asdict(report)}, exc)
        raise

    def on_snapshot(s: FieldState, h: History):
        k = len(h) - 1
        if k % config.series_stride == 0 or _near(s.t, check_times) or _near(s.t, [config.t_end]):
            records.append(record(s, params, h.acc_W_snap[-1]))

    abort = None
    try:
        final = advance(state, config.t_end, params, history, on_snapshot,
                        extra_times=check_times)
    except SolverAbort as exc:
        abort = exc
        final = exc.state
        logger.error("run aborted: %s", exc)

    repr_out = {}
    for tc in check_times:
        if tc > history.times[-1] + 1e-12:
            continue
        key = f"{tc:g}"
        try:
            res = reconstruct_v(history, tc)
        except RepresentationError as exc:
            repr_out[key] = {"error": str(exc)}
            continue
        for r in records:
            if _near(r.t, [res.t]):
                r.repr_residual = res.residual_max
        write_comparison(res, history.grid, out / f"repr_t{key}.csv")
        repr_out[key] = {"residual_max": res.residual_max, "residual_l2": res.residual_l2,
                         "alpha0": res.alpha0, "B": res.B_value,
                         "n_snapshots": res.n_snapshots}

    write_series(records, out / SERIES_FILE)
    _write_decay(records, out / DECAY_FILE)
    _write_snapshot(final, out / SNAPSHOT_FILE)
    if config.save_history:
        save_history(history, out / HISTORY_FILE)

    series = summarize_series((r.__dict__ for r in records), config.tol_mp)
    lyap0, lyap1 = records[0].lyapunov, records[-1].lyapunov
    ctl = history.control
    summary = {
        "status": "aborted" if abort else "ok",
        "initial": asdict(report),
        "series": series,
        "passed": series["passed"] and abort is None,
        "lyapunov_residual_exact_time": lyap1 - lyap0 + history.acc_W_snap[-1],
        "W_integral": history.acc_W_snap[-1],
        "repr": repr_out,
        "final": {k: getattr(records[-1], k) for k in
                  ("t", "min_v", "max_v", "min_theta", "max_theta", "min_chi", "max_chi",
                   "theta_bar", "lyapunov", "W")},
        "run_extrema": {"min_v": min(r.min_v for r in records),
                        "min_theta": min(r.min_theta for r in records),
                        "min_chi": min(r.min_chi for r in records),
                        "max_chi": max(r.max_chi for r in records)},
        "smallness": _smallness(records, params.alpha),
        "steps": {"accepted": ctl.accepted, "rejected": ctl.rejects,
                  "snapshots": len(history)},
    }
    if len(records) >= 2:
        summary["decay_trending_down"] = long_time_metrics(records).trending_down
    if abort is not None:
        summary["failure"] = str(abort)
    write_json(summary, out / SUMMARY_FILE)

    if abort is not None:
        marker.write_text(str(abort) + "\n")
        raise abort
    return RunOutcome("ok", out, summary, records, history if keep_history else None,
                      history.initial, final)


def recompute_repr(run_dir, times=None) -> dict:
    """Rebuild the representation comparison from a stored history."""
    run_dir = Path(run_dir)
    config = parse_config(run_dir / CONFIG_FILE)
    history = load_history(run_dir / HISTORY_FILE, config.params())
    out = {}
    for tc in (times or config.check_times):
        res = reconstruct_v(history, tc)
        write_comparison(res, history.grid, run_dir / f"repr_t{tc:g}.csv")
        out[f"{tc:g}"] = {"residual_max": res.residual_max, "residual_l2": res.residual_l2,
                          "alpha0": res.alpha0, "B": res.B_value}
    return out


# -- refinement ------------------------------------------------------------

def observed_order(coarse: float, fine: float):
    """log2 of the error ratio; "exact" when both are at roundoff."""
    if not (math.isfinite(coarse) and math.isfinite(fine)):
        return None
    if abs(coarse) <= ROUNDOFF and abs(fine) <= ROUNDOFF:
        return "exact"
    if fine == 0 or coarse == 0:
        return None
    return math.log2(abs(coarse) / abs(fine))


@dataclass
class RefinementTable:
    rows: list
    complete: bool
    failure: str | None = None

    def column(self, key):
        return [r[key] for r in self.rows]


_REFINE_COLS = ("n_cells", "self_diff", "self_order", "energy_drift", "energy_order",
                "lyapunov_residual", "lyapunov_order", "repr_residual", "repr_order")


def run_refinement(config: RunConfig, levels: int = 3, out_dir=None) -> RefinementTable:
    """Repeat the scenario at n_cells * 2^k and report observed orders.

    ``self_diff`` at level k compares the final fields with level k+1 on the
    shared nodes, so its order needs three levels.
    """
    if not 2 <= levels <= 5:
        raise ValueError(f"levels must be 2..5, got {levels}")
    out = Path(out_dir if out_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    finals, rows, failure = [], [], None
    for k in range(levels):
        n = config.n_cells * 2 ** k
        try:
            res = run_single(config.with_(n_cells=n), out / f"n{n}")
        except SolverAbort as exc:
            failure = f"n_cells={n}: {exc}"
            break
        if res.status != "ok":
            failure = f"n_cells={n}: {res.summary.get('reason')}"
            break
        s = res.summary
        last_repr = s["repr"].get(f"{config.check_times[-1]:g}", {})
        rows.append({"n_cells": n,
                     "energy_drift": abs(s["series"]["drifts"]["energy_drift_final"]),
                     "lyapunov_residual": abs(s["lyapunov_residual_exact_time"]),
                     "repr_residual": last_repr.get("residual_max", float("nan"))})
        finals.append(res.final)

    for k, row in enumerate(rows):
        if k + 1 < len(finals):
            a, b = finals[k], finals[k + 1]
            row["self_diff"] = max(float(np.max(np.abs(getattr(a, f) - getattr(b, f)[::2])))
                                   for f in ("v", "u", "chi", "theta"))
        else:
            row["self_diff"] = float("nan")
    for k, row in enumerate(rows):
        prev = rows[k - 1] if k else None
        for err, order in (("self_diff", "self_order"), ("energy_drift", "energy_order"),
                           ("lyapunov_residual", "lyapunov_order"),
                           ("repr_residual", "repr_order")):
            row[order] = observed_order(prev[err], row[err]) if prev else None

    with open(out / "refinement.csv", "w") as fh:
        fh.write(",".join(_REFINE_COLS) + "\n")
        for row in rows:
            fh.write(",".join("" if row[c] is None else str(row[c]) for c in _REFINE_COLS) + "\n")
    table = RefinementTable(rows, complete=failure is None and len(rows) == levels,
                            failure=failure)
    write_json(asdict(table), out / "refinement.json")
    return table


# -- sweep -----------------------------------------------------------------

_SWEEP_COLS = ("alpha", "beta", "n_cells", "status", "passed", "min_v", "min_theta",
               "alphaH", "cond1", "cond2", "failure")


def _sweep_job(args) -> dict:
    config, out_dir = args
    row = {"alpha": config.alpha, "beta": config.beta, "n_cells": config.n_cells}
    try:
        res = run_single(config, out_dir)
    except SolverAbort as exc:
        summary = json.loads((Path(out_dir) / SUMMARY_FILE).read_text())
        row.update(status="aborted", passed=False, failure=str(exc))
    except Exception as exc:  # recorded, the sweep goes on
        row.update(status="error", passed=False, failure=f"{type(exc).__name__}: {exc}")
        return row
    else:
        summary = res.summary
        row.update(status=res.status, passed=bool(summary.get("passed", False)),
                   failure=summary.get("reason"))
    ext = summary.get("run_extrema", {})
    sm = summary.get("smallness", {})
    row.update(min_v=ext.get("min_v"), min_theta=ext.get("min_theta"),
               alphaH=sm.get("alphaH"), cond1=sm.get("cond1"), cond2=sm.get("cond2"))
    return row


def run_sweep(config: RunConfig, out_dir=None, workers: int | None = None) -> list[dict]:
    """Cartesian product over the sweep axes; one subdirectory per entry."""
    if not (config.sweep_alpha or config.sweep_beta or config.sweep_n_cells):
        raise ValueError("sweep needs at least one of sweep_alpha, sweep_beta, sweep_n_cells")
    out = Path(out_dir if out_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = []
    for a in config.sweep_alpha or (config.alpha,):
        for b in config.sweep_beta or (config.beta,):
            for n in config.sweep_n_cells or (config.n_cells,):
                cfg = config.with_(alpha=a, beta=b, n_cells=n)
                jobs.append((cfg, out / f"alpha{a:g}_beta{b:g}_n{n}"))
    workers = workers or config.workers
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_job, jobs))
    else:
        rows = [_sweep_job(j) for j in jobs]
    with open(out / "sweep.csv", "w") as fh:
        fh.write(",".join(_SWEEP_COLS) + "\n")
        for row in rows:
            fh.write(",".join("" if row.get(c) is None else str(row[c])
                              for c in _SWEEP_COLS) + "\n")
    return rows
