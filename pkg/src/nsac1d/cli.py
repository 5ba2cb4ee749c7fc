"""Command line entry point: ``nsac1d {run,refine,sweep,validate,repr} ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict

from .config import ConfigError, parse_config
from .runner import (_initial_state, recompute_repr, run_refinement, run_single, run_sweep,
                     write_json)
from .state import normalize_initial_data, validate_initial_data
from .timestepper import SolverAbort


def _load(args):
    return parse_config(args.config, overrides=args.set or ())


def _add_common(p):
    p.add_argument("config", nargs="?", help="key=value config file (defaults if omitted)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key; may be repeated")
    p.add_argument("--out", help="output directory (overrides output_dir)")


def cmd_run(args) -> int:
    config = _load(args)
    try:
        res = run_single(config, args.out)
    except SolverAbort as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return 3
    if res.status == "refused":
        print(f"refused: {res.summary['reason']}", file=sys.stderr)
        return 2
    s = res.summary
    print(f"{res.out_dir}: passed={s['passed']} mass_drift={s['series']['drifts']['mass_drift']:.3g} "
          f"energy_drift={s['series']['drifts']['energy_drift']:.3g} "
          f"steps={s['steps']['accepted']}")
    for name, ok in s["series"]["verdicts"].items():
        print(f"  {name}: {'pass' if ok else 'FAIL'}")
    return 0 if s["passed"] else 1


def cmd_refine(args) -> int:
    config = _load(args)
    table = run_refinement(config, args.levels, args.out)
    cols = ("n_cells", "self_diff", "self_order", "energy_drift", "energy_order",
            "lyapunov_residual", "lyapunov_order", "repr_residual", "repr_order")
    print(" ".join(f"{c:>17}" for c in cols))
    for row in table.rows:
        cells = []
        for c in cols:
            v = row[c]
            cells.append(f"{v:>17.4g}" if isinstance(v, float) else f"{str(v):>17}")
        print(" ".join(cells))
    if table.failure:
        print(f"stopped: {table.failure}", file=sys.stderr)
        return 3
    return 0


def cmd_sweep(args) -> int:
    config = _load(args)
    rows = run_sweep(config, args.out, args.workers)
    for r in rows:
        print(f"alpha={r['alpha']:g} beta={r['beta']:g} n={r['n_cells']} {r['status']} "
              f"passed={r['passed']} min_v={r.get('min_v')} min_theta={r.get('min_theta')}")
    return 0 if all(r["passed"] for r in rows) else 1


def cmd_validate(args) -> int:
    config = _load(args)
    params = config.params()
    try:
        state = _initial_state(config)
    except ValueError as exc:
        print(json.dumps({"compliant": False, "reason": str(exc)}, indent=2))
        return 2
    if config.normalize:
        state = normalize_initial_data(state, params.theta_floor)
    report = asdict(validate_initial_data(state, params))
    if args.out:
        write_json(report, args.out)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0 if report["compliant"] else 2


def cmd_repr(args) -> int:
    out = recompute_repr(args.run_dir, args.times)
    for t, r in out.items():
        print(f"t={t}: residual_max={r['residual_max']:.6g} residual_l2={r['residual_l2']:.6g} "
              f"alpha0={r['alpha0']:.6g} B={r['B']:.6g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nsac1d", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="single run to t_end")
    _add_common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("refine", help="refinement ladder with observed orders")
    _add_common(p)
    p.add_argument("--levels", type=int, default=3)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("sweep", help="alpha x beta (x n_cells) sweep")
    _add_common(p)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="check the initial data only")
    _add_common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("repr", help="recompute the representation check from a stored run")
    p.add_argument("run_dir")
    p.add_argument("--times", type=float, nargs="+")
    p.set_defaults(func=cmd_repr)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
