"""Plain ``key=value`` run configuration."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .state import MIN_CELLS, PRESETS, Params, _PRESET_ALIASES


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())


def _ints(text: str) -> tuple:
    return tuple(int(x) for x in text.replace(";", ",").split(",") if x.strip())


def _opt_float(text: str):
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


def _opt_str(text: str):
    return None if text.strip().lower() in ("", "none") else text.strip()


@dataclass(frozen=True)
class RunConfig:
    n_cells: int = 128
    alpha: float = 0.0
    beta: float = 1.0
    t_end: float = 5.0
    cfl_safety: float = 0.4
    preset: str = "cosine-perturbation"
    amp_v: float = 0.1
    amp_u: float = 0.1
    amp_chi: float = 0.3
    chi_base: float = 0.7
    amp_theta: float = 0.1
    normalize: bool = True
    output_dir: str = "out"
    series_stride: int = 1
    ic_file: str | None = None
    sweep_alpha: tuple = ()
    sweep_beta: tuple = ()
    sweep_n_cells: tuple = ()
    repr_check_times: tuple = ()
    snapshot_dt: float | None = None
    v_floor: float = 1e-8
    theta_floor: float = 1e-8
    chi_floor: float = 1e-8
    tol_mp: float = 1e-8
    save_history: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.n_cells < MIN_CELLS:
            raise ConfigError(f"n_cells must be >= {MIN_CELLS}")
        self.params()  # Params carries the physical constraints
        preset = _PRESET_ALIASES.get(self.preset, self.preset)
        if preset not in PRESETS:
            raise ConfigError(f"preset must be one of {PRESETS}")
        if preset == "tabulated-file" and not self.ic_file:
            raise ConfigError("tabulated-file preset needs ic_file")
        if self.series_stride < 1:
            raise ConfigError("series_stride must be >= 1")
        if self.snapshot_dt is not None and not self.snapshot_dt > 0:
            raise ConfigError("snapshot_dt must be > 0")
        if any(not 0 < t <= self.t_end for t in self.repr_check_times):
            raise ConfigError("repr_check_times must lie in (0, t_end]")
        if any(a < 0 for a in self.sweep_alpha):
            raise ConfigError("sweep_alpha entries must be >= 0")
        if any(b <= 0 for b in self.sweep_beta):
            raise ConfigError("sweep_beta entries must be > 0")
        if any(n < MIN_CELLS for n in self.sweep_n_cells):
            raise ConfigError(f"sweep_n_cells entries must be >= {MIN_CELLS}")
        if not self.tol_mp >= 0:
            raise ConfigError("tol_mp must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def params(self) -> Params:
        try:
            return Params(alpha=self.alpha, beta=self.beta, v_floor=self.v_floor,
                          theta_floor=self.theta_floor, chi_floor=self.chi_floor,
                          cfl_safety=self.cfl_safety, t_end=self.t_end)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def check_times(self) -> tuple:
        if self.repr_check_times:
            return tuple(sorted(set(self.repr_check_times)))
        return (0.5 * self.t_end, self.t_end)

    def with_(self, **changes) -> "RunConfig":
        return replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            val = getattr(self, f.name)
            if isinstance(val, tuple):
                val = ",".join(repr(x) for x in val)
            elif val is None:
                val = "none"
            elif isinstance(val, float):
                val = repr(val)
            lines.append(f"{f.name}={val}")
        return "\n".join(lines) + "\n"


_PARSERS = {
    "n_cells": int, "alpha": float, "beta": float, "t_end": float, "cfl_safety": float,
    "preset": str.strip, "amp_v": float, "amp_u": float, "amp_chi": float,
    "chi_base": float, "amp_theta": float, "normalize": _bool, "output_dir": str.strip,
    "series_stride": int, "ic_file": _opt_str, "sweep_alpha": _floats,
    "sweep_beta": _floats, "sweep_n_cells": _ints, "repr_check_times": _floats,
    "snapshot_dt": _opt_float, "v_floor": float, "theta_floor": float,
    "chi_floor": float, "tol_mp": float, "save_history": _bool, "workers": int,
}
KEYS = tuple(_PARSERS)


def parse_config(source: str | Path | None = None, *, text: str | None = None,
                 overrides=()) -> RunConfig:
    """Parse a config file (or inline ``text``); ``overrides`` are extra lines."""
    if text is None:
        text = "" if source is None else Path(source).read_text()
    lines = text.splitlines() + list(overrides)
    values = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _PARSERS[key](val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
        try:
            RunConfig(**values)
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    return RunConfig(**values)
