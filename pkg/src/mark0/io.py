"""Flat key=value configs, CSV time series and JSON grid documents.

Config format: one ``key = value`` per line, ``#`` starts a comment, blank
lines are ignored. Booleans are ``true``/``false``; ``inf`` is accepted for
unbounded parameters. Every output file carries a schema string plus the
config and seeds that produced it, and is written to a temporary sibling
first then renamed into place.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

from .economy import RECORD_COLUMNS
from .experiments import (
    DEFAULT_T,
    DEFAULT_T_EQ,
    Axis,
    PhaseGrid,
    ShockResponse,
    ShockSpec,
    SweepSpec,
)
from .observables import RunRecord
from .params import ModelParams, ParameterError, PolicyParams

SCHEMA_TIMESERIES = "mark0.timeseries/1"
SCHEMA_GRID = "mark0.grid/1"
SCHEMA_SHOCK = "mark0.shock/1"
SIGNIFICANT_DIGITS = 12


class ConfigError(ValueError):
    """Bad config text; the message names the key and line."""


@dataclass(frozen=True)
class HarnessSettings:
    """Run, sweep and shock knobs that are not model or policy parameters."""

    T: int = DEFAULT_T
    t_eq: int = DEFAULT_T_EQ
    ensemble_size: int = 4
    x_name: str = "phi_pi"
    x_min: float = 0.0
    x_max: float = 2.0
    x_steps: int = 21
    y_name: str = "phi_eps"
    y_min: float = 0.0
    y_max: float = 2.0
    y_steps: int = 21
    rho_before: float = 0.02
    rho_after: float = 0.018
    t_shock: int = 7_000
    window_before: int = 2_000
    window_after: int = 2_000
    relative: bool = True


@dataclass(frozen=True)
class Config:
    model: ModelParams = field(default_factory=ModelParams)
    policy: PolicyParams = field(default_factory=PolicyParams)
    harness: HarnessSettings = field(default_factory=HarnessSettings)

    def flat(self) -> dict[str, Any]:
        out = asdict(self.model)
        out.update(asdict(self.policy))
        out.update(asdict(self.harness))
        return out

    def sweep_spec(self) -> SweepSpec:
        h = self.harness
        return SweepSpec(
            x=Axis(h.x_name, h.x_min, h.x_max, h.x_steps),
            y=Axis(h.y_name, h.y_min, h.y_max, h.y_steps),
            ensemble_size=h.ensemble_size, T=h.T, t_eq=h.t_eq, base_seed=self.model.seed,
        ).validate()

    def shock_spec(self) -> ShockSpec:
        h = self.harness
        return ShockSpec(
            rho_before=h.rho_before, rho_after=h.rho_after, t_shock=h.t_shock,
            window_before=h.window_before, window_after=h.window_after,
            relative=h.relative, t_eq=h.t_eq,
        ).validate()


_SECTIONS = (("model", ModelParams), ("policy", PolicyParams), ("harness", HarnessSettings))
_TYPES = {f.name: (section, f.type) for section, cls in _SECTIONS for f in fields(cls)}


def _parse_value(raw: str, kind: str):
    kind = kind if isinstance(kind, str) else kind.__name__
    if kind == "bool":
        low = raw.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ValueError(f"expected true or false, got {raw!r}")
    if kind == "int":
        value = float(raw)
        if not value.is_integer():
            raise ValueError(f"expected an integer, got {raw!r}")
        return int(value)
    if kind == "float":
        return float(raw)
    return raw


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "inf" if math.isinf(value) and value > 0 else repr(value)
    return str(value)


def _check_harness(h: HarnessSettings) -> None:
    if h.T < 1:
        raise ParameterError("T must be >= 1")
    if h.t_eq < 0:
        raise ParameterError("t_eq must be >= 0")
    if h.ensemble_size < 1:
        raise ParameterError("ensemble_size must be >= 1")
    if h.x_steps < 1 or h.y_steps < 1:
        raise ParameterError("axis steps must be >= 1")


def build_config(values: dict[str, Any], base: Config | None = None) -> Config:
    """Apply already-typed overrides to ``base`` and validate."""
    base = base or Config()
    parts = {name: {} for name, _ in _SECTIONS}
    for key, value in values.items():
        if key not in _TYPES:
            raise ConfigError(f"unknown key {key!r}")
        parts[_TYPES[key][0]][key] = value
    cfg = Config(
        replace(base.model, **parts["model"]),
        replace(base.policy, **parts["policy"]),
        replace(base.harness, **parts["harness"]),
    )
    cfg.model.validate()
    cfg.policy.validate()
    _check_harness(cfg.harness)
    return cfg


def parse_assignments(lines, base: Config | None = None, origin: str = "line") -> Config:
    """Parse ``key = value`` strings; errors name the key and its position."""
    values: dict[str, Any] = {}
    where: dict[str, str] = {}
    for lineno, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{origin} {lineno}: expected 'key = value', got {text!r}")
        key, raw = (s.strip() for s in text.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"{origin} {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{origin} {lineno}: duplicate key {key!r}")
        try:
            values[key] = _parse_value(raw, _TYPES[key][1])
        except ValueError as exc:
            raise ConfigError(f"{origin} {lineno}: bad value for {key!r}: {exc}") from None
        where[key] = f"{origin} {lineno}"
    try:
        return build_config(values, base)
    except ParameterError as exc:
        msg = str(exc)
        culprit = next((k for k in where if msg.startswith(k + " ") or f" {k} " in f" {msg} "), None)
        loc = f"{where[culprit]}: " if culprit else ""
        raise ConfigError(f"{loc}{msg}") from None


def parse_config(text: str) -> Config:
    return parse_assignments(text.splitlines())


def load_config(path) -> Config:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def format_config(cfg: Config) -> str:
    """Serialize every key; ``parse_config(format_config(c)) == c``."""
    lines = []
    for section, _ in _SECTIONS:
        lines.append(f"# {section}")
        for key, value in asdict(getattr(cfg, section)).items():
            lines.append(f"{key} = {_format_value(value)}")
    return "\n".join(lines) + "\n"


def _jsonable(value):
    if isinstance(value, float) and not math.isfinite(value):
        return "inf" if value > 0 else ("-inf" if value < 0 else "nan")
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return _jsonable(value.item())
    return value


def atomic_write(path, text: str) -> Path:
    """Write ``text`` to a temporary sibling, then rename it over ``path``."""
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    if not directory.is_dir():
        raise OSError(f"cannot write {path}: directory {directory} does not exist")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _fmt(x: float) -> str:
    return format(float(x), f".{SIGNIFICANT_DIGITS}g")


def _comment_header(schema: str, cfg: Config | None, seeds) -> list[str]:
    lines = [f"# schema: {schema}"]
    if seeds is not None:
        lines.append("# seeds: " + " ".join(str(int(s)) for s in seeds))
    if cfg is not None:
        lines += ["# config: " + ln for ln in format_config(cfg).splitlines() if not ln.startswith("#")]
    return lines


def timeseries_text(record: RunRecord, cfg: Config | None = None, seeds=None) -> str:
    buf = io.StringIO()
    for ln in _comment_header(SCHEMA_TIMESERIES, cfg, seeds):
        buf.write(ln + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RECORD_COLUMNS)
    for row in record.as_array():
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_timeseries(record: RunRecord, path, cfg: Config | None = None, seeds=None) -> Path:
    """CSV of the record: ``#`` comment lines, the header row, one row per step."""
    return atomic_write(path, timeseries_text(record, cfg, seeds))


def read_timeseries(path) -> RunRecord:
    with open(path, encoding="utf-8") as fh:
        rows = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(rows)
    header = next(reader)
    if tuple(header) != RECORD_COLUMNS:
        raise ValueError(f"unexpected header {header}")
    data = np.array([[float(v) for v in row] for row in reader], dtype=np.float64)
    return RunRecord.from_array(data.reshape(-1, len(RECORD_COLUMNS)))


def read_config_header(path) -> Config:
    """Config embedded in the comment lines of a CSV written here."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln[len("# config: "):] for ln in fh if ln.startswith("# config: ")]
    return parse_assignments(lines)


def shock_text(resp: ShockResponse, cfg: Config | None = None) -> str:
    buf = io.StringIO()
    for ln in _comment_header(SCHEMA_SHOCK, cfg, resp.seeds):
        buf.write(ln + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["lag", "output", "wages", "prices"])
    for lag, o, w, p in resp.as_array():
        writer.writerow([str(int(lag)), _fmt(o), _fmt(w), _fmt(p)])
    return buf.getvalue()


def write_shock(resp: ShockResponse, path, cfg: Config | None = None) -> Path:
    return atomic_write(path, shock_text(resp, cfg))


def grid_document(grid: PhaseGrid, cfg: Config | None = None) -> dict[str, Any]:
    """JSON-ready grid: axes, one entry per cell with its seeds, and the config."""
    if not grid.complete:
        raise ValueError("grid is incomplete: some cells have failed or missing runs")
    cells = []
    for iy, y in enumerate(grid.y_values):
        for ix, x in enumerate(grid.x_values):
            entry = {"ix": ix, "iy": iy, grid.spec.x.name: float(x), grid.spec.y.name: float(y)}
            entry.update(grid.cell(ix, iy).to_dict())
            cells.append(entry)
    return _jsonable({
        "schema": SCHEMA_GRID,
        "spec": grid.spec.to_dict(),
        "config": cfg.flat() if cfg is not None else grid.config,
        "seed_rule": "SeedSequence([base_seed, ix, iy, replicate]).generate_state(1, uint64)",
        "x": {"name": grid.spec.x.name, "values": [float(v) for v in grid.x_values]},
        "y": {"name": grid.spec.y.name, "values": [float(v) for v in grid.y_values]},
        "cells": cells,
    })


def write_grid(grid: PhaseGrid, path, cfg: Config | None = None) -> Path:
    doc = grid_document(grid, cfg)
    return atomic_write(path, json.dumps(doc, indent=1, sort_keys=False) + "\n")


def read_grid(path) -> dict[str, Any]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("schema") != SCHEMA_GRID:
        raise ValueError(f"unexpected schema {doc.get('schema')!r}")
    return doc
