"""
Panel ingestion: long-format price files to log-return panels.

Input files are delimiter-separated text with a header row; a schema maps
the source column names onto ``location``, ``variable``, ``time`` and
``value``.  Time labels must sort chronologically as strings (ISO dates or
``YYYY-MM`` months do).
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import Panel

__all__ = [
    "IngestOptions",
    "MissingPolicy",
    "RawPanelRecord",
    "load_panel",
    "panel_summary",
    "read_panel",
    "to_returns",
    "write_panel",
]

DEFAULT_SCHEMA = {"location": "location", "variable": "variable", "time": "time", "value": "value"}


class MissingPolicy(str, enum.Enum):
    CARRY_FORWARD = "carry_forward"
    ERROR = "error"


@dataclass(frozen=True)
class RawPanelRecord:
    location_id: str
    variable: str
    time: str
    value: float


@dataclass(frozen=True)
class IngestOptions:
    missing_policy: MissingPolicy = MissingPolicy.CARRY_FORWARD
    jitter_sd: float = 1e-4
    jitter_seed: int = 0
    return_type: str = "log_return"

    def __post_init__(self):
        object.__setattr__(self, "missing_policy", MissingPolicy(self.missing_policy))
        if self.jitter_sd < 0:
            raise ValueError("jitter_sd must be nonnegative")
        if self.return_type != "log_return":
            raise ValueError(f"unsupported return type {self.return_type!r}")


def _read_rows(path, schema, delimiter):
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        try:
            idx = {key: header.index(col) for key, col in schema.items()}
        except ValueError as exc:
            raise ValueError(f"{path}: header {header} lacks a schema column ({exc})") from None
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not x.strip() for x in row):
                continue
            try:
                yield lineno, {key: row[i].strip() for key, i in idx.items()}
            except IndexError:
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}") from None


def load_panel(path, schema: dict | None = None, delimiter: str = ",") -> list[RawPanelRecord]:
    """Read positive price records; raises on parse errors, duplicates and non-positive prices."""
    records, seen = [], set()
    for lineno, row in _read_rows(path, schema, delimiter):
        try:
            value = float(row["value"])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: cannot parse value {row['value']!r}") from None
        key = (row["location"], row["variable"], row["time"])
        if key in seen:
            raise ValueError(f"{path}:{lineno}: duplicate record for (location, variable, time) = {key}")
        if not np.isfinite(value) or value <= 0:
            raise ValueError(f"{path}:{lineno}: price must be positive, got {value} for {key}")
        seen.add(key)
        records.append(RawPanelRecord(*key, value))
    return records


def _index(records):
    locs = sorted({r.location_id for r in records})
    variables = list(dict.fromkeys(r.variable for r in records))
    times = sorted({r.time for r in records})
    return locs, variables, times


def to_returns(records, options: IngestOptions | None = None, variables=None) -> Panel:
    """Log-return panel; slice 0 of the result is the conditioning slice ``Y_0``.

    Missing prices are carried forward (or rejected, per ``missing_policy``).
    Exact-zero returns are replaced by ``Normal(0, jitter_sd^2)`` draws from a
    generator seeded with ``jitter_seed``, in array order.
    """
    options = IngestOptions() if options is None else options
    records = list(records)
    if not records:
        raise ValueError("no records")
    locs, found_vars, times = _index(records)
    variables = found_vars if variables is None else list(variables)
    if len(times) < 3:
        raise ValueError(f"need at least 3 time points for a return panel, got {len(times)}")
    li = {v: i for i, v in enumerate(locs)}
    vi = {v: j for j, v in enumerate(variables)}
    ti = {v: t for t, v in enumerate(times)}
    prices = np.full((len(locs), len(variables), len(times)), np.nan)
    for r in records:
        if r.variable in vi:
            prices[li[r.location_id], vi[r.variable], ti[r.time]] = r.value

    missing = np.isnan(prices)
    if missing.any():
        if options.missing_policy is MissingPolicy.ERROR:
            i, j, t = np.argwhere(missing)[0]
            raise ValueError(f"missing price for ({locs[i]}, {variables[j]}, {times[t]}) "
                             f"and {int(missing.sum()) - 1} more")
        if missing[:, :, 0].any():
            i, j, _ = np.argwhere(missing[:, :, 0])[0]
            raise ValueError(f"cannot carry forward: series ({locs[i]}, {variables[j]}) has no first price")
        for t in range(1, len(times)):
            gap = missing[:, :, t]
            prices[:, :, t][gap] = prices[:, :, t - 1][gap]

    returns = np.diff(np.log(prices), axis=2)
    zero = returns == 0.0
    if zero.any():
        rng = np.random.default_rng(options.jitter_seed)
        returns[zero] = rng.normal(0.0, options.jitter_sd, size=int(zero.sum()))
    return Panel(returns, location_ids=locs, variable_names=variables, time_labels=times[1:], jittered=zero)


def panel_summary(panel: Panel) -> dict:
    """Cross-location mean series per variable, overall moments and jitter counts.

    ``dims`` counts every observed return slice, including the conditioning
    slice ``Y_0``; ``model_t`` is the number of modelled periods.
    """
    v = panel.values
    jit = panel.jittered
    return {
        "dims": tuple(int(x) for x in v.shape),
        "model_t": panel.dims.t_len,
        "time_labels": list(panel.time_labels),
        "variables": {
            name: {
                "mean_series": v[:, j, :].mean(axis=0).tolist(),
                "mean": float(v[:, j, :].mean()),
                "variance": float(v[:, j, :].var()),
                "jittered": 0 if jit is None else int(jit[:, j, :].sum()),
            }
            for j, name in enumerate(panel.variable_names)
        },
        "jittered_total": 0 if jit is None else int(jit.sum()),
    }


def write_panel(panel: Panel, path, delimiter: str = ",", manifest: dict | None = None) -> Path:
    """Write long format plus a ``<path>.manifest.json`` sidecar; returns the sidecar path."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        writer.writerow(["location", "variable", "time", "value"])
        for t, tl in enumerate(panel.time_labels):
            for j, var in enumerate(panel.variable_names):
                for i, loc in enumerate(panel.location_ids):
                    writer.writerow([loc, var, tl, f"{panel.values[i, j, t]:.17g}"])
    dims = panel.dims
    side = {
        "dims": {"n": dims.n, "p": dims.p, "T": dims.t_len},
        "location_ids": list(panel.location_ids),
        "variable_names": list(panel.variable_names),
        "time_labels": list(panel.time_labels),
        "conditioning_slice": panel.time_labels[0],
        "jittered": 0 if panel.jittered is None else int(panel.jittered.sum()),
    }
    if manifest:
        side.update(manifest)
    side_path = path.with_name(path.name + ".manifest.json")
    side_path.write_text(json.dumps(side, indent=2) + "\n")
    return side_path


def read_panel(path, schema: dict | None = None, delimiter: str = ",") -> Panel:
    """Read a long-format panel of observations (e.g. returns) written by :func:`write_panel`.

    Label order comes from the sidecar manifest when present; otherwise
    locations and times are sorted and variables keep first-seen order.
    """
    path = Path(path)
    rows = list(_read_rows(path, schema, delimiter))
    side_path = path.with_name(path.name + ".manifest.json")
    if side_path.exists():
        side = json.loads(side_path.read_text())
        locs, variables, times = side["location_ids"], side["variable_names"], side["time_labels"]
    else:
        recs = [RawPanelRecord(r["location"], r["variable"], r["time"], 0.0) for _, r in rows]
        locs, variables, times = _index(recs)
    li = {v: i for i, v in enumerate(locs)}
    vi = {v: j for j, v in enumerate(variables)}
    ti = {v: t for t, v in enumerate(times)}
    values = np.full((len(locs), len(variables), len(times)), np.nan)
    for lineno, r in rows:
        try:
            values[li[r["location"]], vi[r["variable"]], ti[r["time"]]] = float(r["value"])
        except (KeyError, ValueError):
            raise ValueError(f"{path}:{lineno}: bad record {r}") from None
    if np.isnan(values).any():
        raise ValueError(f"{path}: panel is incomplete ({int(np.isnan(values).sum())} missing cells)")
    return Panel(values, location_ids=locs, variable_names=variables, time_labels=times)
