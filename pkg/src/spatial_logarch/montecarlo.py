"""
Monte-Carlo harness: replicated simulate-then-fit experiments with bias and
RMSE tables.

Every replication draws from its own seed stream, derived from the base
seed, the cell and the replication index, so results do not depend on how
replications are spread over worker processes.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import platform
import warnings
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .estimate import FitOptions, NonConvergence, fit
from .model import AMode, Dimensions, ErrorDist, ModelConfig, ParamSet
from .simulate import check_stability, simulate
from .weights import Scheme, grid_contiguity, row_standardize

__all__ = [
    "CellResult",
    "McDesign",
    "McReport",
    "builtin_design",
    "emit_tables",
    "load_design",
    "run_design",
    "table_columns",
    "write_manifest",
]

FAILURE_FLAG = 0.2


@dataclass(frozen=True, eq=False)
class McDesign:
    """Data-generating design.

    ``a0``, ``psi0`` and ``pi0`` are on the uncentred scale of the volatility
    equation; each error distribution shifts ``A`` by its own ``E[ln eps^2]``.
    ``grids[k]`` is the lattice for ``sizes[k] = (n, T)``.
    """

    model_id: str
    a0: np.ndarray
    psi0: np.ndarray
    pi0: np.ndarray
    grids: tuple
    sizes: tuple
    error_dists: tuple
    replications: int = 200
    seed: int = 20240101
    burn_in: int = 50
    scheme: Scheme = Scheme.QUEEN
    a_mode: AMode = AMode.CONSTANT
    fit_options: FitOptions = field(default_factory=lambda: FitOptions(compute_std_errors=True))

    def __post_init__(self):
        object.__setattr__(self, "a0", np.atleast_1d(np.asarray(self.a0, dtype=float)))
        object.__setattr__(self, "psi0", np.asarray(self.psi0, dtype=float))
        object.__setattr__(self, "pi0", np.asarray(self.pi0, dtype=float))
        object.__setattr__(self, "grids", tuple(tuple(int(x) for x in g) for g in self.grids))
        object.__setattr__(self, "sizes", tuple(tuple(int(x) for x in s) for s in self.sizes))
        object.__setattr__(self, "error_dists", tuple(self.error_dists))
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        object.__setattr__(self, "a_mode", AMode(self.a_mode))
        if len(self.grids) != len(self.sizes):
            raise ValueError("need one grid per (n, T) size")
        for (rows, cols), (n, t_len) in zip(self.grids, self.sizes):
            if rows * cols != n:
                raise ValueError(f"grid {rows}x{cols} does not have n = {n} cells")
            if t_len < 1:
                raise ValueError("T must be positive")
        if self.replications < 1:
            raise ValueError("replications must be positive")
        if self.psi0.shape != self.pi0.shape or self.psi0.shape[0] != self.psi0.shape[1]:
            raise ValueError("psi0 and pi0 must be square matrices of equal size")

    @property
    def p(self) -> int:
        return self.psi0.shape[0]

    def params0(self, dist: ErrorDist, n: int) -> ParamSet:
        a0 = self.a0 if self.a0.shape == (self.p,) else np.broadcast_to(self.a0, (self.p,))
        if self.a_mode is AMode.FREE:
            a0 = np.broadcast_to(a0, (n, self.p))
        return ParamSet.from_a(a0, self.psi0, self.pi0, dist)

    def weights(self, k: int):
        rows, cols = self.grids[k]
        return row_standardize(grid_contiguity(rows, cols, self.scheme))

    def check(self) -> None:
        """Raise ``ValueError`` unless every configuration is stable."""
        for k, (n, _) in enumerate(self.sizes):
            rep = check_stability(self.params0(ErrorDist.normal(), n), self.weights(k))
            if not rep.stable:
                raise ValueError(
                    f"design {self.model_id!r} is unstable on the {self.grids[k][0]}x{self.grids[k][1]} grid "
                    f"(spectral radius {rep.spectral_radius:.4g}, S invertible: {rep.s_invertible})"
                )

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "a0": self.a0.tolist(),
            "psi0": self.psi0.tolist(),
            "pi0": self.pi0.tolist(),
            "grids": [list(g) for g in self.grids],
            "sizes": [list(s) for s in self.sizes],
            "error_dists": [d.label for d in self.error_dists],
            "replications": self.replications,
            "seed": self.seed,
            "burn_in": self.burn_in,
            "scheme": self.scheme.value,
            "a_mode": self.a_mode.value,
        }

    def replace(self, **changes) -> "McDesign":
        kw = {name: getattr(self, name) for name in self.__dataclass_fields__}
        kw.update(changes)
        return McDesign(**kw)


LADDER_GRIDS = ((5, 5), (7, 7), (10, 10))
LADDER_SIZES = ((25, 30), (49, 100), (100, 200))
BUILTIN = {
    "A": ([[0.5, 0.1], [0.1, 0.5]], [[0.3, 0.0], [0.0, 0.3]]),
    "B": ([[0.5, 0.1], [0.1, 0.5]], [[0.0, 0.0], [0.0, 0.0]]),
    "C": ([[0.2, 0.4], [0.4, 0.2]], [[0.3, 0.0], [0.0, 0.3]]),
}


def builtin_design(model: str, replications: int = 200, seed: int = 20240101) -> McDesign:
    """Designs A, B and C: bivariate, ``A_0 = 1``, row-standardised Queen weights."""
    model = model.upper()
    if model not in BUILTIN:
        raise ValueError(f"unknown builtin design {model!r}; choose from {sorted(BUILTIN)}")
    psi0, pi0 = BUILTIN[model]
    return McDesign(
        model_id=model,
        a0=np.ones(2),
        psi0=psi0,
        pi0=pi0,
        grids=LADDER_GRIDS,
        sizes=LADDER_SIZES,
        error_dists=(ErrorDist.normal(), ErrorDist.student_t(3)),
        replications=replications,
        seed=seed,
    )


def _parse_matrix(text: str) -> np.ndarray:
    rows = [r for r in text.replace("\n", ";").split(";") if r.strip()]
    return np.array([[float(x) for x in r.replace(",", " ").split()] for r in rows])


def load_design(path) -> McDesign:
    """Read a design from an INI-style file with a ``[design]`` section.

    Keys: ``model_id``, ``a0`` (``"1 1"``), ``psi0`` and ``pi0`` (rows
    separated by ``;``), ``grids`` (``"5x5, 7x7"``), ``T`` (``"30, 100"``),
    ``error_dists`` (``"normal, t3"``), ``replications``, ``seed``,
    ``burn_in``, ``scheme``.
    """
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise ValueError(f"cannot read design file {path}")
    if "design" not in parser:
        raise ValueError(f"{path}: missing [design] section")
    sec = parser["design"]
    try:
        grids = [tuple(int(x) for x in g.strip().lower().split("x")) for g in sec["grids"].split(",")]
        t_lens = [int(t) for t in sec["T"].split(",")]
        if len(t_lens) != len(grids):
            raise ValueError("grids and T must have equal length")
        return McDesign(
            model_id=sec.get("model_id", Path(path).stem),
            a0=[float(x) for x in sec.get("a0", "1").replace(",", " ").split()],
            psi0=_parse_matrix(sec["psi0"]),
            pi0=_parse_matrix(sec["pi0"]),
            grids=grids,
            sizes=[(r * c, t) for (r, c), t in zip(grids, t_lens)],
            error_dists=[ErrorDist.parse(x) for x in sec.get("error_dists", "normal").split(",")],
            replications=sec.getint("replications", 200),
            seed=sec.getint("seed", 20240101),
            burn_in=sec.getint("burn_in", 50),
            scheme=sec.get("scheme", "queen"),
        )
    except (KeyError, ValueError) as exc:
        raise ValueError(f"{path}: invalid design ({exc})") from None


@dataclass(frozen=True, eq=False)
class CellResult:
    """Replications of one ``(design, error distribution, n, T)`` cell.

    ``estimates`` holds the packed estimates with the intercept block on the
    uncentred ``A`` scale; rows of failed fits are NaN.
    """

    model_id: str
    dist: str
    n: int
    t_len: int
    truth: np.ndarray
    estimates: np.ndarray
    std_errors: np.ndarray
    converged: np.ndarray
    p: int

    @property
    def key(self) -> tuple:
        return self.model_id, self.dist, self.n, self.t_len

    @property
    def ok(self) -> np.ndarray:
        return self.converged & np.all(np.isfinite(self.estimates), axis=1)

    @property
    def replications(self) -> int:
        return int(self.ok.sum())

    @property
    def failures(self) -> int:
        return len(self.converged) - self.replications

    @property
    def convergence_rate(self) -> float:
        return self.replications / len(self.converged)

    @property
    def flagged(self) -> bool:
        return self.failures > FAILURE_FLAG * len(self.converged)

    def errors(self) -> np.ndarray:
        return self.estimates[self.ok] - self.truth

    @property
    def bias(self) -> np.ndarray:
        return self.errors().mean(axis=0)

    @property
    def rmse(self) -> np.ndarray:
        return np.sqrt(np.mean(self.errors() ** 2, axis=0))

    def table_stats(self) -> tuple[np.ndarray, np.ndarray]:
        """Bias and RMSE in table layout: pooled intercept ``a``, then Psi and Pi column-major."""
        err = self.errors()
        k_a = err.shape[1] - 2 * self.p * self.p
        a_err = err[:, :k_a].ravel()
        bias = np.concatenate([[a_err.mean()], err[:, k_a:].mean(axis=0)])
        rmse = np.concatenate([[np.sqrt(np.mean(a_err ** 2))], np.sqrt(np.mean(err[:, k_a:] ** 2, axis=0))])
        return bias, rmse


@dataclass(frozen=True, eq=False)
class McReport:
    cells: tuple
    design: dict = field(default_factory=dict)

    def cell(self, model_id: str, dist: str, n: int, t_len: int) -> CellResult:
        for c in self.cells:
            if c.key == (model_id, dist, n, t_len):
                return c
        raise KeyError((model_id, dist, n, t_len))


def _cell_seed(base_seed: int, model_id: str, dist: str, n: int, t_len: int, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(
        [int(base_seed), zlib.crc32(model_id.encode()), zlib.crc32(dist.encode()), n, t_len, rep]
    )


def _replicate(task):
    design, k, dist, rep = task
    n, t_len = design.sizes[k]
    w = design.weights(k)
    params0 = design.params0(dist, n)
    config = ModelConfig(Dimensions(n, design.p, t_len), w, dist, design.a_mode)
    rng = np.random.default_rng(_cell_seed(design.seed, design.model_id, dist.label, n, t_len, rep))
    with threadpool_limits(1), warnings.catch_warnings():
        warnings.simplefilter("ignore", NonConvergence)
        sim = simulate(config, params0, burn_in=design.burn_in, rng=rng)
        try:
            res = fit(sim.panel, w, dist, design.a_mode, design.fit_options)
        except (ValueError, np.linalg.LinAlgError):
            k_all = len(params0.a_tilde.ravel()) + 2 * design.p ** 2
            return np.full(k_all, np.nan), np.full(k_all, np.nan), False
    k_a = res.a.size
    est = res.theta.copy()
    est[:k_a] = res.a.ravel(order="F")
    return est, res.std_errors, bool(res.converged)


def run_design(design: McDesign, workers: int = 1, error_dists=None, sizes=None) -> McReport:
    """Simulate and fit every replication of every cell.

    ``error_dists`` and ``sizes`` optionally restrict the cells (labels such
    as ``"normal"``/``"t3"`` and ``(n, T)`` pairs).  The report is identical
    for any ``workers``.
    """
    design.check()
    dists = [d for d in design.error_dists if error_dists is None or d.label in error_dists]
    ks = [k for k, s in enumerate(design.sizes) if sizes is None or tuple(s) in {tuple(x) for x in sizes}]
    tasks = [(design, k, d, r) for d in dists for k in ks for r in range(design.replications)]
    if workers <= 1:
        results = [_replicate(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate, tasks, chunksize=max(1, len(tasks) // (4 * workers))))

    cells, pos = [], 0
    for d in dists:
        for k in ks:
            n, t_len = design.sizes[k]
            chunk = results[pos:pos + design.replications]
            pos += design.replications
            params0 = design.params0(d, n)
            truth = np.concatenate([
                params0.a(d.mean_log_sq).ravel(order="F"),
                params0.psi.ravel(order="F"),
                params0.pi.ravel(order="F"),
            ])
            cells.append(CellResult(
                model_id=design.model_id, dist=d.label, n=n, t_len=t_len, truth=truth,
                estimates=np.array([c[0] for c in chunk]),
                std_errors=np.array([c[1] for c in chunk]),
                converged=np.array([c[2] for c in chunk], dtype=bool),
                p=design.p,
            ))
    return McReport(tuple(cells), design.to_dict())


def table_columns(p: int) -> list[str]:
    cols = ["a"]
    cols += [f"psi{a + 1}{b + 1}" for b in range(p) for a in range(p)]
    cols += [f"pi{a + 1}{b + 1}" for b in range(p) for a in range(p)]
    return cols


def emit_tables(report: McReport, fmt: str = "text") -> str:
    """Bias and RMSE tables, one block per ``(model, error distribution)``.

    ``fmt="text"`` gives aligned tables rounded to 4 decimals; ``fmt="csv"``
    gives one row per ``(statistic, model, dist, n, T)`` with 17 significant
    digits.
    """
    p = report.cells[0].p if report.cells else 2
    cols = table_columns(p)
    groups: dict = {}
    for c in report.cells:
        groups.setdefault((c.model_id, c.dist), []).append(c)
    for g in groups.values():
        g.sort(key=lambda c: (c.n, c.t_len))

    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["statistic", "model", "dist", "n", "T", "replications", "failures", *cols])
        for stat in ("bias", "rmse"):
            for (model, dist), cells in groups.items():
                for c in cells:
                    vals = c.table_stats()[0 if stat == "bias" else 1]
                    writer.writerow([stat, model, dist, c.n, c.t_len, c.replications, c.failures,
                                     *(f"{v:.17g}" for v in vals)])
        return buf.getvalue()
    if fmt != "text":
        raise ValueError(f"unknown format {fmt!r}")

    head = f"{'':<24}" + "".join(f"{c:>9}" for c in cols)
    out = []
    for title, idx in (("Average bias", 0), ("RMSE", 1)):
        out.append(f"{title}")
        out.append(head)
        out.append("-" * len(head))
        for (model, dist), cells in groups.items():
            out.append(f"Model {model}, {dist} errors")
            for c in cells:
                vals = c.table_stats()[idx]
                flag = "  (!)" if c.flagged else ""
                out.append(f"{f'  n = {c.n}, T = {c.t_len}':<24}" + "".join(f"{v:9.4f}" for v in vals) + flag)
        out.append("")
    return "\n".join(out)


def write_manifest(path, report: McReport, workers: int, extra: dict | None = None) -> None:
    doc = {
        "software": {"package": "spatial_logarch", "version": __version__,
                     "python": platform.python_version(), "numpy": np.__version__},
        "design": report.design,
        "workers": workers,
        "seed_derivation": "SeedSequence([seed, crc32(model_id), crc32(dist), n, T, replication])",
        "cells": [
            {"model": c.model_id, "dist": c.dist, "n": c.n, "T": c.t_len,
             "replications": c.replications, "failures": c.failures, "flagged": c.flagged}
            for c in report.cells
        ],
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
