"""
Command-line interface.

Subcommands ``weights``, ``simulate``, ``fit`` and ``mc``.  Every run writes
its outputs and a ``manifest.json`` (effective configuration, seeds,
version) to ``--outdir``.  Options may also come from an INI file given by
``--config``: the section named after the subcommand supplies defaults and
explicit flags override them.

Exit codes: 0 success, 1 usage or configuration error, 2 validation or
stability failure, 3 non-convergence.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .estimate import FitOptions, NonConvergence, fit, fit_report, fit_rows, validate_assumptions
from .ingest import IngestOptions, load_panel, read_panel, to_returns, write_panel
from .model import AMode, Dimensions, ErrorDist, ModelConfig, Panel, ParamSet
from .montecarlo import BUILTIN, McReport, builtin_design, emit_tables, load_design, run_design, write_manifest
from .simulate import StabilityError, check_stability, simulate
from .weights import (
    SpatialWeights,
    grid_contiguity,
    load_weights,
    row_standardize,
    save_weights,
    validate_weights,
)

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_NONCONVERGED = 0, 1, 2, 3
GAUSSIAN_SIGMA2_U = ErrorDist.normal().var_log_sq


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _grid(text: str) -> tuple[int, int]:
    try:
        rows, cols = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected ROWSxCOLS, got {text!r}") from None
    return rows, cols


def _matrix(text: str) -> np.ndarray:
    rows = [r for r in text.split(";") if r.strip()]
    try:
        m = np.array([[float(x) for x in r.replace(",", " ").split()] for r in rows])
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse matrix {text!r}") from None
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise argparse.ArgumentTypeError(f"matrix must be square: {text!r}")
    return m


def _vector(text: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in text.replace(",", " ").split()])
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse vector {text!r}") from None


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    return str(text).strip().lower() in ("1", "true", "yes", "on")


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _manifest(args, outdir: Path, **extra) -> None:
    config = {k: _jsonable(v) for k, v in vars(args).items() if k not in ("func",)}
    doc = {"command": args.command, "version": __version__, "config": config}
    doc.update({k: _jsonable(v) for k, v in extra.items()})
    (outdir / "manifest.json").write_text(json.dumps(doc, indent=2, default=str) + "\n")


def _outdir(args) -> Path:
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _weights_from_args(args) -> SpatialWeights:
    if getattr(args, "weights", None):
        return load_weights(args.weights)
    if getattr(args, "load", None):
        return load_weights(args.load)
    if getattr(args, "grid", None):
        rows, cols = args.grid
        try:
            w = grid_contiguity(rows, cols, args.scheme)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        return row_standardize(w) if args.standardize else w
    raise UsageError("give either a weights file or --grid")


# -- subcommands -----------------------------------------------------------

def cmd_weights(args) -> int:
    w = _weights_from_args(args)
    out = _outdir(args)
    target = out / (args.output or ("weights.csv" if args.format == "dense_csv" else "weights.txt"))
    if not args.load or args.output:
        save_weights(w, target, args.format)
    bound = args.bound if args.bound is not None else (1.0 + 1e-9 if w.standardized else np.inf)
    report = validate_weights(w, bound)
    (out / "validation.txt").write_text(report.to_text())
    _manifest(args, out, n=w.n, nnz=w.nnz, validation_passed=report.passed,
              weights_file=None if (args.load and not args.output) else target)
    print(report.to_text(), end="")
    return EXIT_OK if report.passed else EXIT_INVALID


CROSS_FIELD_DIAG = 0.5
CROSS_FIELD_VALUES = (0.35, 0.0)


def cross_effect_fields(seed: int, cross: float, rows: int = 30, cols: int = 30,
                w: SpatialWeights | None = None) -> np.ndarray:
    """One bivariate purely spatial field (``T = 1``, Rook weights), shape ``(rows, cols, 2)``."""
    w = row_standardize(grid_contiguity(rows, cols, "rook")) if w is None else w
    dist = ErrorDist.normal()
    psi = np.array([[CROSS_FIELD_DIAG, cross], [cross, CROSS_FIELD_DIAG]])
    params = ParamSet.from_a(np.zeros(2), psi, np.zeros((2, 2)), dist)
    sim = simulate(ModelConfig(Dimensions(rows * cols, 2, 1), w, dist, seed=seed), params, burn_in=0)
    return sim.panel.values[:, :, -1].reshape((rows, cols, 2))


def _params_from_args(args, dist: ErrorDist, p_default: int = 2) -> ParamSet:
    if args.model:
        psi, pi = (np.array(m) for m in BUILTIN[args.model.upper()])
    else:
        if args.psi is None or args.pi is None:
            raise UsageError("give --model or both --psi and --pi")
        psi, pi = args.psi, args.pi
    p = psi.shape[0]
    if pi.shape != (p, p):
        raise UsageError("--psi and --pi must have the same size")
    a = np.ones(p) if args.a is None else args.a
    if a.size == 1:
        a = np.full(p, float(a[0]))
    if a.shape != (p,):
        raise UsageError(f"--a needs {p} values")
    return ParamSet.from_a(a, psi, pi, dist)


def cmd_simulate(args) -> int:
    out = _outdir(args)
    if args.fig1:
        w = row_standardize(grid_contiguity(30, 30, "rook"))
        corr = {}
        for cross in CROSS_FIELD_VALUES:
            fields = cross_effect_fields(args.seed, cross, w=w)
            for j in range(2):
                np.savetxt(out / f"field_cross{cross:g}_y{j + 1}.csv", fields[:, :, j], delimiter=",", fmt="%.17g")
            ly = np.log(fields.reshape(-1, 2) ** 2)
            corr[f"{cross:g}"] = float(np.corrcoef(ly.T)[0, 1])
        _manifest(args, out, grid="30x30", scheme="rook", standardized=True, psi_diag=CROSS_FIELD_DIAG,
                  cross_values=list(CROSS_FIELD_VALUES), log_sq_cross_correlation=corr)
        print(f"wrote 4 fields to {out}; ln Y^2 cross-correlations {corr}")
        return EXIT_OK

    dist = ErrorDist.parse(args.dist)
    w = _weights_from_args(args)
    params = _params_from_args(args, dist)
    report = check_stability(params, w)
    if not report.stable:
        print(f"unstable parameters: spectral radius {report.spectral_radius:.6g}, "
              f"S invertible: {report.s_invertible}", file=sys.stderr)
        _manifest(args, out, stability=vars(report))
        return EXIT_INVALID
    config = ModelConfig(Dimensions(w.n, params.p, args.T), w, dist, seed=args.seed)
    sim = simulate(config, params, burn_in=args.burn_in)
    write_panel(sim.panel, out / "panel.csv", manifest={"seed": args.seed, "source": "simulate"})
    write_panel(Panel(sim.log_h), out / "log_h.csv", manifest={"seed": args.seed, "source": "simulate"})
    _manifest(args, out, stability=vars(report), a_tilde=params.a_tilde, psi=params.psi, pi=params.pi,
              sigma2_u=params.sigma2_u, shape=list(sim.panel.values.shape))
    print(f"simulated panel of shape {sim.panel.values.shape} to {out / 'panel.csv'}")
    return EXIT_OK


def _schema(text: str | None) -> dict | None:
    if not text:
        return None
    pairs = [kv.split("=", 1) for kv in text.split(",") if kv.strip()]
    return {k.strip(): v.strip() for k, v in pairs}


def cmd_fit(args) -> int:
    out = _outdir(args)
    if bool(args.panel) == bool(args.prices):
        raise UsageError("give exactly one of --panel or --prices")
    if args.prices:
        records = load_panel(args.prices, _schema(args.schema), args.delimiter)
        panel = to_returns(records, IngestOptions(args.missing, args.jitter_sd, args.jitter_seed))
        write_panel(panel, out / "returns.csv", manifest={"jitter_seed": args.jitter_seed,
                                                           "jitter_sd": args.jitter_sd})
    else:
        panel = read_panel(args.panel, _schema(args.schema), args.delimiter)
    if not args.weights:
        raise UsageError("--weights is required")
    w = load_weights(args.weights)
    if w.n != panel.dims.n:
        raise UsageError(f"weights are {w.n}x{w.n} but the panel has {panel.dims.n} locations")
    dist = ErrorDist.parse(args.dist)
    options = FitOptions(max_iterations=args.max_iter, sigma2_u=args.sigma2u,
                         multistart_count=args.multistart, seed=args.seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonConvergence)
        result = fit(panel, w, dist, AMode(args.a_mode), options)
    assumptions = validate_assumptions(panel, w, result)
    (out / "fit.txt").write_text(fit_report(result, panel.variable_names, args.conventional)
                                 + "\nAssumption checks\n" + assumptions.to_text())
    lines = ["parameter,estimate,std_error,t_value,marker"]
    lines += [f"{r['parameter']},{r['estimate']:.17g},{r['std_error']:.17g},{r['t_value']:.17g},{r['marker']}"
              for r in fit_rows(result, args.conventional)]
    (out / "fit.csv").write_text("\n".join(lines) + "\n")
    _manifest(args, out, dims=vars(panel.dims), converged=result.converged, iterations=result.iterations,
              log_likelihood=result.log_lik, sigma2_u=result.params.sigma2_u,
              a=result.a, assumptions={c.name: c.passed for c in assumptions.checks})
    print(fit_report(result, panel.variable_names, args.conventional), end="")
    return EXIT_OK if result.converged else EXIT_NONCONVERGED


def cmd_mc(args) -> int:
    out = _outdir(args)
    if args.design:
        designs = [load_design(args.design)]
    elif args.paper_ladder:
        designs = [builtin_design(m) for m in "ABC"]
    elif args.model:
        designs = [builtin_design(args.model)]
    else:
        raise UsageError("give --model, --design or --paper-ladder")
    designs = [d.replace(replications=args.reps if args.reps is not None else d.replications,
                         seed=args.seed if args.seed is not None else d.seed) for d in designs]
    dists = None if args.paper_ladder or not args.dist else [ErrorDist.parse(x).label for x in args.dist.split(",")]
    sizes = None
    if args.sizes:
        sizes = [tuple(int(x) for x in s.split("x")) for s in args.sizes.split(",")]
    for d in designs:
        try:
            d.check()
        except ValueError as exc:
            raise UsageError(f"stability condition fails: {exc}") from None
    reports = [run_design(d, workers=args.workers, error_dists=dists, sizes=sizes) for d in designs]
    cells = tuple(c for r in reports for c in r.cells)
    report = McReport(cells, {"designs": [r.design for r in reports]})
    (out / "tables.txt").write_text(emit_tables(report, "text"))
    (out / "tables.csv").write_text(emit_tables(report, "csv"))
    if args.raw:
        for c in cells:
            name = f"raw_{c.model_id}_{c.dist}_n{c.n}_T{c.t_len}.csv"
            np.savetxt(out / name, np.column_stack([c.converged, c.estimates]), delimiter=",", fmt="%.17g")
    write_manifest(out / "manifest.json", report, args.workers,
                   {"command": "mc", "config": {k: _jsonable(v) for k, v in vars(args).items() if k != "func"}})
    print(emit_tables(report, "text"), end="")
    return EXIT_OK


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spatial-logarch", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="INI file; section [<subcommand>] supplies defaults")
        p.add_argument("--outdir", default=".", help="output directory (default: current)")
        p.add_argument("--seed", type=int, default=None if p.prog.endswith("mc") else 0)

    def grid_opts(p):
        p.add_argument("--grid", type=_grid, help="lattice as ROWSxCOLS")
        p.add_argument("--scheme", choices=["rook", "queen"], default="queen")
        p.add_argument("--standardize", action="store_true", help="row-standardise the lattice weights")

    p = sub.add_parser("weights", help="build, save and validate a weight matrix")
    common(p)
    grid_opts(p)
    p.add_argument("--load", help="validate an existing weight file instead of building one")
    p.add_argument("--validate", action="store_true", help="(always on) kept for readability of scripts")
    p.add_argument("--bound", type=float, default=None, help="row-sum bound (default 1 for standardised W)")
    p.add_argument("--format", choices=["coordinate", "dense_csv"], default="coordinate")
    p.add_argument("--output", help="file name inside --outdir")
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("simulate", help="simulate a panel or the two-field spatial example")
    common(p)
    grid_opts(p)
    p.add_argument("--weights", help="weight file (instead of --grid)")
    p.add_argument("--fig1", action="store_true", help="30x30 bivariate spatial fields, cross effect 0.35 vs 0")
    p.add_argument("--model", choices=sorted(BUILTIN) + [m.lower() for m in BUILTIN])
    p.add_argument("--psi", type=_matrix, help="Psi rows separated by ';'")
    p.add_argument("--pi", type=_matrix, help="Pi rows separated by ';'")
    p.add_argument("--a", type=_vector, help="intercept A per variable (default 1)")
    p.add_argument("--T", type=int, default=30)
    p.add_argument("--burn-in", type=int, default=50)
    p.add_argument("--dist", default="normal", help="normal or tDF, e.g. t3")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="QML fit of a panel")
    common(p)
    p.add_argument("--panel", help="long-format observation file (location,variable,time,value)")
    p.add_argument("--prices", help="long-format price file; converted to log-returns")
    p.add_argument("--schema", help="column mapping, e.g. location=plz,variable=type,time=month,value=price")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--missing", choices=["carry_forward", "error"], default="carry_forward")
    p.add_argument("--jitter-sd", type=float, default=1e-4)
    p.add_argument("--jitter-seed", type=int, default=0)
    p.add_argument("--weights", required=False, help="weight file")
    p.add_argument("--a-mode", choices=["constant", "free"], default="constant")
    p.add_argument("--dist", default="normal", help="innovation law used to back-transform A")
    p.add_argument("--sigma2u", type=float, default=GAUSSIAN_SIGMA2_U)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--multistart", type=int, default=0)
    p.add_argument("--conventional", action="store_true", help="markers at |t| > 1.96 / 2.576")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("mc", help="Monte-Carlo bias/RMSE study")
    common(p)
    p.add_argument("--model", choices=sorted(BUILTIN) + [m.lower() for m in BUILTIN])
    p.add_argument("--design", help="INI design file with a [design] section")
    p.add_argument("--paper-ladder", action="store_true", help="models A, B, C x normal, t3 x all sizes")
    p.add_argument("--dist", help="comma-separated subset, e.g. normal,t3")
    p.add_argument("--sizes", help="subset of NxT pairs, e.g. 25x30,100x200")
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--raw", action="store_true", help="also write per-replication estimates")
    p.set_defaults(func=cmd_mc)
    return parser


_BOOL_OPTS = {"standardize", "validate", "fig1", "conventional", "paper_ladder", "raw"}


def _apply_config(parser: argparse.ArgumentParser, argv) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    cp = configparser.ConfigParser()
    if not cp.read(known.config):
        raise UsageError(f"cannot read config file {known.config}")
    if known.command not in cp:
        return
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    subparser = sub.choices[known.command]
    dests = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, value in cp[known.command].items():
        dest = key.replace("-", "_")
        if dest not in dests:
            raise UsageError(f"unknown option {key!r} in [{known.command}] of {known.config}")
        action = dests[dest]
        if dest in _BOOL_OPTS:
            defaults[dest] = _bool(value)
        elif action.type is not None:
            try:
                defaults[dest] = action.type(value)
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"bad value for {key} in {known.config}: {exc}") from None
        else:
            defaults[dest] = value
    subparser.set_defaults(**defaults)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"spatial-logarch: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StabilityError as exc:
        print(f"spatial-logarch: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ValueError, OSError) as exc:
        print(f"spatial-logarch: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
