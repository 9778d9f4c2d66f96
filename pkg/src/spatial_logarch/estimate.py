"""
Quasi-maximum-likelihood estimation.

The log-likelihood is maximised with a BFGS ascent on the per-observation
objective ``ln L / (n p T)``.  Parameters must stay in the stable interior:
trial points whose spectral radius reaches ``stability_margin`` (or whose
Jacobian is nearly singular) are rejected by backtracking, and a small
logarithmic barrier keeps iterates away from that boundary.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .likelihood import LikelihoodWorkspace, SingularJacobian
from .model import AMode, ErrorDist, Panel, ParamSet, unpack_params
from .simulate import check_stability, spectral_radius
from .weights import SpatialWeights, validate_weights

__all__ = [
    "AssumptionReport",
    "DegenerateData",
    "FitOptions",
    "FitResult",
    "NonConvergence",
    "fit",
    "fit_report",
    "fit_rows",
    "hessian_standard_errors",
    "param_names",
    "significance_marker",
    "standard_errors",
    "validate_assumptions",
]


class DegenerateData(ValueError):
    """A variable's log-squared series is constant, so nothing can be estimated."""


class NonConvergence(RuntimeWarning):
    """The optimiser stopped before meeting the gradient tolerance."""


@dataclass(frozen=True)
class FitOptions:
    max_iterations: int = 500
    gradient_tolerance: float = 1e-6
    initial_theta: np.ndarray | None = None
    stability_margin: float = 0.999
    multistart_count: int = 0
    seed: int = 0
    sigma2_u: float | None = None
    barrier_weight: float = 1e-6
    compute_std_errors: bool = True

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if not self.gradient_tolerance > 0:
            raise ValueError("gradient_tolerance must be positive")
        if not 0 < self.stability_margin < 1:
            raise ValueError("stability_margin must lie in (0, 1)")
        if self.multistart_count < 0:
            raise ValueError("multistart_count must be nonnegative")
        if self.sigma2_u is not None and not self.sigma2_u > 0:
            raise ValueError("sigma2_u must be positive")


@dataclass(frozen=True, eq=False)
class FitResult:
    params: ParamSet
    a: np.ndarray
    theta: np.ndarray
    std_errors: np.ndarray
    t_values: np.ndarray
    log_lik: float
    converged: bool
    iterations: int
    spectral_radius_at_solution: float
    a_mode: AMode
    mean_log_sq: float
    names: tuple
    gradient_norm: float = np.nan
    history: tuple = ()
    message: str = ""
    hessian: np.ndarray | None = field(default=None, repr=False)


def param_names(n: int, p: int, a_mode: AMode) -> tuple:
    if AMode(a_mode) is AMode.CONSTANT:
        names = [f"a~[{j + 1}]" for j in range(p)]
    else:
        names = [f"a~[{i + 1},{j + 1}]" for j in range(p) for i in range(n)]
    names += [f"psi[{a + 1},{b + 1}]" for b in range(p) for a in range(p)]
    names += [f"pi[{a + 1},{b + 1}]" for b in range(p) for a in range(p)]
    return tuple(names)


def hessian_standard_errors(grad, theta, step: float = 1e-5):
    """Standard errors from the inverse negative Hessian of a log-likelihood.

    The Hessian is the central difference of the analytic gradient ``grad``
    with step ``step * max(1, |theta_i|)``.  Coordinates whose variance is
    not positive come back as NaN.
    """
    theta = np.asarray(theta, dtype=float)
    k = len(theta)
    hess = np.empty((k, k))
    for i in range(k):
        h = step * max(1.0, abs(theta[i]))
        e = np.zeros(k)
        e[i] = h
        hess[:, i] = (grad(theta + e) - grad(theta - e)) / (2.0 * h)
    hess = 0.5 * (hess + hess.T)
    info = -hess
    try:
        np.linalg.cholesky(info)
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(info)
    var = np.diag(cov)
    se = np.full(k, np.nan)
    ok = var > 0
    se[ok] = np.sqrt(var[ok])
    return se, hess


def standard_errors(theta_hat, ws: LikelihoodWorkspace, sigma2_u: float, step: float = 1e-5) -> np.ndarray:
    """Observed-information standard errors at ``theta_hat`` (NaN where unavailable)."""
    se, _ = hessian_standard_errors(lambda th: ws.gradient(th, sigma2_u), theta_hat, step)
    return se


class _Objective:
    """Per-observation log-likelihood plus barrier; ``None`` outside the feasible set."""

    def __init__(self, ws: LikelihoodWorkspace, sigma2_u: float, margin: float, barrier: float):
        self.ws, self.sigma2_u, self.margin, self.barrier = ws, sigma2_u, margin, barrier
        self.scale = 1.0 / ws.n_obs

    def feasible_radius(self, psi, pi):
        ws = self.ws
        if ws.logdet_method == "eigen":
            lam = np.linalg.eigvals(psi)
            if np.abs(1.0 - np.multiply.outer(lam, ws.w_eigenvalues)).min() < 1e-10:
                return None
            rho, dpsi, dpi = spectral_radius(psi, pi, ws.w_eigenvalues, with_grad=True)
        else:
            report = check_stability(ParamSet(np.zeros(ws.p), psi, pi, 1.0), ws.weights, method="iterative")
            if not report.s_invertible:
                return None
            rho, dpsi, dpi = report.spectral_radius, np.zeros_like(psi), np.zeros_like(pi)
        if not rho < self.margin:
            return None
        return rho, dpsi, dpi

    def __call__(self, theta):
        ws = self.ws
        c, psi, pi = ws.split(theta)
        stab = self.feasible_radius(psi, pi)
        if stab is None:
            return None
        rho, dpsi, dpi = stab
        try:
            value, grad = ws.value_and_gradient(theta, self.sigma2_u)
        except SingularJacobian:
            return None
        gap = self.margin - rho
        f = value * self.scale + self.barrier * np.log(gap)
        g = grad * self.scale - self.barrier / gap * ws.join(np.zeros_like(c), dpsi, dpi)
        if not np.isfinite(f) or not np.all(np.isfinite(g)):
            return None
        return f, g


def _bfgs_ascent(obj: _Objective, theta0, max_iter: int, gtol: float):
    start = obj(theta0)
    if start is None:
        raise ValueError("starting value is outside the stable parameter region")
    theta = np.asarray(theta0, dtype=float).copy()
    f, g = start
    k = len(theta)
    hinv = np.eye(k)
    history = [f]
    converged, message, it = False, "maximum iterations reached", 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(g)) < gtol:
            converged, message, it = True, "gradient tolerance met", it - 1
            break
        d = hinv @ g
        if d @ g <= 0:
            hinv = np.eye(k)
            d = g.copy()
        slope = g @ d
        step, accepted = 1.0, None
        while step > 1e-14:
            cand = theta + step * d
            res = obj(cand)
            if res is not None and res[0] >= f + 1e-4 * step * slope:
                accepted = cand, res
                break
            step *= 0.5
        if accepted is None:
            converged = bool(np.max(np.abs(g)) < gtol)
            message = "line search failed"
            break
        cand, (f_new, g_new) = accepted
        s = cand - theta
        y = g - g_new  # curvature of -f
        sy = s @ y
        if sy > 1e-16 * np.linalg.norm(s) * np.linalg.norm(y):
            if it == 1:
                hinv = np.eye(k) * (sy / (y @ y))
            rho = 1.0 / sy
            v = np.eye(k) - rho * np.outer(s, y)
            hinv = v @ hinv @ v.T + rho * np.outer(s, s)
        theta, f, g = cand, f_new, g_new
        history.append(f)
    else:
        converged = bool(np.max(np.abs(g)) < gtol)
        if converged:
            message = "gradient tolerance met"
    return theta, f, g, it, converged, message, history


def default_start(ws: LikelihoodWorkspace) -> np.ndarray:
    """``Psi = Pi = 0`` with ``A~`` at the per-variable mean of ``ln Y^2``."""
    p = ws.p
    means = ws.ddot[:, :, 1:].mean(axis=(0, 2))
    c = means if ws.a_mode is AMode.CONSTANT else np.broadcast_to(means, (ws.n, p))
    return ws.join(c, np.zeros((p, p)), np.zeros((p, p)))


def fit(panel: Panel, w: SpatialWeights, error_dist: ErrorDist | None = None,
        a_mode: AMode | str = AMode.CONSTANT, options: FitOptions | None = None,
        workspace: LikelihoodWorkspace | None = None) -> FitResult:
    """QML estimate of ``(A~, Psi, Pi)`` from a panel and a weight matrix."""
    error_dist = ErrorDist.normal() if error_dist is None else error_dist
    options = FitOptions() if options is None else options
    a_mode = AMode(a_mode)
    dims = panel.dims
    if dims.t_len == 1 and a_mode is not AMode.CONSTANT:
        raise ValueError("with T = 1 the intercept must be constant across space")
    sigma2_u = error_dist.var_log_sq if options.sigma2_u is None else options.sigma2_u
    ws = LikelihoodWorkspace(panel, w, a_mode) if workspace is None else workspace
    flat = ws.ddot[:, :, 1:]
    for j in range(ws.p):
        if np.ptp(flat[:, j]) == 0:
            raise DegenerateData(f"ln Y^2 of variable {panel.variable_names[j]!r} is constant")

    obj = _Objective(ws, sigma2_u, options.stability_margin, options.barrier_weight)
    starts = [default_start(ws) if options.initial_theta is None else np.asarray(options.initial_theta, float)]
    if options.multistart_count:
        rng = np.random.default_rng(options.seed)
        base = starts[0]
        k_a = ws.n_params - 2 * ws.p * ws.p
        while len(starts) < options.multistart_count + 1:
            cand = base.copy()
            cand[k_a:] += rng.normal(scale=0.1, size=len(cand) - k_a)
            if obj(cand) is not None:
                starts.append(cand)

    best = None
    for start in starts:
        run = _bfgs_ascent(obj, start, options.max_iterations, options.gradient_tolerance)
        if best is None or (run[4], run[1]) > (best[4], best[1]):
            best = run
    theta, _, g, iterations, converged, message, history = best
    if not converged:
        warnings.warn(f"QML fit did not converge: {message}", NonConvergence, stacklevel=2)

    params = unpack_params(theta, ws.n, ws.p, a_mode, sigma2_u)
    if options.compute_std_errors:
        se, hess = hessian_standard_errors(lambda th: ws.gradient(th, sigma2_u), theta)
    else:
        se, hess = np.full(len(theta), np.nan), None
    with np.errstate(divide="ignore", invalid="ignore"):
        t_values = theta / se
    return FitResult(
        params=params,
        a=params.a(error_dist.mean_log_sq),
        theta=theta,
        std_errors=se,
        t_values=t_values,
        log_lik=ws.log_likelihood(theta, sigma2_u),
        converged=converged,
        iterations=iterations,
        spectral_radius_at_solution=spectral_radius(params.psi, params.pi, ws.w_eigenvalues)
        if ws.w_eigenvalues is not None else check_stability(params, w).spectral_radius,
        a_mode=a_mode,
        mean_log_sq=error_dist.mean_log_sq,
        names=param_names(ws.n, ws.p, a_mode),
        gradient_norm=float(np.max(np.abs(g))),
        history=tuple(history),
        message=message,
        hessian=hess,
    )


# -- assumption checks -----------------------------------------------------

@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class AssumptionReport:
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_text(self) -> str:
        width = max(len(c.name) for c in self.checks)
        return "".join(f"{c.name:<{width}}  {'pass' if c.passed else 'FAIL'}  {c.detail}\n" for c in self.checks)


def validate_assumptions(panel: Panel, w: SpatialWeights, result: FitResult,
                         moment_tolerance: float = 0.25) -> AssumptionReport:
    """Check the model's working assumptions against data and estimates."""
    checks = []
    zeros = panel.zero_coordinates()
    checks.append(Check(
        "zero_free", not zeros,
        "no exact zeros" if not zeros else f"{len(zeros)} zero(s) at (location, variable, time) {zeros[:5]}",
    ))

    wrep = validate_weights(w)
    stab = check_stability(result.params, w)
    checks.append(Check(
        "weights_bounded", wrep.zero_diagonal and wrep.nonnegative and np.isfinite(wrep.max_row_sum),
        f"max |row sum| {wrep.max_row_sum:.4g}, max |col sum| {wrep.max_col_sum:.4g}",
    ))
    checks.append(Check("s_invertible", stab.s_invertible, "I - Psi' (x) W at the estimate"))
    checks.append(Check(
        "stable", stab.stable, f"spectral radius {stab.spectral_radius:.6g} at the estimate",
    ))

    if zeros or not stab.s_invertible:
        checks.append(Check("residual_moments", False, "not computed"))
    else:
        ws = LikelihoodWorkspace(panel, w, result.a_mode)
        r = ws.residuals(result.theta)
        dev = r.var() / result.params.sigma2_u - 1.0
        checks.append(Check(
            "residual_moments", abs(dev) <= moment_tolerance and abs(r.mean()) <= 3 * np.sqrt(r.var() / r.size) + 0.05,
            f"residual mean {r.mean():.4g}, variance/sigma2_u - 1 = {dev:+.4f}",
        ))

    ok = not (panel.dims.t_len == 1 and result.a_mode is not AMode.CONSTANT)
    checks.append(Check("t1_constant_intercept", ok, f"T = {panel.dims.t_len}, a_mode = {result.a_mode.value}"))
    return AssumptionReport(tuple(checks))


# -- reporting -------------------------------------------------------------

def significance_marker(t: float, conventional: bool = False) -> str:
    if not np.isfinite(t):
        return ""
    t = abs(t)
    if conventional:
        return "**" if t > 2.576 else "*" if t > 1.96 else ""
    return "**" if t > 2.0 else "*" if t > 1.9 else ""


def fit_rows(result: FitResult, conventional: bool = False) -> list[dict]:
    """One record per parameter: name, estimate, standard error, t-value, marker."""
    rows = []
    for name, est, se, t in zip(result.names, result.theta, result.std_errors, result.t_values):
        rows.append({"parameter": name, "estimate": float(est), "std_error": float(se),
                     "t_value": float(t), "marker": significance_marker(t, conventional)})
    return rows


def fit_report(result: FitResult, variable_names=None, conventional: bool = False) -> str:
    """Aligned-text report: an estimate/standard-error grid per variable, then diagnostics."""
    p = result.params.p
    names = list(variable_names) if variable_names is not None else [f"y{j + 1}" for j in range(p)]
    se = result.std_errors
    k_a = len(result.theta) - 2 * p * p
    se_psi = se[k_a:k_a + p * p].reshape((p, p), order="F")
    se_pi = se[k_a + p * p:].reshape((p, p), order="F")

    def cell(est, s):
        with np.errstate(divide="ignore", invalid="ignore"):
            mark = significance_marker(est / s, conventional)
        s_txt = f"{s:.3f}" if np.isfinite(s) else "n/a"
        return f"{est:.3f}{mark}", s_txt

    colw = 14
    label_w = max(12, max(len(n) for n in names) + 2)
    head1 = " " * (6 + label_w) + "".join(f"{n:^{2 * colw}}" for n in names)
    head2 = " " * (6 + label_w) + "".join(f"{'Estimate':>{colw}}{'Std. error':>{colw}}" for _ in names)
    rule = "-" * len(head2)
    lines = [head1, head2, rule]
    if result.a_mode is AMode.CONSTANT:
        cells = [cell(result.theta[j], se[j]) for j in range(p)]
        lines.append(f"{'A~':<{6 + label_w}}" + "".join(f"{e:>{colw}}{s:>{colw}}" for e, s in cells))
    else:
        lines.append(f"{'A~':<{6 + label_w}}(free across locations; see the parameter table)")
    for title, mat, sem in (("Psi", result.params.psi, se_psi), ("Pi", result.params.pi, se_pi)):
        lines.append(rule)
        for a in range(p):
            cells = [cell(mat[a, b], sem[a, b]) for b in range(p)]
            lead = title if a == 0 else ""
            lines.append(f"{lead:<6}{names[a]:<{label_w}}" + "".join(f"{e:>{colw}}{s:>{colw}}" for e, s in cells))
    lines.append(rule)
    thresholds = "* |t| > 1.96, ** |t| > 2.576" if conventional else "* |t| > 1.9, ** |t| > 2"
    lines.append(f"Significance: {thresholds}")
    lines.append("")
    lines.append(f"{'parameter':<16}{'estimate':>12}{'std. error':>12}{'t-value':>10}")
    for row in fit_rows(result, conventional):
        se_txt = f"{row['std_error']:12.4f}" if np.isfinite(row["std_error"]) else f"{'n/a':>12}"
        t_txt = f"{row['t_value']:10.3f}" if np.isfinite(row["t_value"]) else f"{'n/a':>10}"
        lines.append(f"{row['parameter']:<16}{row['estimate']:12.4f}{se_txt}{t_txt} {row['marker']}")
    lines.append("")
    lines.append(f"log-likelihood        {result.log_lik:.6f}")
    lines.append(f"converged             {result.converged} ({result.message})")
    lines.append(f"iterations            {result.iterations}")
    lines.append(f"max |gradient|        {result.gradient_norm:.3e}")
    lines.append(f"spectral radius       {result.spectral_radius_at_solution:.6f}")
    return "\n".join(lines) + "\n"
