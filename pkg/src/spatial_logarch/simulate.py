"""
Simulation of the spatiotemporal log-ARCH process and stability analysis.

The process is stable when the spectral radius of ``S^{-1} (Pi' (x) I)`` is
below one.  Writing ``W`` in Schur form shows that this operator is
block-triangular with ``p x p`` diagonal blocks ``(I - mu Psi')^{-1} Pi'``,
one per eigenvalue ``mu`` of ``W``, so its spectrum is the union of the block
spectra.  That is the default route; the full ``np x np`` operator and a
matrix-free Arnoldi iteration are available as alternatives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .model import ModelConfig, Panel, ParamSet
from .likelihood import s_matrix
from .weights import SpatialWeights

__all__ = [
    "SimOutput",
    "StabilityError",
    "StabilityReport",
    "check_stability",
    "simulate",
    "spectral_radius",
    "stationary_log_mean",
]

DENSE_LIMIT = 2000
SPECTRAL_LIMIT = 3000


class StabilityError(ValueError):
    """Parameters do not generate a stable process."""

    def __init__(self, report: "StabilityReport"):
        self.report = report
        reason = "S is singular" if not report.s_invertible else f"spectral radius {report.spectral_radius:.6g} >= 1"
        super().__init__(f"unstable parameters: {reason}")


@dataclass(frozen=True)
class StabilityReport:
    spectral_radius: float
    stable: bool
    s_invertible: bool
    method: str


def _block_operators(psi, pi, mu):
    p = psi.shape[0]
    b = np.eye(p)[None] - np.asarray(mu)[:, None, None] * psi.T[None]
    return b, np.linalg.solve(b, np.broadcast_to(pi.T, b.shape))


def spectral_radius(psi, pi, w_eigenvalues, with_grad: bool = False):
    """Spectral radius of ``S^{-1}(Pi' (x) I)`` from the spectrum of ``W``.

    With ``with_grad=True`` also returns the derivatives with respect to
    ``Psi`` and ``Pi`` (``p x p`` each) of the modulus of the dominant
    eigenvalue, from its left and right eigenvectors.
    """
    psi = np.asarray(psi, dtype=float)
    pi = np.asarray(pi, dtype=float)
    mu = np.asarray(w_eigenvalues)
    if np.all(np.imag(mu) == 0):
        mu = np.real(mu)
    b, c = _block_operators(psi, pi, mu)
    nus = np.linalg.eigvals(c)
    mods = np.abs(nus)
    j, k = np.unravel_index(np.argmax(mods), mods.shape)
    rho = float(mods[j, k])
    if not with_grad:
        return rho
    p = psi.shape[0]
    if rho == 0.0:
        return rho, np.zeros((p, p)), np.zeros((p, p))
    vals, right = np.linalg.eig(c[j])
    k = int(np.argmax(np.abs(vals)))
    nu, v = vals[k], right[:, k]
    lvals, left = np.linalg.eig(c[j].conj().T)
    wl = left[:, int(np.argmin(np.abs(lvals - np.conj(nu))))]
    denom = np.vdot(wl, v)
    z = np.linalg.solve(b[j].conj().T, wl)  # z^H = w^H B^{-1}
    outer = np.outer(v, np.conj(z))  # outer[b, a] = conj(z_a) v_b
    dnu_dpi = outer / denom
    dnu_dpsi = mu[j] * nu * dnu_dpi
    scale = np.conj(nu) / abs(nu)
    return rho, np.real(scale * dnu_dpsi), np.real(scale * dnu_dpi)


def check_stability(params: ParamSet, w: SpatialWeights, method: str = "auto",
                    tol: float = 1e-10) -> StabilityReport:
    """Stability of ``params`` on ``w``.

    ``method`` is ``"spectral"`` (blocks over the spectrum of ``W``),
    ``"dense"`` (eigenvalues of the explicit ``np x np`` operator),
    ``"iterative"`` (Arnoldi on the matrix-free operator) or ``"auto"``.
    Singular ``S`` is reported, not raised.
    """
    psi, pi = params.psi, params.pi
    p, n = params.p, w.n
    if method == "auto":
        method = "spectral" if n <= SPECTRAL_LIMIT else "iterative"
    lam = np.linalg.eigvals(psi)

    if method == "spectral":
        mu = w.eigenvalues
        invertible = bool(np.abs(1.0 - np.multiply.outer(lam, mu)).min() > tol)
        rho = spectral_radius(psi, pi, mu) if invertible else np.inf
    elif method == "dense":
        if n * p > DENSE_LIMIT:
            raise ValueError(f"dense stability check limited to n p <= {DENSE_LIMIT}")
        s = s_matrix(psi, w).toarray()
        invertible = bool(np.linalg.svd(s, compute_uv=False).min() > tol)
        if invertible:
            op = np.linalg.solve(s, np.kron(pi.T, np.eye(n)))
            rho = float(np.abs(np.linalg.eigvals(op)).max())
        else:
            rho = np.inf
    elif method == "iterative":
        try:
            lu = spla.splu(s_matrix(psi, w))
            invertible = bool(np.abs(lu.U.diagonal()).min() > tol)
        except RuntimeError:
            invertible = False
        if invertible:
            lag = sparse.kron(sparse.csr_matrix(pi.T), sparse.identity(n)).tocsr()
            op = spla.LinearOperator((n * p, n * p), matvec=lambda x: lu.solve(lag @ x), dtype=float)
            if np.all(pi == 0):
                rho = 0.0
            else:
                vals = spla.eigs(op, k=1, which="LM", return_eigenvectors=False, tol=1e-10, maxiter=10_000)
                rho = float(np.abs(vals).max())
        else:
            rho = np.inf
    else:
        raise ValueError(f"unknown method {method!r}")
    return StabilityReport(float(rho), bool(invertible and rho < 1.0), invertible, method)


def stationary_log_mean(params: ParamSet, w: SpatialWeights) -> np.ndarray:
    """Long-run mean of ``vec(ln Y_t^(2))``: ``(S - Pi' (x) I)^{-1} vec(A~)``."""
    report = check_stability(params, w)
    if not report.stable:
        raise StabilityError(report)
    return _stationary_mean(params, w)


def _stationary_mean(params: ParamSet, w: SpatialWeights) -> np.ndarray:
    n = w.n
    a = params.a_tilde_matrix(n).ravel(order="F")
    lag = sparse.kron(sparse.csr_matrix(params.pi.T), sparse.identity(n))
    return spla.splu((s_matrix(params.psi, w) - lag).tocsc()).solve(a)


@dataclass(frozen=True, eq=False)
class SimOutput:
    panel: Panel
    log_h: np.ndarray
    innovations: np.ndarray | None = None


def simulate(config: ModelConfig, params: ParamSet, burn_in: int = 50,
             innovations: np.ndarray | None = None, keep_innovations: bool = False,
             rng: np.random.Generator | None = None) -> SimOutput:
    """Draw a sample path of length ``T + 1`` (slice 0 is ``Y_0``).

    The simultaneous system ``S x_t = vec(A~) + (Pi' (x) I) x_{t-1} + u_t``
    is solved exactly at every step with one sparse LU factorisation of
    ``S``.  The recursion starts at the stationary mean and discards
    ``burn_in`` slices.

    ``innovations`` may supply the ``(n, p, burn_in + T + 1)`` array of draws
    ``Xi`` directly (e.g. for audits); otherwise they are drawn from
    ``config.error_dist`` with a generator seeded by ``config.seed`` unless
    ``rng`` is given.
    """
    w, dims, dist = config.weights, config.dims, config.error_dist
    n, p, t_len = dims.n, dims.p, dims.t_len
    if params.p != p:
        raise ValueError(f"parameters are for p={params.p}, config has p={p}")
    if burn_in < 0:
        raise ValueError("burn_in must be nonnegative")
    report = check_stability(params, w)
    if not report.stable:
        raise StabilityError(report)

    steps = burn_in + t_len + 1
    if innovations is None:
        rng = np.random.default_rng(config.seed) if rng is None else rng
        # Column j at step t is an iid n-vector for variable j.
        xi = np.transpose(dist.draw(rng, (steps, p, n)), (2, 1, 0))
    else:
        xi = np.asarray(innovations, dtype=float)
        if xi.shape != (n, p, steps):
            raise ValueError(f"innovations must have shape {(n, p, steps)}, got {xi.shape}")
    log_xi2 = np.log(np.square(xi))
    if not np.all(np.isfinite(log_xi2)):
        raise ValueError("innovations contain exact zeros")

    s = s_matrix(params.psi, w)
    try:
        lu = spla.splu(s)
    except RuntimeError as exc:
        raise np.linalg.LinAlgError(f"cannot factorise S: {exc}") from None
    lag = sparse.kron(sparse.csr_matrix(params.pi.T), sparse.identity(n)).tocsr()
    a = params.a_tilde_matrix(n).ravel(order="F")
    x = _stationary_mean(params, w)

    xs = np.empty((n * p, steps))
    for t in range(steps):
        u = log_xi2[:, :, t].ravel(order="F") - dist.mean_log_sq
        rhs = a + lag @ x + u
        x = lu.solve(rhs)
        if np.linalg.norm(s @ x - rhs) > 1e-9 * max(np.linalg.norm(rhs), 1.0):
            raise np.linalg.LinAlgError("linear solve residual too large")
        xs[:, t] = x

    log_y2 = xs.reshape((n, p, steps), order="F")[:, :, burn_in:]
    xi_kept = xi[:, :, burn_in:]
    log_h = log_y2 - log_xi2[:, :, burn_in:]
    y = np.exp(0.5 * log_h) * xi_kept
    panel = Panel(y)
    return SimOutput(panel, log_h, xi_kept.copy() if keep_innovations or innovations is not None else None)
