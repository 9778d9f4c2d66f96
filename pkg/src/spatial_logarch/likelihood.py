"""
Gaussian quasi-log-likelihood of the log-squared model

    ln Y_t^(2) = A~ + W ln Y_t^(2) Psi + ln Y_{t-1}^(2) Pi + U_t,

with ``S = I - Psi' (x) W`` as the Jacobian of the simultaneous system.

Two things keep each evaluation cheap:

* ``ln|S|`` is reduced through the spectrum of ``W``: every eigenvalue
  ``mu`` of ``W`` contributes ``ln|det(I - mu Psi')|``, which is
  ``sum_i ln|1 - lambda_i mu|`` over the eigenvalues ``lambda_i`` of ``Psi``;
* the residual sum of squares is quadratic in ``(A~, Psi, Pi)`` with
  regressors ``[intercept, W ln Y_t^(2), ln Y_{t-1}^(2)]`` shared by every
  variable, so the cross-products are formed once per data set.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .model import AMode, Panel, log_sq_transform, n_params
from .weights import SpatialWeights

__all__ = [
    "LikelihoodWorkspace",
    "SingularJacobian",
    "log_det_s",
    "log_det_s_lu",
    "log_likelihood",
    "log_likelihood_gradient",
    "residuals",
]

LOG_2PI = np.log(2.0 * np.pi)


class SingularJacobian(ValueError):
    """``S = I - Psi' (x) W`` is (numerically) singular."""


def log_det_s(psi, w_eigenvalues, tol: float = 1e-12) -> float:
    """``ln|det(I - Psi' (x) W)|`` from the eigenvalues of ``Psi`` and ``W``."""
    lam = np.linalg.eigvals(np.asarray(psi, dtype=float))
    mu = np.asarray(w_eigenvalues)
    factors = np.abs(1.0 - np.multiply.outer(lam, mu))
    if factors.min(initial=np.inf) < tol:
        raise SingularJacobian(f"|1 - lambda mu| = {factors.min():.3e} < {tol:g}")
    return float(np.sum(np.log(factors)))


def s_matrix(psi, w: SpatialWeights) -> sparse.csc_matrix:
    psi = np.asarray(psi, dtype=float)
    p = psi.shape[0]
    return (sparse.identity(p * w.n, format="csc") - sparse.kron(sparse.csr_matrix(psi.T), w.csr)).tocsc()


def log_det_s_lu(psi, w: SpatialWeights) -> float:
    """``ln|det S|`` by sparse LU; the fallback when no spectrum of ``W`` is available."""
    try:
        lu = spla.splu(s_matrix(psi, w))
    except RuntimeError as exc:  # "Factor is exactly singular"
        raise SingularJacobian(str(exc)) from None
    diag = np.abs(lu.U.diagonal())
    if diag.min(initial=np.inf) < 1e-12:
        raise SingularJacobian("sparse LU found a (near) zero pivot")
    return float(np.sum(np.log(diag)))


class LikelihoodWorkspace:
    """Data-dependent quantities cached once per fit.

    Parameters
    ----------
    data : Panel or ndarray
        The panel, or an already log-squared ``(n, p, T + 1)`` array when
        ``transformed=True``.
    weights : SpatialWeights
    a_mode : AMode
    logdet_method : {"eigen", "lu"}
        ``"eigen"`` uses the cached spectrum of ``W`` and falls back to
        ``"lu"`` if the eigenvalue solver fails.
    """

    def __init__(self, data, weights: SpatialWeights, a_mode=AMode.CONSTANT,
                 transformed: bool = False, logdet_method: str = "eigen"):
        if isinstance(data, Panel) or not transformed:
            ddot = log_sq_transform(data)
        else:
            ddot = np.asarray(data, dtype=float)
        if ddot.ndim != 3 or ddot.shape[2] < 2:
            raise ValueError(f"expected an (n, p, T + 1) array, got shape {ddot.shape}")
        if not np.all(np.isfinite(ddot)):
            raise ValueError("log-squared data must be finite")
        n, p, t1 = ddot.shape
        if weights.n != n:
            raise ValueError(f"weights are {weights.n}x{weights.n} but the panel has n={n} locations")
        self.n, self.p, self.t_len = n, p, t1 - 1
        self.a_mode = AMode(a_mode)
        self.weights = weights
        self.ddot = ddot
        ddot.flags.writeable = False

        self.logdet_method = logdet_method
        self.w_eigenvalues = None
        if logdet_method == "eigen":
            try:
                self.w_eigenvalues = weights.eigenvalues
            except np.linalg.LinAlgError:
                self.logdet_method = "lu"
        elif logdet_method != "lu":
            raise ValueError(f"unknown logdet_method {logdet_method!r}")
        if self.w_eigenvalues is not None and np.all(self.w_eigenvalues.imag == 0):
            self._mu = self.w_eigenvalues.real
        else:
            self._mu = self.w_eigenvalues

        # (T, n, p) stacks of the current, spatially lagged and time-lagged values
        y = np.moveaxis(ddot, 2, 0)
        cur = y[1:]
        wy = np.stack([weights.csr @ yt for yt in cur])
        lag = y[:-1]
        reg = np.concatenate([wy, lag], axis=2)
        self._cur, self._wy, self._lag = cur, wy, lag
        self._ss = float(np.sum(cur * cur))
        self._rtr = np.einsum("tia,tib->ab", reg, reg)
        self._rty = np.einsum("tia,tib->ab", reg, cur)
        if self.a_mode is AMode.CONSTANT:
            self._dtd = float(n * self.t_len)
            self._dty = cur.sum(axis=(0, 1))[None, :]
            self._dtr = reg.sum(axis=(0, 1))[None, :]
        else:
            self._dtd = float(self.t_len)
            self._dty = cur.sum(axis=0)
            self._dtr = reg.sum(axis=0)

    @property
    def n_obs(self) -> int:
        return self.n * self.p * self.t_len

    @property
    def n_params(self) -> int:
        return n_params(self.n, self.p, self.a_mode)

    def split(self, theta):
        """Return ``(intercept rows, Psi, Pi)`` views of a packed vector."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ValueError(f"theta has shape {theta.shape}, expected ({self.n_params},)")
        p = self.p
        k = p if self.a_mode is AMode.CONSTANT else self.n * p
        c = theta[:k].reshape((-1, p), order="F")
        psi = theta[k:k + p * p].reshape((p, p), order="F")
        pi = theta[k + p * p:].reshape((p, p), order="F")
        return c, psi, pi

    def join(self, c, psi, pi) -> np.ndarray:
        return np.concatenate([np.ravel(c, order="F"), np.ravel(psi, order="F"), np.ravel(pi, order="F")])

    # -- pieces ---------------------------------------------------------
    def log_det(self, psi) -> float:
        if self.logdet_method == "eigen":
            return log_det_s(psi, self.w_eigenvalues)
        return log_det_s_lu(psi, self.weights)

    def log_det_grad(self, psi) -> np.ndarray:
        """Gradient of ``ln|S|`` with respect to ``Psi`` (a ``p x p`` matrix)."""
        psi = np.asarray(psi, dtype=float)
        p = self.p
        if self.logdet_method == "eigen":
            mu = self._mu
            b = np.eye(p)[None] - mu[:, None, None] * psi.T[None]
            binv = np.linalg.inv(b)
            return -np.real(np.einsum("j,jab->ab", mu, binv))
        # d ln|S| / d Psi_ab = -tr(S^{-1} (E_ba (x) W)) = -tr([S^{-1}]_{a,b} W)
        n = self.n
        lu = spla.splu(s_matrix(psi, self.weights))
        wt = self.weights.csr.T.toarray()
        grad = np.empty((p, p))
        for b in range(p):
            rhs = np.zeros((n * p, n))
            rhs[b * n:(b + 1) * n] = np.eye(n)
            z = lu.solve(rhs)
            for a in range(p):
                grad[a, b] = -np.sum(z[a * n:(a + 1) * n] * wt)
        return grad

    def quadratic(self, c, psi, pi) -> float:
        """Residual sum of squares ``sum_t r_t' r_t`` from the cached cross-products."""
        beta = np.vstack([psi, pi])
        dc = self._dtd * np.sum(c * c)
        rb = np.sum(beta * (self._rtr @ beta))
        return float(
            self._ss + dc + rb
            - 2.0 * np.sum(c * self._dty)
            - 2.0 * np.sum(beta * self._rty)
            + 2.0 * np.sum(c * (self._dtr @ beta))
        )

    def quadratic_grad(self, c, psi, pi):
        beta = np.vstack([psi, pi])
        gc = 2.0 * (self._dtd * c - self._dty + self._dtr @ beta)
        gb = 2.0 * (self._rtr @ beta - self._rty + self._dtr.T @ c)
        return gc, gb[:self.p], gb[self.p:]

    # -- public evaluations ---------------------------------------------
    def residuals(self, theta) -> np.ndarray:
        """``(T, n p)`` array of ``r_t = S y_t - vec(A~) - (Pi' (x) I) y_{t-1}``."""
        c, psi, pi = self.split(theta)
        r = self._cur - self._wy @ psi - c[None] - self._lag @ pi
        return np.stack([rt.ravel(order="F") for rt in r])

    def log_likelihood(self, theta, sigma2_u: float) -> float:
        c, psi, pi = self.split(theta)
        return float(
            -0.5 * self.n_obs * (LOG_2PI + np.log(sigma2_u))
            + self.t_len * self.log_det(psi)
            - self.quadratic(c, psi, pi) / (2.0 * sigma2_u)
        )

    def mean_log_likelihood(self, theta, sigma2_u: float) -> float:
        """Log-likelihood per observation, ``ln L / (n p T)``."""
        return self.log_likelihood(theta, sigma2_u) / self.n_obs

    def gradient(self, theta, sigma2_u: float) -> np.ndarray:
        c, psi, pi = self.split(theta)
        gc, gpsi, gpi = self.quadratic_grad(c, psi, pi)
        scale = -0.5 / sigma2_u
        return self.join(scale * gc, self.t_len * self.log_det_grad(psi) + scale * gpsi, scale * gpi)

    def value_and_gradient(self, theta, sigma2_u: float):
        return self.log_likelihood(theta, sigma2_u), self.gradient(theta, sigma2_u)


def residuals(theta, ws: LikelihoodWorkspace) -> np.ndarray:
    return ws.residuals(theta)


def log_likelihood(theta, ws: LikelihoodWorkspace, sigma2_u: float) -> float:
    return ws.log_likelihood(theta, sigma2_u)


def log_likelihood_gradient(theta, ws: LikelihoodWorkspace, sigma2_u: float) -> np.ndarray:
    return ws.gradient(theta, sigma2_u)
