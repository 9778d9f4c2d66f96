"""Independent reference computations: dense matrices, explicit Kronecker products."""

import numpy as np


def dense_s(psi, w_dense):
    n, p = w_dense.shape[0], psi.shape[0]
    return np.eye(n * p) - np.kron(psi.T, w_dense)


def dense_log_det(psi, w_dense):
    sign, logabs = np.linalg.slogdet(dense_s(psi, w_dense))
    assert sign != 0
    return logabs


def dense_log_likelihood(a_tilde, psi, pi, ddot, w_dense, sigma2_u):
    """Literal evaluation with ``(I_p (x) Y_{t-1}) vec(Pi)`` as the lag regressor."""
    n, p, t1 = ddot.shape
    t_len = t1 - 1
    s = dense_s(psi, w_dense)
    a = np.broadcast_to(a_tilde, (n, p)).ravel(order="F")
    total = 0.0
    for t in range(1, t1):
        y = ddot[:, :, t].ravel(order="F")
        ylag = ddot[:, :, t - 1]
        r = s @ y - a - np.kron(np.eye(p), ylag) @ pi.ravel(order="F")
        total += r @ r
    _, logdet = np.linalg.slogdet(s)
    return -0.5 * t_len * n * p * np.log(2 * np.pi * sigma2_u) + t_len * logdet - total / (2 * sigma2_u)


def dense_spectral_radius(psi, pi, w_dense):
    n = w_dense.shape[0]
    op = np.linalg.solve(dense_s(psi, w_dense), np.kron(pi.T, np.eye(n)))
    return float(np.abs(np.linalg.eigvals(op)).max())


def grid_neighbours(rows, cols, queen):
    """Brute-force neighbour sets on a lattice, cells numbered row-major."""
    out = {}
    for r in range(rows):
        for c in range(cols):
            nb = set()
            for r2 in range(rows):
                for c2 in range(cols):
                    dr, dc = abs(r - r2), abs(c - c2)
                    if (dr, dc) == (0, 0):
                        continue
                    if (dr + dc == 1) or (queen and dr == 1 and dc == 1):
                        nb.add(r2 * cols + c2)
            out[r * cols + c] = nb
    return out


def central_difference(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def random_weights(rng, n, kind):
    """Nonnegative, zero-diagonal test matrices of a few shapes."""
    if kind == "symmetric":
        m = rng.random((n, n)) * (rng.random((n, n)) < 0.3)
        m = np.triu(m, 1)
        m = m + m.T
    else:
        m = rng.random((n, n)) * (rng.random((n, n)) < 0.3)
        np.fill_diagonal(m, 0.0)
    for i in range(n):
        if m[i].sum() == 0:
            m[i, (i + 1) % n] = 1.0
    if kind in ("standardized", "symmetric_standardized"):
        m = m / m.sum(axis=1, keepdims=True)
    else:
        m = m / np.abs(np.linalg.eigvals(m)).max()
    return m


def random_stable_psi_pi(rng, p, scale=0.8):
    psi = rng.uniform(-1, 1, (p, p))
    psi *= rng.uniform(0.1, scale) / np.abs(psi).sum(axis=0).max()
    pi = rng.uniform(-1, 1, (p, p))
    pi *= rng.uniform(0.05, 0.9) * (1 - np.abs(psi).sum(axis=0).max()) / np.abs(pi).sum(axis=0).max()
    return psi, pi
