"""
Core value types for the multivariate spatiotemporal log-ARCH model.

Conventions
-----------
Observations are stored as an ``(n, p, T + 1)`` array: ``n`` locations,
``p`` variables and ``T + 1`` time slices, where slice 0 is the
conditioning observation ``Y_0``.

The parameter vector ``theta`` stacks ``vec(A~)``, ``vec(Psi)`` and
``vec(Pi)`` column-major.  ``A~`` is either a ``p``-vector (constant across
space) or an ``(n, p)`` matrix (free per location), always on the centred
log-squared scale, ``A~ = A + E[ln eps^2]``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np
from scipy import special

if TYPE_CHECKING:
    from .weights import SpatialWeights

__all__ = [
    "AMode",
    "Dimensions",
    "ErrorDist",
    "ModelConfig",
    "Panel",
    "ParamSet",
    "ZeroValueError",
    "error_dist_moments",
    "log_sq_transform",
    "n_params",
    "pack_params",
    "unpack_params",
]


class ZeroValueError(ValueError):
    """Raised when a panel holds exact zeros, so ``ln(y^2)`` is undefined."""

    def __init__(self, coordinates: Sequence[tuple[int, int, int]]):
        self.coordinates = [tuple(int(c) for c in xyz) for xyz in coordinates]
        shown = ", ".join(str(c) for c in self.coordinates[:10])
        more = "" if len(self.coordinates) <= 10 else f" (+{len(self.coordinates) - 10} more)"
        super().__init__(
            f"{len(self.coordinates)} exact zero value(s) at (location, variable, time): {shown}{more}"
        )


class AMode(str, enum.Enum):
    """How the intercept ``A~`` varies over space."""

    CONSTANT = "constant"
    FREE = "free"


@dataclass(frozen=True)
class Dimensions:
    n: int
    p: int
    t_len: int

    def __post_init__(self):
        for name in ("n", "p", "t_len"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")


@dataclass(frozen=True, eq=False)
class Panel:
    """Observed panel ``Y`` with labels.

    ``values[i, j, t]`` is variable ``j`` at location ``i`` and time slice ``t``.
    ``jittered`` optionally flags entries that were replaced by a small random
    draw because the raw value was an exact zero.
    """

    values: np.ndarray
    location_ids: tuple = None
    variable_names: tuple = None
    time_labels: tuple = None
    jittered: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 3 or values.shape[2] < 2:
            raise ValueError(f"panel values must have shape (n, p, T + 1) with T >= 1, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("panel values must be finite")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        n, p, t1 = values.shape
        defaults = {
            "location_ids": [str(i) for i in range(n)],
            "variable_names": [f"y{j + 1}" for j in range(p)],
            "time_labels": [str(t) for t in range(t1)],
        }
        for name, size in (("location_ids", n), ("variable_names", p), ("time_labels", t1)):
            labels = getattr(self, name)
            labels = tuple(defaults[name] if labels is None else (str(x) for x in labels))
            if len(labels) != size:
                raise ValueError(f"{name} has {len(labels)} labels, expected {size}")
            object.__setattr__(self, name, labels)
        if self.jittered is not None:
            mask = np.asarray(self.jittered, dtype=bool)
            if mask.shape != values.shape:
                raise ValueError("jittered mask must match the panel shape")
            object.__setattr__(self, "jittered", mask)

    @property
    def dims(self) -> Dimensions:
        n, p, t1 = self.values.shape
        return Dimensions(n, p, t1 - 1)

    def zero_coordinates(self) -> list[tuple[int, int, int]]:
        return [tuple(int(c) for c in idx) for idx in np.argwhere(self.values == 0.0)]

    def permute_locations(self, order) -> "Panel":
        order = np.asarray(order)
        return Panel(
            self.values[order],
            location_ids=[self.location_ids[i] for i in order],
            variable_names=self.variable_names,
            time_labels=self.time_labels,
            jittered=None if self.jittered is None else self.jittered[order],
        )


@dataclass(frozen=True, eq=False)
class ParamSet:
    """Model parameters ``(A~, Psi, Pi)`` plus the known transformed-error variance."""

    a_tilde: np.ndarray
    psi: np.ndarray
    pi: np.ndarray
    sigma2_u: float

    def __post_init__(self):
        a = np.array(self.a_tilde, dtype=float)
        psi = np.array(self.psi, dtype=float)
        pi = np.array(self.pi, dtype=float)
        if psi.ndim != 2 or psi.shape[0] != psi.shape[1]:
            raise ValueError(f"psi must be square, got shape {psi.shape}")
        p = psi.shape[0]
        if pi.shape != (p, p):
            raise ValueError(f"pi must have shape {(p, p)}, got {pi.shape}")
        if a.ndim == 0:
            a = np.full(p, float(a))
        if a.ndim not in (1, 2) or a.shape[-1] != p:
            raise ValueError(f"a_tilde must be a {p}-vector or an (n, {p}) matrix, got shape {a.shape}")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(psi)) and np.all(np.isfinite(pi))):
            raise ValueError("parameters must be finite")
        if not self.sigma2_u > 0:
            raise ValueError(f"sigma2_u must be positive, got {self.sigma2_u}")
        for arr in (a, psi, pi):
            arr.flags.writeable = False
        object.__setattr__(self, "a_tilde", a)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "sigma2_u", float(self.sigma2_u))

    @property
    def p(self) -> int:
        return self.psi.shape[0]

    @property
    def a_mode(self) -> AMode:
        return AMode.CONSTANT if self.a_tilde.ndim == 1 else AMode.FREE

    @classmethod
    def from_a(cls, a, psi, pi, error_dist: "ErrorDist", sigma2_u: float | None = None) -> "ParamSet":
        """Build from the uncentred intercept ``A`` of the volatility equation."""
        sigma2_u = error_dist.var_log_sq if sigma2_u is None else sigma2_u
        return cls(np.asarray(a, dtype=float) + error_dist.mean_log_sq, psi, pi, sigma2_u)

    def a(self, mean_log_sq: float) -> np.ndarray:
        """Uncentred intercept ``A = A~ - E[ln eps^2]``."""
        return self.a_tilde - mean_log_sq

    def a_tilde_matrix(self, n: int) -> np.ndarray:
        if self.a_tilde.ndim == 1:
            return np.broadcast_to(self.a_tilde, (n, self.p))
        if self.a_tilde.shape[0] != n:
            raise ValueError(f"a_tilde has {self.a_tilde.shape[0]} rows, expected {n}")
        return self.a_tilde


def n_params(n: int, p: int, a_mode: AMode) -> int:
    return (p if AMode(a_mode) is AMode.CONSTANT else n * p) + 2 * p * p


def pack_params(params: ParamSet, a_mode: AMode) -> np.ndarray:
    """Flatten to ``(vec(A~), vec(Psi), vec(Pi))`` in column-major order."""
    a_mode = AMode(a_mode)
    if params.a_mode is not a_mode:
        raise ValueError(
            f"a_tilde of shape {params.a_tilde.shape} does not match a_mode={a_mode.value!r}"
        )
    return np.concatenate(
        [params.a_tilde.ravel(order="F"), params.psi.ravel(order="F"), params.pi.ravel(order="F")]
    )


def unpack_params(theta, n: int, p: int, a_mode: AMode, sigma2_u: float) -> ParamSet:
    theta = np.asarray(theta, dtype=float)
    a_mode = AMode(a_mode)
    if theta.shape != (n_params(n, p, a_mode),):
        raise ValueError(
            f"theta has shape {theta.shape}, expected ({n_params(n, p, a_mode)},) "
            f"for n={n}, p={p}, a_mode={a_mode.value!r}"
        )
    k = p if a_mode is AMode.CONSTANT else n * p
    a = theta[:k] if a_mode is AMode.CONSTANT else theta[:k].reshape((n, p), order="F")
    psi = theta[k:k + p * p].reshape((p, p), order="F")
    pi = theta[k + p * p:].reshape((p, p), order="F")
    return ParamSet(a, psi, pi, sigma2_u)


def log_sq_transform(panel: Panel | np.ndarray) -> np.ndarray:
    """Elementwise ``ln(y^2)``; raises :class:`ZeroValueError` on exact zeros."""
    values = panel.values if isinstance(panel, Panel) else np.asarray(panel, dtype=float)
    zeros = np.argwhere(values == 0.0)
    if len(zeros):
        raise ZeroValueError(zeros)
    return np.log(np.square(values))


def error_dist_moments(kind: str, df: float | None = None) -> tuple[float, float]:
    """Mean and variance of ``ln eps^2`` for a unit-variance innovation ``eps``.

    For Student-t innovations scaled by ``sqrt((df - 2) / df)``,
    ``ln eps^2 = ln c^2 + ln df + ln Z^2 - ln V`` with ``Z`` standard normal and
    ``V ~ chi^2(df)``, which gives the digamma/trigamma expressions below.
    """
    if kind == "normal":
        return float(special.digamma(0.5) + np.log(2.0)), float(special.polygamma(1, 0.5))
    if kind == "student_t":
        if df is None or not df > 2:
            raise ValueError(f"Student-t innovations need df > 2 for unit variance, got {df}")
        c2 = (df - 2.0) / df
        mean = special.digamma(0.5) - special.digamma(df / 2.0) + np.log(df) + np.log(c2)
        var = special.polygamma(1, 0.5) + special.polygamma(1, df / 2.0)
        return float(mean), float(var)
    raise ValueError(f"unknown error distribution {kind!r}")


@dataclass(frozen=True)
class ErrorDist:
    """Innovation distribution, scaled to unit variance."""

    kind: str = "normal"
    df: float | None = None
    mean_log_sq: float = field(init=False)
    var_log_sq: float = field(init=False)

    def __post_init__(self):
        if self.kind == "normal" and self.df is not None:
            raise ValueError("df is only meaningful for Student-t innovations")
        mean, var = error_dist_moments(self.kind, self.df)
        object.__setattr__(self, "mean_log_sq", mean)
        object.__setattr__(self, "var_log_sq", var)

    @classmethod
    def normal(cls) -> "ErrorDist":
        return cls("normal")

    @classmethod
    def student_t(cls, df: float) -> "ErrorDist":
        return cls("student_t", float(df))

    @classmethod
    def parse(cls, label: str) -> "ErrorDist":
        """Parse ``"normal"``, ``"t3"`` or ``"t:4.5"``."""
        label = label.strip().lower()
        if label in ("normal", "gaussian", "n"):
            return cls.normal()
        if label.startswith("t"):
            return cls.student_t(float(label[1:].lstrip(":")))
        raise ValueError(f"cannot parse error distribution {label!r}")

    @property
    def label(self) -> str:
        if self.kind == "normal":
            return "normal"
        return f"t{self.df:g}"

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "normal":
            return rng.standard_normal(size)
        return rng.standard_t(self.df, size) * np.sqrt((self.df - 2.0) / self.df)


@dataclass(frozen=True, eq=False)
class ModelConfig:
    dims: Dimensions
    weights: SpatialWeights
    error_dist: ErrorDist = field(default_factory=ErrorDist.normal)
    a_mode: AMode = AMode.CONSTANT
    seed: int = 0

    def __post_init__(self):
        if self.weights.n != self.dims.n:
            raise ValueError(f"weights are {self.weights.n}x{self.weights.n}, but n={self.dims.n}")
        object.__setattr__(self, "a_mode", AMode(self.a_mode))
        if self.dims.t_len == 1 and self.a_mode is not AMode.CONSTANT:
            raise ValueError("with T = 1 the intercept is only identified when constant across space")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
