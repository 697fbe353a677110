"""Demand models, seasonality and trajectory containers.

Conventions used throughout the package:

* Vectors are 1-D numpy arrays of length ``n``; componentwise products are
  always written out explicitly (``p * S``) and matrix-vector products use
  ``@``.
* Demand ``S`` is the de-seasoned sales rate.  Inventory obeys
  ``dI/dt = -S sigma + rho2 sigma`` where ``sigma`` is the seasonality
  density normalized to integrate to one over ``[0, T]``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class DomainError(ValueError):
    """Raised when a model is evaluated outside its domain."""


class ModelKind(str, enum.Enum):
    CONSTANT_ELASTICITY = "constant_elasticity"
    EXPONENTIAL = "exponential"

    @classmethod
    def parse(cls, value: "str | ModelKind") -> "ModelKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {
            "ce": cls.CONSTANT_ELASTICITY,
            "constantelasticity": cls.CONSTANT_ELASTICITY,
            "constant_elasticity": cls.CONSTANT_ELASTICITY,
            "exp": cls.EXPONENTIAL,
            "exponential": cls.EXPONENTIAL,
        }
        if key not in aliases:
            raise ValueError(f"unknown model kind {value!r}")
        return aliases[key]


def _as_vector(x, n: int, name: str) -> np.ndarray:
    arr = np.array(x, dtype=float).reshape(-1)
    if arr.shape != (n,):
        raise ValueError(f"{name}: expected length {n}, got shape {arr.shape}")
    return arr


def _as_matrix(x, n: int, name: str) -> np.ndarray:
    arr = np.array(x, dtype=float)
    if arr.ndim == 0 and n == 1:
        arr = arr.reshape(1, 1)
    if arr.shape != (n, n):
        raise ValueError(f"{name}: expected shape ({n}, {n}), got {arr.shape}")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Parameters of a multi-item demand model.

    ``gamma`` is the cross-elasticity matrix for the constant-elasticity
    (log-linear) model and the price exponent matrix for the exponential
    model.  ``alpha`` is the cross-inventory effect matrix.
    """

    S0: np.ndarray
    gamma: np.ndarray
    alpha: np.ndarray
    c: np.ndarray
    kind: ModelKind = ModelKind.CONSTANT_ELASTICITY

    def __post_init__(self):
        kind = ModelKind.parse(self.kind)
        S0 = np.array(self.S0, dtype=float).reshape(-1)
        n = S0.shape[0]
        if n < 1:
            raise ValueError("S0: need at least one item")
        gamma = _as_matrix(self.gamma, n, "gamma")
        alpha = _as_matrix(self.alpha, n, "alpha")
        c = _as_vector(self.c, n, "c")
        for name, arr in (("S0", S0), ("gamma", gamma), ("alpha", alpha), ("c", c)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name}: non-finite entry")
        if np.any(S0 <= 0):
            i = int(np.argmin(S0))
            raise ValueError(f"S0[{i}] = {S0[i]} must be positive")
        if np.any(c < 0):
            i = int(np.argmin(c))
            raise ValueError(f"c[{i}] = {c[i]} must be non-negative")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "S0", _frozen(S0))
        object.__setattr__(self, "gamma", _frozen(gamma))
        object.__setattr__(self, "alpha", _frozen(alpha))
        object.__setattr__(self, "c", _frozen(c))

    @property
    def n(self) -> int:
        return self.S0.shape[0]

    def replace(self, **changes) -> "ModelParams":
        fields = dict(S0=self.S0, gamma=self.gamma, alpha=self.alpha, c=self.c, kind=self.kind)
        fields.update(changes)
        return ModelParams(**fields)

    @classmethod
    def one_item(cls, S0: float, gamma: float, alpha: float, c: float = 0.0,
                 kind: "str | ModelKind" = ModelKind.CONSTANT_ELASTICITY) -> "ModelParams":
        return cls(S0=[S0], gamma=[[gamma]], alpha=[[alpha]], c=[c], kind=ModelKind.parse(kind))


def _check_positive(x: np.ndarray, name: str) -> None:
    bad = np.flatnonzero(~(x > 0))
    if bad.size:
        i = int(bad[0])
        raise DomainError(f"{name}[{i}] = {x[i]} must be positive")


def log_demand(params: ModelParams, I: np.ndarray, p: np.ndarray) -> np.ndarray:
    logI = np.log(I)
    if params.kind is ModelKind.CONSTANT_ELASTICITY:
        return np.log(params.S0) + params.alpha @ logI + params.gamma @ np.log(p)
    return np.log(params.S0) + params.alpha @ logI + params.gamma @ p


def demand(params: ModelParams, I, p, floor: float | None = None) -> np.ndarray:
    """Sales rate ``S(I, p)``.

    If ``floor`` is given, inventory is clamped to ``max(I, floor)`` before
    evaluation so that an exhausted item (``I = 0``) does not hit the
    ``0 ** alpha`` singularity.  Negative inventory is always an error.
    """
    I = np.asarray(I, dtype=float).reshape(-1)
    p = np.asarray(p, dtype=float).reshape(-1)
    if I.shape != (params.n,) or p.shape != (params.n,):
        raise ValueError(f"expected vectors of length {params.n}")
    if floor is not None:
        bad = np.flatnonzero(I < 0)
        if bad.size:
            i = int(bad[0])
            raise DomainError(f"I[{i}] = {I[i]} must be non-negative")
        I = np.maximum(I, floor)
    _check_positive(I, "I")
    _check_positive(p, "p")
    return np.exp(log_demand(params, I, p))


def elasticity_matrix(params: ModelParams, p) -> np.ndarray:
    """Price elasticity matrix ``diag(1/S) dS/dp diag(p)`` at price ``p``."""
    if params.kind is ModelKind.CONSTANT_ELASTICITY:
        return params.gamma.copy()
    p = np.asarray(p, dtype=float).reshape(-1)
    _check_positive(p, "p")
    return params.gamma * p[None, :]


def inventory_effect_matrix(params: ModelParams) -> np.ndarray:
    return params.alpha.copy()


def demand_jacobians(params: ModelParams, I, p, floor: float | None = None):
    """Return ``(dS/dp, dS/dI)`` as dense ``n x n`` matrices."""
    I = np.asarray(I, dtype=float).reshape(-1)
    p = np.asarray(p, dtype=float).reshape(-1)
    S = demand(params, I, p, floor=floor)
    Ie = np.maximum(I, floor) if floor is not None else I
    dSdp = S[:, None] * elasticity_matrix(params, p) / p[None, :]
    dSdI = S[:, None] * params.alpha / Ie[None, :]
    return dSdp, dSdI


def demand_transference(params: ModelParams, i: int, j: int) -> float:
    """Limit of ``alpha[i, j]`` as item ``i`` runs out.

    Both supported model kinds have inventory-independent effect matrices,
    so the limit is the matrix entry itself.
    """
    n = params.n
    for name, k in (("i", i), ("j", j)):
        if not 0 <= k < n:
            raise IndexError(f"{name}={k} out of range for {n} items")
    return float(params.alpha[i, j])


@dataclass(frozen=True, eq=False)
class Seasonality:
    """Piecewise-linear seasonality density on ``[0, T]``.

    The density given by ``knots`` (rows of ``(t, sigma)``) is rescaled so
    that it integrates to one; the cumulative ``sigma_hat`` is integrated
    exactly segment by segment.
    """

    T: float
    knots: np.ndarray
    _cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        T = float(self.T)
        if not np.isfinite(T) or T <= 0:
            raise ValueError(f"T = {self.T} must be positive and finite")
        knots = np.array(self.knots, dtype=float)
        if knots.ndim != 2 or knots.shape[1] != 2 or knots.shape[0] < 2:
            raise ValueError("knots: expected at least two (t, sigma) pairs")
        if not np.all(np.isfinite(knots)):
            raise ValueError("knots: non-finite entry")
        t, s = knots[:, 0], knots[:, 1]
        if np.any(np.diff(t) <= 0):
            raise ValueError("knots: times must be strictly increasing")
        if abs(t[0]) > 1e-12 * T or abs(t[-1] - T) > 1e-12 * T:
            raise ValueError(f"knots must span [0, {T}], got [{t[0]}, {t[-1]}]")
        if np.any(s < 0):
            raise ValueError("knots: density must be non-negative")
        t = t.copy()
        t[0], t[-1] = 0.0, T
        seg = 0.5 * (s[1:] + s[:-1]) * np.diff(t)
        total = seg.sum()
        if total <= 0:
            raise ValueError("knots: density integrates to zero")
        if abs(total - 1.0) > 8 * np.finfo(float).eps:
            # leave already-normalized densities untouched so serialization round-trips exactly
            s = s / total
            seg = seg / total
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        cum[-1] = 1.0
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "knots", _frozen(np.column_stack([t, s])))
        object.__setattr__(self, "_cum", _frozen(cum))

    @classmethod
    def uniform(cls, T: float) -> "Seasonality":
        return cls(T, [[0.0, 1.0], [T, 1.0]])

    @property
    def is_uniform(self) -> bool:
        s = self.knots[:, 1]
        return bool(np.all(np.abs(s - s[0]) <= 1e-14 * s[0]))

    def __call__(self, t):
        """Return ``(sigma(t), sigma_hat(t))``; scalars in, scalars out."""
        scalar = np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        T = self.T
        if np.any(t < -1e-12 * T) or np.any(t > T * (1 + 1e-12)) or np.any(np.isnan(t)):
            raise ValueError(f"t outside [0, {T}]")
        t = np.clip(t, 0.0, T)
        kt, ks = self.knots[:, 0], self.knots[:, 1]
        k = np.clip(np.searchsorted(kt, t, side="right") - 1, 0, len(kt) - 2)
        dt = t - kt[k]
        slope = (ks[k + 1] - ks[k]) / (kt[k + 1] - kt[k])
        sigma = ks[k] + slope * dt
        cum = self._cum[k] + ks[k] * dt + 0.5 * slope * dt * dt
        cum = np.where(t >= T, 1.0, np.minimum(cum, 1.0))
        if scalar:
            return float(sigma[0]), float(cum[0])
        return sigma, cum

    def density(self, t):
        return self(t)[0]

    def cumulative(self, t):
        return self(t)[1]


def seasonality_eval(s: Seasonality, t):
    return s(t)


@dataclass(frozen=True, eq=False)
class StateSnapshot:
    t: float
    I: np.ndarray
    p: np.ndarray
    S: np.ndarray
    R: np.ndarray
    P: np.ndarray
    l: np.ndarray
    lam: np.ndarray | None
    rho2: np.ndarray


def make_snapshot(params: ModelParams, t: float, I, p, S=None, lam=None, rho2=None,
                  floor: float | None = None) -> StateSnapshot:
    """Build a snapshot, deriving ``R``, ``P`` and ``l`` from ``p`` and ``S``.

    ``P`` is computed as ``l * R`` so the Lerner identity holds bit for bit.
    """
    I = np.asarray(I, dtype=float).reshape(-1)
    p = np.asarray(p, dtype=float).reshape(-1)
    S = demand(params, I, p, floor=floor) if S is None else np.asarray(S, dtype=float).reshape(-1)
    R = p * S
    l = (p - params.c) / p
    P = l * R
    rho2 = np.zeros(params.n) if rho2 is None else np.asarray(rho2, dtype=float).reshape(-1)
    lam = None if lam is None else np.asarray(lam, dtype=float).reshape(-1)
    return StateSnapshot(float(t), I, p, S, R, P, l, lam, rho2)


@dataclass
class Trajectory:
    """Time grid with per-node states stored as ``(N+1, n)`` arrays.

    ``sigma`` and ``tau`` (``1 - sigma_hat``) are optional; ``lam`` may be
    ``None`` when no adjoint is available.
    """

    t: np.ndarray
    I: np.ndarray
    p: np.ndarray
    S: np.ndarray
    rho2: np.ndarray | None = None
    lam: np.ndarray | None = None
    sigma: np.ndarray | None = None
    tau: np.ndarray | None = None
    objective: float | None = None
    c: np.ndarray | None = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float).reshape(-1)
        m = self.t.shape[0]
        if m < 2 or np.any(np.diff(self.t) <= 0):
            raise ValueError("trajectory grid must be strictly increasing with >= 2 points")
        self.I = np.atleast_2d(np.asarray(self.I, dtype=float).reshape(m, -1))
        n = self.I.shape[1]

        def arr(x, name):
            x = np.asarray(x, dtype=float)
            if x.size != m * n:
                raise ValueError(f"{name}: expected {m} x {n} values, got shape {x.shape}")
            return x.reshape(m, n)

        self.p = arr(self.p, "p")
        self.S = arr(self.S, "S")
        self.rho2 = np.zeros((m, n)) if self.rho2 is None else arr(self.rho2, "rho2")
        if self.lam is not None:
            self.lam = arr(self.lam, "lam")
        for name in ("sigma", "tau"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=float).reshape(-1)
                if v.shape != (m,):
                    raise ValueError(f"{name}: expected {m} values")
                setattr(self, name, v)

    @property
    def n(self) -> int:
        return self.I.shape[1]

    @property
    def T(self) -> float:
        return float(self.t[-1])

    @property
    def R(self) -> np.ndarray:
        return self.p * self.S

    def __len__(self) -> int:
        return self.t.shape[0]

    def snapshot(self, params: ModelParams, k: int) -> StateSnapshot:
        lam = None if self.lam is None else self.lam[k]
        return make_snapshot(params, self.t[k], self.I[k], self.p[k], S=self.S[k],
                             lam=lam, rho2=self.rho2[k])

    def states(self, params: ModelParams) -> list[StateSnapshot]:
        return [self.snapshot(params, k) for k in range(len(self))]

    def flow_residual(self, seasonality: Seasonality | None = None) -> np.ndarray:
        """Central-difference residual of ``dI/dt + S sigma - rho2 sigma`` at interior nodes."""
        sigma = self._sigma(seasonality)
        dI = np.gradient(self.I, self.t, axis=0, edge_order=2)
        res = dI + (self.S - self.rho2) * sigma[:, None]
        return res[1:-1]

    def _sigma(self, seasonality: Seasonality | None) -> np.ndarray:
        if seasonality is not None:
            return seasonality.density(self.t)
        if self.sigma is None:
            raise ValueError("trajectory carries no seasonality; pass one explicitly")
        return self.sigma


class Mode(str, enum.Enum):
    PROFIT = "profit"
    REVENUE = "revenue"


def objective(params: ModelParams, traj: Trajectory, mode: "Mode | str" = Mode.PROFIT,
              seasonality: Seasonality | None = None) -> float:
    """Trapezoidal quadrature of the profit (or revenue) rate against ``sigma dt``."""
    mode = Mode(mode)
    if traj.n != params.n:
        raise ValueError(f"trajectory has {traj.n} items, model has {params.n}")
    sigma = traj._sigma(seasonality)
    rate = np.sum(traj.p * traj.S, axis=1)
    if mode is Mode.PROFIT:
        rate = rate - traj.rho2 @ params.c
    return float(np.trapezoid(rate * sigma, traj.t))
