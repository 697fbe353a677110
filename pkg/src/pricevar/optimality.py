"""First-order optimality residuals and conserved quantities.

All checks take a model and either a single :class:`StateSnapshot` or a
whole :class:`Trajectory` and return plain numbers or small report objects;
none of them mutate their inputs.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .model import ModelKind, ModelParams, Seasonality, StateSnapshot, Trajectory, elasticity_matrix

COND_LIMIT = 1e12
REL_DEV_FLOOR = 1e-12


class SingularMatrixError(np.linalg.LinAlgError):
    pass


def _solve(A: np.ndarray, b: np.ndarray, what: str) -> np.ndarray:
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularMatrixError(f"{what} is singular (condition number {cond:.3g})")
    return np.linalg.solve(A, b)


def _price_jacobian_T(params: ModelParams, p: np.ndarray, S: np.ndarray) -> np.ndarray:
    # (dS/dp)^T = diag(1/p) G^T diag(S)
    G = elasticity_matrix(params, p)
    return (G * S[:, None] / p[None, :]).T


def recover_lambda(params: ModelParams, snap: StateSnapshot) -> np.ndarray:
    """Adjoint implied by price stationarity: ``lam = -p - (dS/dp)^-T S``."""
    if np.any(snap.S <= 0):
        raise ValueError("recover_lambda needs strictly positive demand")
    JT = _price_jacobian_T(params, snap.p, snap.S)
    return -snap.p - _solve(JT, snap.S, "transposed price Jacobian")


def _lam(params, snap):
    return recover_lambda(params, snap) if snap.lam is None else snap.lam


def hamiltonian_elasticity_form(params: ModelParams, snap: StateSnapshot) -> float:
    """``-<p - c, rho2> + <R, G^-1 (1 - rho2 / S)>`` with the current elasticity ``G``."""
    G = elasticity_matrix(params, snap.p)
    w = _solve(G.T, snap.R, "elasticity matrix")
    return float(-(snap.p - params.c) @ snap.rho2 + w @ (1.0 - snap.rho2 / snap.S))


def hamiltonian_invariant(params: ModelParams, snap: StateSnapshot, check: bool = True) -> float:
    """``<c + lam, rho2> - <p + lam, S>``.

    When ``check`` is set and the snapshot's adjoint satisfies price
    stationarity, the value is cross-checked against the elasticity form
    and a ``RuntimeError`` is raised if they disagree beyond ``1e-8``.
    """
    lam = _lam(params, snap)
    h = float((params.c + lam) @ snap.rho2 - (snap.p + lam) @ snap.S)
    if check:
        stat = lam - recover_lambda(params, snap)
        if np.max(np.abs(stat)) <= 1e-10 * max(np.max(np.abs(snap.p)), 1.0):
            h2 = hamiltonian_elasticity_form(params, snap)
            scale = max(abs(h), abs(h2), np.max(np.abs(snap.R)), 1e-300)
            if abs(h - h2) > 1e-8 * scale:
                raise RuntimeError(f"hamiltonian forms disagree: {h!r} vs {h2!r}")
    return h


def revenue_projection_invariant(params: ModelParams, snap: StateSnapshot) -> float:
    """``-<R, G^-1 1>``: conserved on optimal paths under replenishment and markdown alike."""
    G = elasticity_matrix(params, snap.p)
    return float(-snap.R @ _solve(G, np.ones(params.n), "elasticity matrix"))


def exponential_sales_invariant(params: ModelParams, snap: StateSnapshot) -> float:
    """``<S, gamma^-1 1>``; only conserved for the exponential model."""
    return float(snap.S @ _solve(params.gamma, np.ones(params.n), "exponent matrix"))


@dataclass
class LernerCheck:
    residual: np.ndarray
    feasible: bool
    margin: np.ndarray

    def __iter__(self):
        yield self.residual
        yield self.feasible


def lerner_rule_check(params: ModelParams, snap: StateSnapshot) -> LernerCheck:
    """Generalized inverse-elasticity rule ``G^T P + R = 0`` and its feasibility.

    ``margin = (1 + G^-T) R`` equals ``(1 - l) R`` at an equilibrium, so a
    finite price needs it strictly positive.  The boundary case (e.g. a
    unit-elastic single item) is reported infeasible.
    """
    G = elasticity_matrix(params, snap.p)
    residual = G.T @ snap.P + snap.R
    margin = snap.R + _solve(G.T, snap.R, "transposed elasticity matrix")
    tol = 1e-12 * np.max(np.abs(snap.R))
    return LernerCheck(residual, bool(np.all(margin > tol)), margin)


def degeneracy_check(params: ModelParams, snap: StateSnapshot) -> np.ndarray:
    """``alpha^T P``; must vanish at a continuous-replenishment equilibrium."""
    return params.alpha.T @ snap.P


@dataclass(frozen=True)
class MatrixConditions:
    gamma: np.ndarray
    diag_dominant: bool

    def highly_negative_on(self, R) -> bool:
        R = np.asarray(R, dtype=float)
        margin = R + _solve(self.gamma.T, R, "transposed elasticity matrix")
        return bool(np.all(margin >= -1e-12 * np.max(np.abs(R))))


def matrix_conditions(gamma) -> MatrixConditions:
    G = np.atleast_2d(np.asarray(gamma, dtype=float))
    d = np.diag(G)
    off = np.sum(np.abs(G), axis=1) - np.abs(d)
    return MatrixConditions(G, bool(np.all(d < 0) and np.all(off < np.abs(d))))


@dataclass
class ELResiduals:
    t: np.ndarray
    stationarity: np.ndarray
    adjoint: np.ndarray
    complementarity: np.ndarray
    sign_lambda: np.ndarray
    adjoint_scale: float
    price_scale: float

    def _window(self, interior: float) -> np.ndarray:
        T0, T1 = self.t[0], self.t[-1]
        lo = T0 + interior * (T1 - T0)
        hi = T1 - interior * (T1 - T0)
        mask = (self.t >= lo) & (self.t <= hi)
        mask[0] = mask[-1] = False
        return mask

    def sup_norms(self, interior: float = 0.0, tail: float = 0.0) -> dict[str, float]:
        """Sup norms over interior nodes, optionally also dropping ``tail`` of the horizon end."""
        mask = self._window(interior)
        if tail:
            mask &= self.t <= self.t[-1] - tail * (self.t[-1] - self.t[0])
        return {
            "stationarity": float(np.max(np.abs(self.stationarity[mask]), initial=0.0)),
            "adjoint": float(np.max(np.abs(self.adjoint[mask]), initial=0.0)),
            "complementarity": float(np.max(np.abs(self.complementarity[mask]), initial=0.0)),
            "sign_lambda": float(np.max(self.sign_lambda[mask], initial=0.0)),
        }


def el_residuals(params: ModelParams, traj: Trajectory, seasonality: Seasonality | None = None,
                 floor: float | None = None) -> ELResiduals:
    """Pointwise residuals of the optimality system along ``traj``.

    The adjoint derivative is taken by second-order finite differences on the
    trajectory grid.  ``floor`` clamps inventory in ``dS/dI`` (defaults to
    ``1e-9 * max I``) so an exhausted terminal node stays finite.
    """
    if len(traj) < 3:
        raise ValueError("need at least three grid points")
    if traj.n != params.n:
        raise ValueError(f"trajectory has {traj.n} items, model has {params.n}")
    sigma = traj._sigma(seasonality)
    if floor is None:
        floor = 1e-9 * float(np.max(traj.I))
    m, n = traj.I.shape
    snaps = traj.states(params)
    lam_rec = np.array([recover_lambda(params, s) for s in snaps])
    lam = lam_rec if traj.lam is None else traj.lam
    # (p + lam) + (dS/dp)^-T S, with the recovered adjoint providing the second term
    stationarity = lam - lam_rec
    dlam = np.gradient(lam, traj.t, axis=0, edge_order=2)
    Ie = np.maximum(traj.I, floor)
    rhs = sigma[:, None] * ((traj.S * (traj.p + lam)) @ params.alpha) / Ie
    adjoint = dlam - rhs
    rho = np.sqrt(np.maximum(traj.rho2, 0.0))
    complementarity = np.minimum(np.abs(lam + params.c[None, :]), rho)
    sign_lambda = np.max(np.maximum(lam, 0.0), axis=1)
    inner = slice(1, m - 1)
    adjoint_scale = float(np.max(np.abs(rhs[inner]), initial=0.0))
    price_scale = float(np.max(np.abs(traj.p)))
    return ELResiduals(traj.t.copy(), stationarity, adjoint, complementarity, sign_lambda,
                       adjoint_scale, price_scale)


@dataclass
class InvariantReport:
    name: str
    t: np.ndarray
    values: np.ndarray
    max_rel_dev: float
    tol: float
    passed: bool

    @property
    def pass_(self) -> bool:
        return self.passed

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "value"])
        for t, v in zip(self.t, self.values):
            w.writerow([f"{t:.17g}", f"{v:.17g}"])
        w.writerow(["summary", f"name={self.name};max_rel_dev={self.max_rel_dev:.17g};"
                               f"tol={self.tol:.17g};pass={str(self.passed).lower()}"])
        return buf.getvalue()


def max_rel_dev(values: np.ndarray) -> float:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return 0.0
    return float((values.max() - values.min()) / max(abs(values.mean()), REL_DEV_FLOOR))


def _scalar_series(fn):
    def series(params, traj):
        return np.array([fn(params, s) for s in traj.states(params)])
    return series


def _hamiltonian_series(params, traj):
    return np.array([hamiltonian_invariant(params, s, check=False) for s in traj.states(params)])


INVARIANTS = {
    "hamiltonian": _hamiltonian_series,
    "hamiltonian_elasticity": _scalar_series(hamiltonian_elasticity_form),
    "revenue_projection": _scalar_series(revenue_projection_invariant),
    "exp_sales": _scalar_series(exponential_sales_invariant),
    # per-item series, expanded to revenue_1..revenue_n / sales_1..sales_n
    "revenue": lambda params, traj: traj.R,
    "sales": lambda params, traj: traj.S,
}


def default_invariants(params: ModelParams) -> list[str]:
    names = ["hamiltonian", "hamiltonian_elasticity", "revenue_projection"]
    if params.kind is ModelKind.EXPONENTIAL:
        names.append("exp_sales")
    return names


def invariance_report(params: ModelParams, traj: Trajectory, which, tol: float,
                      interior: float = 0.0) -> list[InvariantReport]:
    """Evaluate each named invariant at every node of ``traj``.

    ``max_rel_dev`` is computed on the nodes inside ``[interior*T, (1-interior)*T]``;
    ``values`` always covers the whole grid.
    """
    names = list(which)
    unknown = [w for w in names if w not in INVARIANTS]
    if unknown:
        raise KeyError(f"unknown invariant(s): {', '.join(unknown)}; "
                       f"known: {', '.join(INVARIANTS)}")
    T0, T1 = traj.t[0], traj.t[-1]
    mask = (traj.t >= T0 + interior * (T1 - T0)) & (traj.t <= T1 - interior * (T1 - T0))
    reports = []
    for name in names:
        vals = INVARIANTS[name](params, traj)
        if vals.ndim == 1:
            series = [(name, vals)]
        else:
            series = [(f"{name}_{i + 1}", vals[:, i]) for i in range(vals.shape[1])]
        for label, v in series:
            dev = max_rel_dev(v[mask])
            reports.append(InvariantReport(label, traj.t.copy(), v, dev, tol, bool(dev <= tol)))
    return reports
