"""Closed-form optimal trajectories.

* :func:`cr_one_item` / :func:`cr_multi` -- stationary continuous-replenishment
  equilibria (constant price, constant inventory).
* :func:`md_one_item` / :func:`md_multi` -- markdown trajectories of the form
  ``p = p0 tau**mu``, ``I = I0 tau**a`` with ``tau = 1 - sigma_hat(t)``, which
  keep every item's de-seasoned revenue constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import DomainError, ModelKind, ModelParams, Seasonality, Trajectory, demand

RANK_RTOL = 1e-10
SOLVE_RTOL = 1e-10
TAU_MIN = 1e-9


class HypothesisError(ValueError):
    """A closed-form construction does not apply to the given inputs."""


def _checked_solve(A: np.ndarray, b: np.ndarray, what: str) -> np.ndarray:
    try:
        x = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        raise HypothesisError(f"{what} is singular") from None
    res = np.linalg.norm(A @ x - b) / max(np.linalg.norm(b), np.linalg.norm(A) * np.linalg.norm(x), 1e-300)
    if not np.all(np.isfinite(x)) or res > SOLVE_RTOL:
        raise HypothesisError(f"{what}: linear solve residual {res:.3g} exceeds {SOLVE_RTOL:g}")
    return x


# -- continuous replenishment ------------------------------------------------

def cr_one_item(gamma: float, c: float) -> float:
    """Optimal constant price ``gamma c / (gamma + 1)`` of a replenished item."""
    if not gamma < -1:
        raise HypothesisError(
            f"markup condition gamma/(gamma+1) >= 1 fails for gamma={gamma}: "
            "continuous replenishment needs gamma < -1")
    return gamma * c / (gamma + 1)


@dataclass
class CREquilibrium:
    p_star: np.ndarray
    I_star: np.ndarray
    P_star: np.ndarray
    R_star: np.ndarray
    l_star: np.ndarray
    r_scale: float
    residuals: dict = field(default_factory=dict)

    @property
    def S_star(self) -> np.ndarray:
        return self.R_star / self.p_star


def cr_multi(params: ModelParams, I_scale: float) -> CREquilibrium:
    """Constant price / constant inventory equilibrium of a replenished bundle.

    Needs a constant-elasticity model whose inventory matrix has rank
    ``n - 1`` with a strictly positive left null vector, and ``1_n`` outside
    its range.  The inventory level is only determined up to the null space
    of ``alpha``; ``I_scale`` pins its geometric mean.  With ``alpha = 0``
    demand ignores inventory, prices solve the static multi-item Lerner
    system and every inventory level equals ``I_scale``.
    """
    if params.kind is not ModelKind.CONSTANT_ELASTICITY:
        raise HypothesisError("replenishment equilibrium requires the constant-elasticity model")
    if not I_scale > 0:
        raise ValueError(f"I_scale = {I_scale} must be positive")
    if np.any(params.c <= 0):
        raise HypothesisError("replenishment equilibrium needs strictly positive unit costs")
    n = params.n
    alpha, G = params.alpha, params.gamma
    if not np.any(alpha):
        return _cr_static(params, I_scale)
    U, s, Vt = np.linalg.svd(alpha)
    smax = s[0]
    rank = int(np.sum(s > RANK_RTOL * smax)) if smax > 0 else 0
    if rank != n - 1:
        raise HypothesisError(f"inventory effect matrix has rank {rank}, need {n - 1}")
    w = U[:, -1]
    w = w if w.sum() >= 0 else -w
    if not np.all(w > RANK_RTOL * np.max(np.abs(w))):
        raise HypothesisError("null vector of alpha^T is not one-signed")
    ones = np.ones(n)
    if abs(w @ ones) <= RANK_RTOL * math.sqrt(n):
        raise HypothesisError("1_n lies in the range of alpha")
    P = w / w.sum()
    R = -G.T @ P
    if np.any(R <= 0):
        raise HypothesisError("elasticity matrix is not highly negative on the profit vector")
    l = P / R
    if np.any(l <= 0) or np.any(l >= 1):
        raise HypothesisError(f"Lerner index {l} outside (0, 1)")
    p = params.c / (1 - l)
    logp = np.log(p)
    b = np.log(R) - np.log(params.S0) - (np.eye(n) + G) @ logp
    # pick the revenue scale so the right-hand side lies in range(alpha)
    log_r = -(w @ b) / (w @ ones)
    rhs = b + log_r
    logI = np.linalg.pinv(alpha, rcond=RANK_RTOL) @ rhs
    v = Vt[-1]
    if abs(v.mean()) <= RANK_RTOL:
        raise HypothesisError("null space of alpha does not move the inventory level")
    logI = logI + (math.log(I_scale) - logI.mean()) / v.mean() * v
    r = math.exp(log_r)
    I = np.exp(logI)
    P_star, R_star = r * P, r * R
    S_model = demand(params, I, p)
    residuals = {
        "range": float(np.linalg.norm(alpha @ logI - rhs) / max(np.linalg.norm(rhs), 1.0)),
        "demand": float(np.max(np.abs(S_model * p / R_star - 1))),
        "lerner": float(np.linalg.norm(G.T @ P_star + R_star) / np.linalg.norm(R_star)),
        "degeneracy": float(np.linalg.norm(alpha.T @ P_star) / np.linalg.norm(P_star)),
    }
    if residuals["demand"] > 1e-8 or residuals["lerner"] > SOLVE_RTOL:
        raise HypothesisError(f"equilibrium postconditions fail: {residuals}")
    return CREquilibrium(p, I, P_star, R_star, l, r, residuals)


def _cr_static(params: ModelParams, I_scale: float, max_iter: int = 100) -> CREquilibrium:
    """Inventory-free bundle: solve ``G^T ((p - c) S) + p S = 0`` by damped Newton in log-price."""
    G, c, n = params.gamma, params.c, params.n
    g = np.diag(G)
    if n == 1:
        cr_one_item(g[0], c[0])
    if np.any(g >= -1):
        raise HypothesisError("markup condition gamma_ii < -1 fails for some item")
    I = np.full(n, float(I_scale))
    u = np.log(g * c / (g + 1))

    def F(u):
        # Lerner residual relative to revenue; unscaled it vanishes as p -> inf
        p = np.exp(u)
        S = demand(params, I, p)
        R = p * S
        return (G.T @ ((p - c) * S)) / R + 1.0, p, S

    E = np.eye(n)
    f, p, S = F(u)
    for _ in range(max_iter):
        if np.linalg.norm(f) <= 1e-14:
            break
        R = p * S
        dQ = G.T @ (np.diag(R) + ((p - c) * S)[:, None] * G)
        J = dQ / R[:, None] - (f - 1.0)[:, None] * (E + G)
        step = np.linalg.solve(J, -f)
        t = 1.0
        while t > 1e-8:
            with np.errstate(over="ignore", invalid="ignore", under="ignore"):
                try:
                    f_new, p_new, S_new = F(u + t * step)
                except DomainError:
                    f_new = None
            if f_new is not None and np.linalg.norm(f_new) < np.linalg.norm(f):
                break
            t *= 0.5
        else:
            raise HypothesisError("static pricing system: Newton iteration made no progress")
        u = u + t * step
        f, p, S = f_new, p_new, S_new
    R = p * S
    P = (p - c) * S
    l = P / R
    if np.any(l <= 0) or np.any(l >= 1):
        raise HypothesisError(f"Lerner index {l} outside (0, 1)")
    residuals = {
        "lerner": float(np.linalg.norm(G.T @ P + R) / np.linalg.norm(R)),
        "degeneracy": 0.0,
    }
    if residuals["lerner"] > SOLVE_RTOL:
        raise HypothesisError(f"equilibrium postconditions fail: {residuals}")
    return CREquilibrium(p, I, P, R, l, float(P.sum()), residuals)


def cr_trajectory(params: ModelParams, eq: CREquilibrium, seasonality: Seasonality,
                  n_intervals: int = 100) -> Trajectory:
    """Constant equilibrium trajectory with full replenishment ``rho2 = S``."""
    t = np.linspace(0.0, seasonality.T, n_intervals + 1)
    sigma, cum = seasonality(t)
    m = t.size
    S = np.tile(eq.S_star, (m, 1))
    traj = Trajectory(t, np.tile(eq.I_star, (m, 1)), np.tile(eq.p_star, (m, 1)), S,
                      rho2=S.copy(), lam=np.tile(-params.c, (m, 1)), sigma=sigma, tau=1 - cum,
                      c=params.c)
    traj.objective = float(eq.P_star.sum())
    return traj


# -- markdown ----------------------------------------------------------------

@dataclass
class ClosedFormMD:
    """Parameters of a closed-form markdown solution.

    ``R`` is the constant de-seasoned revenue vector (total markdown revenue
    per item under the normalized seasonality measure) and ``S0`` the
    de-seasoned base demand consistent with it.  ``revenue_rate`` gives the
    per-unit-time revenue under uniform seasonality.
    """

    mu: np.ndarray
    a: np.ndarray
    theta: np.ndarray
    p0: np.ndarray
    I0: np.ndarray
    R: np.ndarray
    C: np.ndarray
    T: float
    S0: np.ndarray
    R_direction: np.ndarray
    revenue_scale: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def revenue_rate(self) -> np.ndarray:
        return self.R / self.T

    def to_dict(self) -> dict:
        vec = lambda x: [float(v) for v in x]  # noqa: E731
        return {
            "mu": vec(self.mu), "a": vec(self.a), "theta": vec(self.theta),
            "p0": vec(self.p0), "I0": vec(self.I0), "R": vec(self.R),
            "revenue_rate": vec(self.revenue_rate), "C": vec(self.C), "T": float(self.T),
            "S0": vec(self.S0), "R_direction": vec(self.R_direction),
            "revenue_scale": float(self.revenue_scale),
            "diagnostics": {k: float(v) for k, v in self.diagnostics.items()},
        }


def _grid(seasonality: Seasonality, n_intervals: int | None, grid) -> np.ndarray:
    if grid is not None:
        t = np.asarray(grid, dtype=float)
        if abs(t[0]) > 0 or abs(t[-1] - seasonality.T) > 1e-12 * seasonality.T:
            raise ValueError("grid must span [0, T]")
        return t
    return np.linspace(0.0, seasonality.T, (n_intervals or 400) + 1)


def power_law_trajectory(params: ModelParams, sol: ClosedFormMD, seasonality: Seasonality,
                         n_intervals: int | None = None, grid=None) -> Trajectory:
    """Sample ``p = p0 tau**mu``, ``I = I0 tau**a`` on a time grid.

    The terminal node is evaluated at ``tau = 1e-9`` but records ``I(T) = 0``.
    """
    t = _grid(seasonality, n_intervals, grid)
    sigma, cum = seasonality(t)
    tau = np.maximum(1.0 - cum, TAU_MIN)
    p = sol.p0[None, :] * tau[:, None] ** sol.mu[None, :]
    I = sol.I0[None, :] * tau[:, None] ** sol.a[None, :]
    S = sol.R[None, :] / p
    I[-1] = 0.0
    traj = Trajectory(t, I, p, S, rho2=None, lam=sol.C[None, :] * p, sigma=sigma,
                      tau=1.0 - cum, c=params.c)
    traj.objective = float(sol.R.sum())
    return traj


def _check_md_hypotheses(params: ModelParams) -> None:
    if params.kind is not ModelKind.CONSTANT_ELASTICITY:
        raise HypothesisError("closed-form markdown requires the constant-elasticity model")
    alpha = params.alpha
    if np.any(np.abs(alpha - np.diag(np.diag(alpha))) > 0):
        raise HypothesisError("inventory effect matrix must be diagonal")
    if np.any(np.diag(alpha) <= 0):
        raise HypothesisError("inventory effect matrix must have a strictly positive diagonal")


def symmetrizer(gamma: np.ndarray) -> np.ndarray:
    """Positive diagonal ``d`` with ``diag(d) G diag(d)^-1 = G^T``.

    Supports symmetric matrices and 2x2 matrices whose off-diagonal entries
    share a sign.
    """
    G = np.asarray(gamma, dtype=float)
    n = G.shape[0]
    if np.allclose(G, G.T, rtol=0, atol=1e-14 * np.max(np.abs(G))):
        return np.ones(n)
    if n == 2 and G[0, 1] * G[1, 0] > 0:
        return np.array([1.0, G[0, 1] / G[1, 0]])
    raise HypothesisError("elasticity matrix is not diagonally similar to its transpose")


def md_exponents(params: ModelParams):
    """Solve for ``(mu, a, theta)`` and the revenue direction; check the algebraic identities."""
    _check_md_hypotheses(params)
    n = params.n
    G = params.gamma
    ad = np.diag(params.alpha)
    M = np.eye(n) - (np.eye(n) + G) / ad[:, None]
    mu = _checked_solve(M, np.ones(n), "price exponent system")
    if np.any(mu <= 0) or np.any(mu >= 1):
        raise HypothesisError(f"price exponent mu = {mu} outside (0, 1)")
    a = 1.0 - mu
    theta = a / mu
    eig_res = np.linalg.norm((1 + ad * theta) * mu + G @ mu) / np.linalg.norm(mu)
    if eig_res > SOLVE_RTOL:
        raise HypothesisError(f"eigenvector consistency residual {eig_res:.3g}")
    d = symmetrizer(G)
    V = d * mu
    R_dir = -G.T @ V
    if np.any(R_dir <= 0):
        raise HypothesisError("revenue direction is not positive")
    lhs = (1 + theta * ad) * np.linalg.solve(G.T, R_dir)
    rev_res = np.linalg.norm(lhs + R_dir) / np.linalg.norm(R_dir)
    if rev_res > SOLVE_RTOL:
        raise HypothesisError(f"revenue eigen-condition residual {rev_res:.3g}")
    return mu, a, theta, V, R_dir, {"exponent_consistency": eig_res, "revenue_condition": rev_res}


def md_multi(params: ModelParams, I0, T: float | None = None, seasonality: Seasonality | None = None,
             n_intervals: int | None = 400, grid=None):
    """Closed-form multi-item markdown solution.

    Two boundary closures are supported:

    * ``T is None`` (two items only): ``I0`` is matched exactly and the
      horizon is solved for.  ``params.S0`` is then read as a per-unit-time
      base demand under uniform seasonality; the returned solution carries
      the equivalent de-seasoned ``S0 * T``.
    * ``T`` given (any ``n``): only the geometric mean of ``I0`` is matched,
      its direction is solved for, and ``params.S0`` is the de-seasoned base
      demand.  ``seasonality`` defaults to uniform on ``[0, T]``.

    Returns ``(ClosedFormMD, Trajectory)``.
    """
    mu, a, theta, V, R_dir, diag = md_exponents(params)
    n = params.n
    I0 = np.asarray(I0, dtype=float).reshape(-1)
    if I0.shape != (n,) or np.any(I0 <= 0):
        raise ValueError(f"I0 must be a positive vector of length {n}")
    E, G, alpha = np.eye(n), params.gamma, params.alpha
    logS0 = np.log(params.S0)
    if T is None:
        if n != 2:
            raise HypothesisError(f"solving for the horizon needs exactly two items, got {n}")
        if seasonality is not None and not seasonality.is_uniform:
            raise HypothesisError("solving for the horizon assumes uniform seasonality")
        y = np.log(I0)
        # unknowns: log p0 (n), log r, log T
        A = np.zeros((2 * n, n + 2))
        rhs = np.zeros(2 * n)
        A[:n, :n] = E
        A[:n, n] = -1.0
        A[:n, n + 1] = -1.0
        rhs[:n] = np.log(R_dir) - y - np.log(a)
        A[n:, :n] = E + G
        A[n:, n] = -1.0
        rhs[n:] = np.log(R_dir) - logS0 - alpha @ y
        z = _checked_solve(A, rhs, "boundary system")
        x, log_r, T = z[:n], z[n], math.exp(z[n + 1])
        r = math.exp(log_r) * T
        S0_norm = params.S0 * T
    else:
        if not T > 0:
            raise ValueError(f"T = {T} must be positive")
        log_g = float(np.mean(np.log(I0)))
        # unknowns: log p0 (n), log I0 (n), log r
        A = np.zeros((2 * n + 1, 2 * n + 1))
        rhs = np.zeros(2 * n + 1)
        A[:n, :n] = E
        A[:n, n:2 * n] = E
        A[:n, 2 * n] = -1.0
        rhs[:n] = np.log(R_dir) - np.log(a)
        A[n:2 * n, :n] = E + G
        A[n:2 * n, n:2 * n] = alpha
        A[n:2 * n, 2 * n] = -1.0
        rhs[n:2 * n] = np.log(R_dir) - logS0
        A[2 * n, n:2 * n] = 1.0 / n
        rhs[2 * n] = log_g
        z = _checked_solve(A, rhs, "boundary system")
        x, y, r = z[:n], z[n:2 * n], math.exp(z[2 * n])
        I0 = np.exp(y)
        S0_norm = params.S0.copy()
    if seasonality is None:
        seasonality = Seasonality.uniform(T)
    elif abs(seasonality.T - T) > 1e-9 * T:
        raise ValueError(f"seasonality horizon {seasonality.T} does not match T = {T}")
    p0 = np.exp(x)
    R = r * R_dir
    C = -(R + np.linalg.solve(G.T, R)) / R
    if np.any(C >= 0):
        raise HypothesisError(f"adjoint sign condition fails: C = {C}")
    norm_params = params.replace(S0=S0_norm)
    flow_res = float(np.max(np.abs(p0 * I0 * a / R - 1)))
    model_res = float(np.max(np.abs(demand(norm_params, I0, p0) * p0 / R - 1)))
    diag.update(boundary_flow=flow_res, boundary_model=model_res)
    sol = ClosedFormMD(mu, a, theta, p0, I0, R, C, float(T), S0_norm, R_dir, r, diag)
    traj = power_law_trajectory(norm_params, sol, seasonality, n_intervals, grid)
    inner = slice(1, len(traj) - 1)
    S_model = np.array([demand(norm_params, I, p) for I, p in zip(traj.I[inner], traj.p[inner])])
    rev_dev = float(np.max(np.abs(S_model * traj.p[inner] / R - 1), initial=0.0))
    sol.diagnostics["revenue_constancy"] = rev_dev
    if rev_dev > 1e-8:
        raise HypothesisError(f"per-item revenue not constant along trajectory ({rev_dev:.3g})")
    return sol, traj


def md_one_item_solution(gamma: float, alpha: float, I0: float, S0: float,
                         T: float = 1.0) -> ClosedFormMD:
    """Parameters of the closed-form one-item markdown for ``S = S0 I**alpha p**gamma``.

    ``alpha = 0`` is the limit of a constant price with inventory falling in
    proportion to ``1 - sigma_hat``.
    """
    if not gamma < -1:
        raise HypothesisError(f"markdown needs elastic demand, gamma < -1 (got {gamma})")
    if alpha < 0:
        raise HypothesisError(f"inventory effect must be non-negative (got {alpha})")
    if not I0 > 0 or not S0 > 0:
        raise ValueError("I0 and S0 must be positive")
    if alpha == 0:
        mu, a, theta = 0.0, 1.0, math.inf
    else:
        theta = -(gamma + 1) / alpha
        mu, a = 1 / (1 + theta), theta / (1 + theta)
    # the initial sales rate must drain I0 * a per unit of sigma_hat
    p0 = (I0 * a / (S0 * I0 ** alpha)) ** (1 / gamma)
    R = p0 * I0 * a
    one = lambda v: np.array([float(v)])  # noqa: E731
    return ClosedFormMD(one(mu), one(a), one(theta), one(p0), one(I0), one(R),
                        one(-(1 + 1 / gamma)), float(T), one(S0), one(1.0), R)


def md_one_item(gamma: float, alpha: float, I0: float, S0: float, seasonality: Seasonality,
                n_intervals: int | None = 400, grid=None) -> Trajectory:
    """Closed-form one-item markdown trajectory (see :func:`md_one_item_solution`)."""
    sol = md_one_item_solution(gamma, alpha, I0, S0, seasonality.T)
    params = ModelParams.one_item(S0, gamma, alpha)
    return power_law_trajectory(params, sol, seasonality, n_intervals, grid)


# -- linear algebra ----------------------------------------------------------

def real_eigenvalues(M: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    ev = np.linalg.eigvals(M)
    scale = max(1.0, float(np.max(np.abs(ev))))
    return np.sort(ev[np.abs(ev.imag) <= tol * scale].real)


def eigen_lemma_check(A, B, tol: float = 1e-8) -> bool:
    """True iff ``A B`` and ``A^T B^T`` have the same real spectrum (as multisets)."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    for name, M in (("A", A), ("B", B)):
        if np.linalg.cond(M) > 1e12:
            raise np.linalg.LinAlgError(f"{name} is singular")
    e1 = real_eigenvalues(A @ B, tol)
    e2 = real_eigenvalues(A.T @ B.T, tol)
    if e1.shape != e2.shape:
        return False
    scale = np.maximum(1.0, np.abs(e1))
    return bool(np.all(np.abs(e1 - e2) <= tol * scale))
