"""Seeded random problem instances shared by the solver tests."""

import numpy as np

from pricevar.model import ModelParams, Seasonality
from pricevar.varsolve import Transcription, _initial_md_prices


def random_transcription(seed: int, n: int, replenish: bool, N: int = 40) -> tuple[Transcription, np.ndarray]:
    """A small transcription and an interior evaluation point (prices 30% above clearing)."""
    rng = np.random.default_rng(seed)
    kind = "exp" if seed % 2 else "ce"
    off = 1 - np.eye(n)
    gamma = np.diag(rng.uniform(-3.0, -1.5, n)) + rng.uniform(-0.2, 0.2, (n, n)) * off
    if kind == "exp":
        gamma = gamma / 2
    alpha = np.diag(rng.uniform(0.2, 0.8, n)) + rng.uniform(-0.05, 0.05, (n, n)) * off
    params = ModelParams(S0=rng.uniform(5, 20, n), gamma=gamma, alpha=alpha, c=rng.uniform(0.2, 1.0, n),
                         kind=kind)
    season = Seasonality(1.0, [[0.0, 1.0], [0.4, rng.uniform(0.5, 2.0)], [1.0, 1.0]])
    I0 = rng.uniform(20, 60, n)
    prob = Transcription(params, season, I0, N, replenish=replenish, target=I0 if replenish else None)
    prob.weight, prob.fscale = 10.0, 1.0
    p0 = 1.3 * _initial_md_prices(params, I0)
    u = np.log(p0)[None, :] + 0.05 * rng.standard_normal((N, n))
    v = 0.5 * np.sqrt(rng.uniform(1, 5, (N, n))) if replenish else None
    return prob, prob.join(u, v)
