import numpy as np
import pytest
from _instances import random_transcription

from pricevar.closedform import cr_multi, md_one_item
from pricevar.model import ModelParams, Seasonality, Trajectory
from pricevar.optimality import invariance_report, lerner_rule_check
from pricevar.varsolve import (NOISE_REL, SolverConfig, compare_trajectories,
                               directional_gradient_error, finite_difference_gradient, solve_cr,
                               solve_md)


@pytest.fixture(scope="module")
def md_run():
    params = ModelParams.one_item(S0=1.0, gamma=-2.0, alpha=0.5)
    s = Seasonality.uniform(1.0)
    return params, s, solve_md(params, [100.0], s)


@pytest.mark.parametrize("replenish", [False, True])
@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(seed, replenish):
    prob, x = random_transcription(seed, 1 + seed % 3, replenish)
    _, g, *_ = prob.gradient(x)
    fd = finite_difference_gradient(prob.value, x)
    assert np.max(np.abs(g - fd)) <= 1e-5 * np.max(np.abs(fd))


def test_directional_check_detects_wrong_gradient():
    prob, x = random_transcription(0, 2, False)
    _, g, *_ = prob.gradient(x)
    rng = np.random.default_rng(0)
    assert directional_gradient_error(prob, x, g, rng) < 1e-6
    assert directional_gradient_error(prob, x, 1.1 * g, rng) > 1e-2


def test_gradient_check_recorded(md_run):
    _, _, res = md_run
    assert res.gradient_check_error is not None and res.gradient_check_error < 1e-5


def test_accepted_objectives_nondecreasing(md_run):
    _, _, res = md_run
    assert len(res.history) == SolverConfig().penalty_rounds
    for rounds in res.history:
        J = np.asarray(rounds)
        # steps inside the rounding band are accepted on a curvature test
        assert np.all(np.diff(J) >= -NOISE_REL * np.abs(J[1:]))


def test_one_item_markdown_matches_closed_form(md_run):
    params, s, res = md_run
    assert res.converged, res.message
    ref = md_one_item(-2.0, 0.5, 100.0, 1.0, s, n_intervals=400)
    cmp = compare_trajectories(ref, res.trajectory, 0.05)
    assert cmp.obj_rel_dev <= 0.005
    assert cmp.sup_rel_dev_p <= 0.02 and cmp.sup_rel_dev_I <= 0.02


def test_converged_result_meets_tolerances(md_run):
    _, _, res = md_run
    cfg = SolverConfig()
    assert res.grad_norm <= cfg.tol and res.constraint_violation <= cfg.constraint_tol


def test_markdown_with_seasonality():
    s = Seasonality(2.0, [[0.0, 1.0], [0.5, 3.0], [1.2, 0.5], [2.0, 1.5]])
    params = ModelParams.one_item(S0=1.0, gamma=-2.0, alpha=0.5)
    res = solve_md(params, [100.0], s)
    assert res.converged, res.message
    ref = md_one_item(-2.0, 0.5, 100.0, 1.0, s, grid=res.trajectory.t)
    cmp = compare_trajectories(ref, res.trajectory, 0.05)
    assert cmp.obj_rel_dev <= 0.005 and cmp.sup_rel_dev_p <= 0.02


def test_determinism():
    params = ModelParams.one_item(S0=1.0, gamma=-2.0, alpha=0.5)
    s = Seasonality.uniform(1.0)
    cfg = SolverConfig(N=100, seed=3)
    a, b = solve_md(params, [100.0], s, cfg), solve_md(params, [100.0], s, cfg)
    assert a.objective == b.objective and a.iterations == b.iterations
    assert np.array_equal(a.trajectory.p, b.trajectory.p)
    assert np.array_equal(a.trajectory.lam, b.trajectory.lam)


def test_unit_elastic_item_is_flagged():
    params = ModelParams.one_item(S0=1.0, gamma=-1.0, alpha=0.5)
    res = solve_md(params, [100.0], Seasonality.uniform(1.0), SolverConfig(N=100))
    snap = res.trajectory.snapshot(params, 50)
    assert not lerner_rule_check(params, snap).feasible
    (rep,) = invariance_report(params, res.trajectory, ["hamiltonian_elasticity"], 0.01, interior=0.05)
    assert not rep.passed


def test_replenishment_one_item():
    params = ModelParams.one_item(S0=10.0, gamma=-2.0, alpha=0.0, c=1.0)
    res = solve_cr(params, [5.0], Seasonality.uniform(1.0))
    assert res.converged, res.message
    tr = res.trajectory
    np.testing.assert_allclose(tr.p, 2.0, rtol=5e-3)
    np.testing.assert_allclose(tr.rho2[1:-1], tr.S[1:-1], rtol=5e-3)
    np.testing.assert_allclose(tr.lam, -1.0, rtol=5e-3)


def test_replenishment_inelastic_item_hits_bounds():
    params = ModelParams.one_item(S0=10.0, gamma=-0.5, alpha=0.0, c=1.0)
    res = solve_cr(params, [5.0], Seasonality.uniform(1.0))
    assert not res.converged
    assert "bound" in res.message
    assert res.trajectory.p.min() > 1e3


def test_replenishment_inventory_free_bundle():
    params = ModelParams(S0=[5.0, 3.0], gamma=[[-2.0, -0.25], [-0.25, -1.5]], alpha=np.zeros((2, 2)),
                         c=[1.0, 1.0])
    eq = cr_multi(params, 10.0)
    res = solve_cr(params, eq.I_star, Seasonality.uniform(1.0))
    assert res.converged, res.message
    np.testing.assert_allclose(res.trajectory.p, np.tile(eq.p_star, (len(res.trajectory), 1)), rtol=5e-3)


def test_exponential_markdown_keeps_sales_constant():
    params = ModelParams.one_item(S0=1000.0, gamma=-2.0, alpha=0.5, kind="exp")
    res = solve_md(params, [100.0], Seasonality.uniform(1.0))
    assert res.converged, res.message
    (rep,) = invariance_report(params, res.trajectory, ["exp_sales"], 0.01, interior=0.05)
    assert rep.passed, rep.max_rel_dev


@pytest.mark.parametrize("bad", [dict(N=5), dict(tol=0), dict(backtrack=1.0), dict(grading=0.5),
                                 dict(penalty_rounds=0), dict(price_bound=1.0)])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        SolverConfig(**bad)


def test_config_from_dict_rejects_unknown_keys():
    assert SolverConfig.from_dict({"N": 50}).N == 50
    with pytest.raises(ValueError, match="unknown"):
        SolverConfig.from_dict({"iterations": 5})


def _traj(p, n=1, m=11):
    t = np.linspace(0, 1, m)
    return Trajectory(t, np.linspace(10, 1, m).reshape(m, 1).repeat(n, 1), p, np.ones((m, n)), objective=5.0)


def test_compare_identical():
    a = _traj(np.full((11, 1), 2.0))
    cmp = compare_trajectories(a, a)
    assert cmp.sup_rel_dev_p == cmp.sup_rel_dev_I == cmp.obj_rel_dev == 0.0


def test_compare_scaled_prices():
    a = _traj(np.linspace(3, 1, 11).reshape(11, 1))
    b = _traj(1.01 * a.p)
    assert compare_trajectories(a, b).sup_rel_dev_p == pytest.approx(0.01, abs=1e-12)


def test_compare_resamples_and_excludes_tail():
    a = _traj(np.full((11, 1), 2.0))
    t = np.linspace(0, 1, 21)
    p = np.full((21, 1), 2.0)
    p[-1] = 4.0  # only the final node differs
    b = Trajectory(t, np.interp(t, a.t, a.I[:, 0]), p, np.ones(21), objective=5.0)
    assert compare_trajectories(a, b, 0.05).sup_rel_dev_p == 0.0
    assert compare_trajectories(a, b, 0.0).sup_rel_dev_p == pytest.approx(1.0)


def test_compare_item_count_mismatch():
    with pytest.raises(ValueError):
        compare_trajectories(_traj(np.ones((11, 1))), _traj(np.ones((11, 2)), n=2))
