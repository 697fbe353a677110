import json

import numpy as np
import pytest

from pricevar.closedform import md_one_item
from pricevar.io import (ConfigError, loads, parse_config, parse_model, read_trajectory,
                         trajectory_from_csv, trajectory_to_csv, write_trajectory)
from pricevar.model import Seasonality, Trajectory

MODEL = {"n": 2, "kind": "ce", "S0": [1.0, 1.0], "gamma": [[-2.0, 0.25], [0.25, -1.5]],
         "alpha": [[0.5, 0.0], [0.0, 0.3]], "c": [0.0, 0.0],
         "seasonality": {"T": 2.0, "knots": [[0.0, 1.0], [1.0, 2.0], [2.0, 1.0]]}}


def config(**over):
    d = {"model": json.loads(json.dumps(MODEL)), "problem": "markdown",
         "boundary": {"I0": [200.0, 300.0], "T": 2.0}, "solver": {"N": 50}, "outputs": "o", "grid": 20}
    d.update(over)
    return d


def test_config_round_trip():
    first = parse_config(config()).to_dict()
    assert parse_config(first).to_dict() == first
    assert first["solver"]["N"] == 50


def test_model_reference_round_trip(tmp_path):
    (tmp_path / "m.json").write_text(json.dumps(MODEL))
    cfg = parse_config(config(model="m.json"), tmp_path)
    assert cfg.to_dict()["model"] == "m.json"
    np.testing.assert_array_equal(cfg.model.params.gamma, MODEL["gamma"])


def _error(fn, *args) -> str:
    with pytest.raises(ConfigError) as info:
        fn(*args)
    return str(info.value)


def test_errors_name_the_offending_entry():
    m = dict(MODEL, gamma=[[-2.0, 0.25], ["x", -1.5]])
    assert _error(parse_model, m).startswith("gamma[1][0]:")
    assert _error(parse_model, dict(MODEL, S0=[1.0])).startswith("S0: expected 2 entries")
    m = dict(MODEL)
    del m["alpha"]
    assert _error(parse_model, m) == "alpha: missing required field"
    assert "unknown field" in _error(parse_model, dict(MODEL, beta=1))
    assert _error(parse_config, config(problem="sale")).startswith("problem:")
    assert _error(parse_config, config(boundary={"I0": [1.0, -1.0]})).startswith("boundary.I0")
    assert _error(parse_config, config(boundary={"I0": [1.0, 1.0], "T": 3.0})).startswith("boundary.T")
    assert _error(parse_config, config(solver={"N": 2})).startswith("solver:")
    assert _error(parse_config, config(model="missing.json")).startswith("model:")


def test_non_finite_literals_rejected():
    assert "NaN" in _error(loads, '{"S0": [NaN]}')
    assert "Infinity" in _error(loads, '{"S0": [Infinity]}')
    assert _error(loads, '{"S0": [1,]}', "m.json").startswith("m.json:1:")


def test_seasonality_defaults_to_uniform():
    doc = parse_model(dict(MODEL, seasonality={"T": 3.0}))
    assert doc.seasonality.is_uniform and doc.seasonality.T == 3.0


def test_trajectory_csv_round_trip(tmp_path):
    traj = md_one_item(-2.0, 0.5, 100.0, 1.0, Seasonality.uniform(1.0), n_intervals=30)
    write_trajectory(tmp_path / "t.csv", traj)
    back = read_trajectory(tmp_path / "t.csv")
    for name in ("t", "I", "p", "S", "R", "lam", "rho2"):
        np.testing.assert_array_equal(getattr(back, name), getattr(traj, name))
    assert trajectory_to_csv(back) == (tmp_path / "t.csv").read_text()


def test_trajectory_without_adjoint():
    t = np.linspace(0, 1, 3)
    traj = Trajectory(t, 1 - t + 0.1, np.ones(3), np.ones(3))
    text = trajectory_to_csv(traj)
    assert text.splitlines()[0] == "t,tau,I_1,p_1,S_1,R_1,lambda_1,rho2_1"
    assert trajectory_from_csv(text).lam is None


def test_trajectory_csv_errors():
    good = "t,tau,I_1,p_1,S_1,R_1,lambda_1,rho2_1\n0,1,1,1,1,1,nan,0\n1,0,0,1,1,1,nan,0\n"
    assert trajectory_from_csv(good).n == 1
    bad_header = good.replace("p_1", "price_1")
    assert _error(trajectory_from_csv, bad_header, "x.csv").startswith("x.csv:1: column 4")
    short = good.replace("1,0,0,1,1,1,nan,0", "1,0,0,1")
    assert _error(trajectory_from_csv, short, "x.csv").startswith("x.csv:3:")
    nan_price = good.replace("0,1,1,1,1,1,nan,0", "0,1,1,nan,1,1,nan,0")
    assert _error(trajectory_from_csv, nan_price, "x.csv") == "x.csv:2: non-finite value"
    assert "empty" in _error(trajectory_from_csv, "", "x.csv")
