"""Model/config documents (JSON) and trajectory tables (CSV).

Parsing errors carry the JSON path of the offending entry, e.g.
``gamma[1][0]: expected a finite number``.  Floats are written with 17
significant digits so that a write/read cycle is lossless.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import ModelKind, ModelParams, Seasonality, Trajectory
from .varsolve import SolverConfig


class ConfigError(ValueError):
    """Malformed input document; the message starts with the offending path."""


# -- low-level helpers ----------------------------------------------------------

def _reject_constant(token: str):
    raise ConfigError(f"non-finite literal {token!r} is not allowed")


def loads(text: str, source: str = "<string>"):
    try:
        return json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


def load_json(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
    return loads(text, str(path))


def _number(x, where: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {type(x).__name__}")
    x = float(x)
    if not math.isfinite(x):
        raise ConfigError(f"{where}: expected a finite number")
    return x


def _vector(x, n: int, where: str) -> np.ndarray:
    if not isinstance(x, list):
        raise ConfigError(f"{where}: expected a list of {n} numbers")
    if len(x) != n:
        raise ConfigError(f"{where}: expected {n} entries, got {len(x)}")
    return np.array([_number(v, f"{where}[{i}]") for i, v in enumerate(x)])


def _matrix(x, n: int, where: str) -> np.ndarray:
    if not isinstance(x, list) or len(x) != n:
        raise ConfigError(f"{where}: expected {n} rows")
    return np.array([_vector(row, n, f"{where}[{i}]") for i, row in enumerate(x)])


def _require(d: dict, key: str, where: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{where or '<root>'}: expected an object")
    if key not in d:
        raise ConfigError(f"{where + '.' if where else ''}{key}: missing required field")
    return d[key]


def _check_keys(d: dict, allowed: set, where: str) -> None:
    extra = sorted(set(d) - allowed)
    if extra:
        raise ConfigError(f"{where or '<root>'}: unknown field(s) {', '.join(extra)}")


def _floats(x) -> list:
    return [float(v) for v in np.asarray(x).reshape(-1)]


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file in the same directory and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


# -- model documents ------------------------------------------------------------

MODEL_KEYS = {"n", "kind", "S0", "gamma", "alpha", "c", "seasonality"}


@dataclass(eq=False)
class ModelDocument:
    params: ModelParams
    seasonality: Seasonality | None = None


def parse_seasonality(d, where: str = "seasonality") -> Seasonality:
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    _check_keys(d, {"T", "knots"}, where)
    T = _number(_require(d, "T", where), f"{where}.T")
    knots = d.get("knots")
    if knots is None:
        try:
            return Seasonality.uniform(T)
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None
    if not isinstance(knots, list) or len(knots) < 2:
        raise ConfigError(f"{where}.knots: expected at least two [t, sigma] pairs")
    rows = [_vector(k, 2, f"{where}.knots[{i}]") for i, k in enumerate(knots)]
    try:
        return Seasonality(T, np.array(rows))
    except ValueError as exc:
        raise ConfigError(f"{where}.knots: {exc}") from None


def seasonality_to_dict(s: Seasonality) -> dict:
    return {"T": float(s.T), "knots": [[float(t), float(v)] for t, v in s.knots]}


def parse_model(d, where: str = "") -> ModelDocument:
    pre = f"{where}." if where else ""
    if not isinstance(d, dict):
        raise ConfigError(f"{where or '<root>'}: expected an object")
    _check_keys(d, MODEL_KEYS, where)
    n_raw = _require(d, "n", where)
    if isinstance(n_raw, bool) or not isinstance(n_raw, int) or n_raw < 1:
        raise ConfigError(f"{pre}n: expected a positive integer")
    n = n_raw
    try:
        kind = ModelKind.parse(d.get("kind", "ce"))
    except ValueError as exc:
        raise ConfigError(f"{pre}kind: {exc}") from None
    S0 = _vector(_require(d, "S0", where), n, f"{pre}S0")
    gamma = _matrix(_require(d, "gamma", where), n, f"{pre}gamma")
    alpha = _matrix(_require(d, "alpha", where), n, f"{pre}alpha")
    c = _vector(d.get("c", [0.0] * n), n, f"{pre}c")
    try:
        params = ModelParams(S0=S0, gamma=gamma, alpha=alpha, c=c, kind=kind)
    except ValueError as exc:
        raise ConfigError(f"{where or '<root>'}: {exc}") from None
    seas = parse_seasonality(d["seasonality"], f"{pre}seasonality") if "seasonality" in d else None
    return ModelDocument(params, seas)


def model_to_dict(params: ModelParams, seasonality: Seasonality | None = None) -> dict:
    d = {
        "n": params.n,
        "kind": "ce" if params.kind is ModelKind.CONSTANT_ELASTICITY else "exp",
        "S0": _floats(params.S0),
        "gamma": [_floats(r) for r in params.gamma],
        "alpha": [_floats(r) for r in params.alpha],
        "c": _floats(params.c),
    }
    if seasonality is not None:
        d["seasonality"] = seasonality_to_dict(seasonality)
    return d


def load_model(path) -> ModelDocument:
    return parse_model(load_json(path))


# -- run configuration ----------------------------------------------------------

PROBLEMS = ("markdown", "cr")
CONFIG_KEYS = {"model", "problem", "boundary", "solver", "outputs", "grid"}


@dataclass(eq=False)
class RunConfig:
    """A solve request.

    For markdown, ``boundary.T`` may be omitted for two items: the closed-form
    boundary closure then solves for the horizon, reading ``S0`` as a
    per-unit-time rate under uniform seasonality.
    """

    model: ModelDocument
    problem: str
    I0: np.ndarray
    T: float | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    outputs: str = "out"
    grid: int = 400
    model_ref: str | None = None

    def seasonality(self) -> Seasonality | None:
        if self.model.seasonality is not None:
            if self.T is not None and abs(self.model.seasonality.T - self.T) > 1e-12 * self.T:
                raise ConfigError(f"boundary.T = {self.T} disagrees with seasonality.T = "
                                  f"{self.model.seasonality.T}")
            return self.model.seasonality
        if self.T is not None:
            return Seasonality.uniform(self.T)
        return None

    def to_dict(self) -> dict:
        boundary = {"I0": _floats(self.I0)}
        if self.T is not None:
            boundary["T"] = float(self.T)
        return {
            "model": self.model_ref if self.model_ref is not None
            else model_to_dict(self.model.params, self.model.seasonality),
            "problem": self.problem,
            "boundary": boundary,
            "solver": self.solver.to_dict(),
            "outputs": self.outputs,
            "grid": self.grid,
        }


def parse_config(d, base_dir=".") -> RunConfig:
    if not isinstance(d, dict):
        raise ConfigError("<root>: expected an object")
    _check_keys(d, CONFIG_KEYS, "")
    m = _require(d, "model", "")
    model_ref = None
    if isinstance(m, str):
        model_ref = m
        path = Path(base_dir) / m
        if not path.is_file():
            raise ConfigError(f"model: referenced file {str(path)!r} does not exist")
        model = load_model(path)
    else:
        model = parse_model(m, "model")
    problem = _require(d, "problem", "")
    if problem not in PROBLEMS:
        raise ConfigError(f"problem: expected one of {', '.join(PROBLEMS)}, got {problem!r}")
    b = _require(d, "boundary", "")
    if not isinstance(b, dict):
        raise ConfigError("boundary: expected an object")
    _check_keys(b, {"I0", "T"}, "boundary")
    I0 = _vector(_require(b, "I0", "boundary"), model.params.n, "boundary.I0")
    if np.any(I0 <= 0):
        raise ConfigError("boundary.I0: entries must be positive")
    T = None
    if "T" in b:
        T = _number(b["T"], "boundary.T")
        if T <= 0:
            raise ConfigError("boundary.T: must be positive")
    solver = d.get("solver", {})
    if not isinstance(solver, dict):
        raise ConfigError("solver: expected an object")
    try:
        solver_cfg = SolverConfig.from_dict(solver)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"solver: {exc}") from None
    outputs = d.get("outputs", "out")
    if not isinstance(outputs, str) or not outputs:
        raise ConfigError("outputs: expected a directory path")
    grid = d.get("grid", 400)
    if isinstance(grid, bool) or not isinstance(grid, int) or grid < 2:
        raise ConfigError("grid: expected an integer >= 2")
    cfg = RunConfig(model, problem, I0, T, solver_cfg, outputs, grid, model_ref)
    cfg.seasonality()  # consistency check
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(load_json(path), path.parent)


# -- trajectory tables ----------------------------------------------------------

def trajectory_columns(n: int) -> list[str]:
    cols = ["t", "tau"]
    for name in ("I", "p", "S", "R", "lambda", "rho2"):
        cols += [f"{name}_{i + 1}" for i in range(n)]
    return cols


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def trajectory_to_csv(traj: Trajectory) -> str:
    m, n = traj.I.shape
    tau = traj.tau if traj.tau is not None else 1.0 - (traj.t - traj.t[0]) / (traj.t[-1] - traj.t[0])
    lam = traj.lam if traj.lam is not None else np.full((m, n), np.nan)
    block = np.column_stack([traj.t, tau, traj.I, traj.p, traj.S, traj.R, lam, traj.rho2])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(trajectory_columns(n))
    for row in block:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def trajectory_from_csv(text: str, source: str = "<csv>") -> Trajectory:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ConfigError(f"{source}: empty file")
    header = rows[0]
    if len(header) < 8 or (len(header) - 2) % 6:
        raise ConfigError(f"{source}:1: expected t, tau and six blocks of per-item columns")
    n = (len(header) - 2) // 6
    expected = trajectory_columns(n)
    if header != expected:
        bad = next(i for i, (a, b) in enumerate(zip(header, expected)) if a != b)
        raise ConfigError(f"{source}:1: column {bad + 1} is {header[bad]!r}, expected {expected[bad]!r}")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ConfigError(f"{source}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            data.append([float(v) for v in row])
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    if len(data) < 2:
        raise ConfigError(f"{source}: need at least two data rows")
    a = np.array(data)
    blocks = [a[:, 2 + k * n: 2 + (k + 1) * n] for k in range(6)]
    I, p, S, R, lam, rho2 = blocks
    finite = np.isfinite(np.column_stack([a[:, :2], I, p, S, rho2]))
    if not finite.all():
        r, _ = np.argwhere(~finite)[0]
        raise ConfigError(f"{source}:{r + 2}: non-finite value")
    if np.all(np.isnan(lam)):
        lam = None
    try:
        return Trajectory(a[:, 0], I, p, S, rho2=rho2, lam=lam, tau=a[:, 1])
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def write_trajectory(path, traj: Trajectory) -> None:
    atomic_write(path, trajectory_to_csv(traj))


def read_trajectory(path) -> Trajectory:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
    return trajectory_from_csv(text, str(path))
