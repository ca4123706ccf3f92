"""Flat dotted-key run configuration (``solver.h``, ``loss.a1``, ...).

Config files are TOML (dotted keys such as ``solver.h = 0.01`` are valid
TOML) or JSON. A JSON report carrying a ``"config"`` object can be fed back
in directly to reproduce the run.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

from .conservation import ResidualMode
from .errors import ConfigError
from .lie import GroupConstants
from .model import ModelParams
from .ode import Method, SolverConfig
from .training import LossWeights, Optimizer, TrainConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DEFAULTS = {
    "data.path": "",
    "data.n": 50,
    "data.theta1_true": 1.0,
    "data.theta2_true": 0.5,
    "data.z0_min": -0.9,
    "data.z0_max": 0.4,
    "data.obs_times": [1.0],
    "data.noise_sigma": 0.0,
    "data.seed": 0,
    "data.margin": 0.1,
    "solver.method": "rk4",
    "solver.h": 0.01,
    "solver.rtol": 1e-10,
    "solver.atol": 1e-10,
    "solver.max_steps": 100000,
    "train.optimizer": "adam",
    "train.lr": 0.05,
    "train.max_iters": 500,
    "train.grad_tol": 1e-6,
    "train.fd_step": 1e-6,
    "train.theta1_init": 0.5,
    "train.theta2_init": 0.0,
    "train.seed": 0,
    "train.adjoint_check_every": 10,
    "loss.a1": 0.01,
    "loss.a2": 0.01,
    "loss.a3": 0.01,
    "loss.a4": 0.01,
    "loss.mode": "chain",
    "group.epsilon": 0.01,
    "group.c1": 1.0,
    "group.c2": 0.0,
    "group.c3": 0.5,
    "group.k2": 0.0,
    "group.k3": 1.0,
    "group.k4": 0.0,
    "group.g": [0.0],
    "group.h": [0.0],
    "audit.t_grid": [0.0, 1.0, 5.0],
    "audit.phi_grid": [-1.2, -0.6, 0.0, 0.6, 1.2],
    "audit.c_values": [-2.0, 0.0, 1.0],
    "audit.theta_grid": [[1.0, 0.0], [1.5, 0.2]],
    "audit.u_grid": [0.1, 1.0, 10.0],
    "audit.vw_grid": [-1.0, 0.0, 2.0],
    "audit.eps_list": [1e-2, 5e-3, 2.5e-3],
    "audit.scaling_phi_max": 1.0,
    "audit.scaling_points": 21,
    "audit.scaling_c1": 1.0,
    "audit.scaling_c3": 0.0,
    "gradcheck.n_points": 20,
    "gradcheck.seed": 0,
    "gradcheck.rel_tol": 1e-4,
    "gradcheck.fd_step": 1e-5,
    "gradcheck.method": "rk45",
    "gradcheck.rtol": 1e-10,
    "gradcheck.atol": 1e-10,
    "compare.seeds": [0, 1, 2, 3, 4],
    "compare.noise_sigma": 0.05,
}

_CHOICES = {
    "solver.method": {m.value for m in Method},
    "gradcheck.method": {m.value for m in Method},
    "train.optimizer": {o.value for o in Optimizer},
    "loss.mode": {m.value for m in ResidualMode},
}


def _flatten(doc, prefix=""):
    out = {}
    for key, val in doc.items():
        name = f"{prefix}{key}"
        if isinstance(val, dict):
            out.update(_flatten(val, name + "."))
        else:
            out[name] = val
    return out


def _coerce(key, val):
    default = DEFAULTS[key]
    if isinstance(default, bool):
        ok = isinstance(val, bool)
    elif isinstance(default, int):
        ok = isinstance(val, int) and not isinstance(val, bool)
    elif isinstance(default, float):
        ok = isinstance(val, (int, float)) and not isinstance(val, bool)
        val = float(val) if ok else val
    elif isinstance(default, str):
        ok = isinstance(val, str)
    else:
        ok = isinstance(val, list)
    if not ok:
        raise ConfigError(f"config key {key!r}: expected {type(default).__name__}, got {val!r}")
    if key in _CHOICES and val not in _CHOICES[key]:
        raise ConfigError(f"config key {key!r}: {val!r} not one of {sorted(_CHOICES[key])}")
    return val


def resolve(overrides=None) -> dict:
    """Defaults merged with ``overrides`` (flat or nested); unknown keys are rejected."""
    flat = _flatten(overrides or {})
    unknown = sorted(set(flat) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    cfg = dict(DEFAULTS)
    for key, val in flat.items():
        cfg[key] = _coerce(key, val)
    if cfg["data.noise_sigma"] < 0:
        raise ConfigError(f"data.noise_sigma must be >= 0, got {cfg['data.noise_sigma']}")
    if cfg["compare.noise_sigma"] < 0:
        raise ConfigError(f"compare.noise_sigma must be >= 0, got {cfg['compare.noise_sigma']}")
    return cfg


def load(path) -> dict:
    """Read a TOML or JSON config file and resolve it against the defaults."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        if path.suffix == ".json":
            doc = json.loads(text)
            if isinstance(doc, dict) and isinstance(doc.get("config"), dict):
                doc = doc["config"]
        else:
            doc = tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a table of keys")
    return resolve(doc)


def dumps(cfg: dict) -> str:
    """Serialize as flat dotted-key TOML, keys sorted."""
    return "".join(f"{key} = {json.dumps(cfg[key])}\n" for key in sorted(cfg))


# ---- typed views ------------------------------------------------------------

def solver_config(cfg) -> SolverConfig:
    return SolverConfig(
        method=cfg["solver.method"],
        h=cfg["solver.h"],
        rtol=cfg["solver.rtol"],
        atol=cfg["solver.atol"],
        max_steps=cfg["solver.max_steps"],
    )


def group_constants(cfg) -> GroupConstants:
    return GroupConstants(
        epsilon=cfg["group.epsilon"],
        c1=cfg["group.c1"],
        c2=cfg["group.c2"],
        c3=cfg["group.c3"],
        k2=cfg["group.k2"],
        k3=cfg["group.k3"],
        k4=cfg["group.k4"],
        g_coeffs=tuple(cfg["group.g"]),
        h_coeffs=tuple(cfg["group.h"]),
    )


def train_config(cfg) -> TrainConfig:
    return TrainConfig(
        optimizer=cfg["train.optimizer"],
        learning_rate=cfg["train.lr"],
        max_iters=cfg["train.max_iters"],
        grad_tol=cfg["train.grad_tol"],
        fd_step=cfg["train.fd_step"],
        weights=LossWeights(cfg["loss.a1"], cfg["loss.a2"], cfg["loss.a3"], cfg["loss.a4"]),
        gc=group_constants(cfg),
        mode=cfg["loss.mode"],
        seed=cfg["train.seed"],
        solver=solver_config(cfg),
        adjoint_check_every=cfg["train.adjoint_check_every"],
    )


def initial_params(cfg) -> ModelParams:
    return ModelParams(cfg["train.theta1_init"], cfg["train.theta2_init"])


def true_params(cfg) -> ModelParams:
    return ModelParams(cfg["data.theta1_true"], cfg["data.theta2_true"])
