"""Synthetic position time series from the toy model, plus dataset file I/O."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DatasetError
from .model import ModelParams, exact_solution


@dataclass(frozen=True)
class ExperimentRecord:
    id: int
    z0: float
    observations: tuple  # of (t, z_obs) pairs, t > 0 strictly increasing

    def __post_init__(self):
        obs = tuple((float(t), float(z)) for t, z in self.observations)
        if not obs:
            raise DatasetError(f"experiment {self.id}: no observations")
        ts = [t for t, _ in obs]
        if ts[0] <= 0 or any(b <= a for a, b in zip(ts, ts[1:])):
            raise DatasetError(f"experiment {self.id}: observation times must be positive and strictly increasing")
        object.__setattr__(self, "observations", obs)

    @property
    def times(self):
        return [t for t, _ in self.observations]

    @property
    def values(self):
        return [z for _, z in self.observations]


@dataclass(frozen=True)
class Dataset:
    experiments: tuple
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.experiments:
            raise DatasetError("dataset has no experiments")
        ids = [e.id for e in self.experiments]
        if len(set(ids)) != len(ids):
            raise DatasetError("experiment ids are not unique")
        object.__setattr__(self, "experiments", tuple(self.experiments))

    def __len__(self):
        return len(self.experiments)

    @property
    def n_observations(self) -> int:
        return sum(len(e.observations) for e in self.experiments)

    def true_params(self):
        if "theta1_true" in self.meta and self.meta["theta1_true"] is not None:
            return ModelParams(self.meta["theta1_true"], self.meta["theta2_true"])
        return None


def admissible_z0(p: ModelParams, margin: float):
    """Interval of initial positions whose phase stays ``margin`` inside (-pi/2, pi/2)."""
    if abs(p.theta1) < 1e-8:
        return -math.inf, math.inf
    a = (-math.pi / 2 + margin - p.theta2) / p.theta1
    b = (math.pi / 2 - margin - p.theta2) / p.theta1
    return min(a, b), max(a, b)


def generate_dataset(
    p_true: ModelParams,
    n: int,
    z0_range,
    obs_times,
    noise_sigma: float = 0.0,
    seed: int = 0,
    margin: float = 0.1,
) -> Dataset:
    """Draw ``n`` experiments with z0 uniform on ``z0_range`` and noisy exact observations.

    Each record gets its own random substream spawned from ``seed``; the
    uniform draw for z0 comes first, then one Gaussian draw per observation.
    """
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    if not noise_sigma >= 0:
        raise ConfigError(f"noise_sigma must be >= 0, got {noise_sigma}")
    lo, hi = float(z0_range[0]), float(z0_range[1])
    if not lo <= hi:
        raise ConfigError(f"z0_range must be ordered, got [{lo}, {hi}]")
    a, b = admissible_z0(p_true, margin)
    if lo <= a or hi >= b:
        raise ConfigError(
            f"z0_range [{lo}, {hi}] leaves the symmetry domain; admissible open interval "
            f"for theta=({p_true.theta1}, {p_true.theta2}) and margin {margin} is ({a}, {b})"
        )
    obs_times = [float(t) for t in obs_times]
    streams = np.random.SeedSequence(seed).spawn(n)
    records = []
    for i, ss in enumerate(streams):
        rng = np.random.default_rng(ss)
        z0 = float(rng.uniform(lo, hi))
        noise = rng.normal(0.0, 1.0, size=len(obs_times)) * noise_sigma
        obs = [(t, float(exact_solution(z0, t, p_true)) + float(eps)) for t, eps in zip(obs_times, noise)]
        records.append(ExperimentRecord(i, z0, obs))
    meta = {
        "theta1_true": p_true.theta1,
        "theta2_true": p_true.theta2,
        "noise_sigma": float(noise_sigma),
        "seed": int(seed),
        "margin": float(margin),
    }
    return Dataset(tuple(records), meta)


def perturb_dataset(ds: Dataset, sigma: float, seed: int) -> Dataset:
    """Copy of ``ds`` with extra Gaussian noise on every observation."""
    streams = np.random.SeedSequence(seed).spawn(len(ds))
    recs = []
    for ss, rec in zip(streams, ds.experiments):
        noise = np.random.default_rng(ss).normal(0.0, sigma, size=len(rec.observations))
        recs.append(ExperimentRecord(rec.id, rec.z0, [(t, z + float(e)) for (t, z), e in zip(rec.observations, noise)]))
    meta = dict(ds.meta)
    meta["noise_sigma"] = math.hypot(meta.get("noise_sigma", 0.0) or 0.0, sigma)
    meta["perturb_seed"] = int(seed)
    return Dataset(tuple(recs), meta)


# ---- file format -----------------------------------------------------------

DATASET_SCHEMA = {
    "type": "object",
    "required": ["meta", "experiments"],
    "additionalProperties": False,
    "properties": {
        "meta": {
            "type": "object",
            "required": ["theta1_true", "theta2_true", "noise_sigma", "seed", "margin"],
            "properties": {
                "theta1_true": {"type": ["number", "null"]},
                "theta2_true": {"type": ["number", "null"]},
                "noise_sigma": {"type": "number", "minimum": 0},
                "seed": {"type": ["integer", "null"]},
                "margin": {"type": "number", "minimum": 0},
            },
        },
        "experiments": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "z0", "observations"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "integer"},
                    "z0": {"type": "number"},
                    "observations": {
                        "type": "array",
                        "minItems": 1,
                        "items": {
                            "type": "object",
                            "required": ["t", "z"],
                            "additionalProperties": False,
                            "properties": {"t": {"type": "number"}, "z": {"type": "number"}},
                        },
                    },
                },
            },
        },
    },
}


def dataset_to_dict(ds: Dataset) -> dict:
    return {
        "meta": {k: ds.meta.get(k) for k in ("theta1_true", "theta2_true", "noise_sigma", "seed", "margin")},
        "experiments": [
            {"id": e.id, "z0": e.z0, "observations": [{"t": t, "z": z} for t, z in e.observations]}
            for e in ds.experiments
        ],
    }


def dataset_from_dict(doc) -> Dataset:
    import jsonschema

    validator = jsonschema.Draft7Validator(DATASET_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        msgs = ["/".join(str(x) for x in e.absolute_path) + ": " + e.message for e in errors[:10]]
        raise DatasetError("dataset schema violation:\n  " + "\n  ".join(msgs))
    recs = []
    for j, e in enumerate(doc["experiments"]):
        try:
            recs.append(ExperimentRecord(e["id"], e["z0"], [(o["t"], o["z"]) for o in e["observations"]]))
        except DatasetError as exc:
            raise DatasetError(f"experiments/{j}: {exc}") from None
    return Dataset(tuple(recs), dict(doc["meta"]))


def save_dataset(ds: Dataset, path) -> None:
    with open(path, "w") as fh:
        json.dump(dataset_to_dict(ds), fh, indent=2)
        fh.write("\n")


def load_dataset(path) -> Dataset:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise DatasetError(f"{path}: file not found") from None
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    try:
        return dataset_from_dict(doc)
    except DatasetError as exc:
        raise DatasetError(f"{path}: {exc}") from None
