"""Run configuration for the benchmark experiments.

A single JSON-round-trippable bundle holds everything a runner needs:
experiment name, kernel overrides, covering parameters, solver settings,
random seed, and output choices.  Every random draw inside a run derives
from the seed, so a fixed config reproduces all numeric outputs exactly.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field

from ..conic import SolverSettings

__all__ = [
    "EXPERIMENTS",
    "SCHEMES",
    "CoveringConfig",
    "ExperimentConfig",
    "default_config",
]

EXPERIMENTS = ("catenary", "control", "robotarm", "econ", "custom")

#: covering schemes selectable from the command line
SCHEMES = ("ball", "hyp", "soap-ball", "soap-hyp", "disc", "none")


@dataclass
class CoveringConfig:
    """Covering construction knobs shared by all experiments.

    ``delta0``/``gamma``/``k_max`` drive the adaptive refinement loop;
    ``norm`` picks the input-ball shape; ``n_x``/``n_u`` size the buffer
    sampling; ``eta_safety`` inflates sampled buffers by a relative margin
    (guards against the sampled supremum sitting slightly below the true
    one).
    """

    delta0: float = 0.01
    gamma: float = 0.8
    k_max: int = 30
    norm: str = "max"
    n_x: int = 50
    n_u: int = 20
    eta_safety: float = 0.0


#: per-experiment defaults (covering overrides + runner parameters)
_DEFAULTS: dict = {
    "catenary": {
        "covering": {},
        "params": {
            "m_list": [30, 60, 120],
            "objective": "norm",          # "norm" or "norm_squared"
            "reference_points": 10_000,
            "tol_sat": 1e-8,
            "max_elements": 4000,
            "verify_res": 10_000,
        },
    },
    "control": {
        # sampled buffers on a non-translation-invariant kernel: use a
        # dense sample and a safety margin so the guarantee survives the
        # gap between the sampled and true supremum.
        "covering": {"n_x": 400, "eta_safety": 0.05},
        "params": {
            "system_a": [[0.0, 1.0], [0.0, -1.0]],
            "system_b": [0.0, 1.0],
            "m_intervals": 25,
            "wall_centers": 10,
            "wall_lengthscale": 0.15,
            "wall_amplitude": 0.35,
            "wall_clearance": 0.3,
            "verify_res": 10_000,
        },
    },
    "robotarm": {
        "covering": {"norm": "euclidean", "n_x": 1000},
        "params": {
            "segments": 2,
            "n_obs": 40,
            "noise": 0.2,
            "m_list": [16, 81],
            "seeds": None,                # None -> [cfg.seed]
            "schemes": ["none", "disc", "ball", "hyp"],
            "coeff_floor": 0.1,
            "ball_shrink": 100.0,         # anchor ball radius = cell/shrink
            "cv": True,
            "cv_folds": 3,
            "cv_sigma_grid": [0.5, 1.0],
            "cv_lambda_grid": [1e-3, 1e-2],
            "metric_grid": 5,
            "cons_samples": 400,
            "covered_samples": 20,
        },
    },
    "econ": {
        "params": {
            "dataset_path": "data/Labour.csv",
            "synthetic_rows": 569,
            "expected_kept": 543,
            "counts": [15, 15],
            "reps": 5,
            "folds": 5,
            "lambda_grid": [0.5, 1.0, 2.0, 4.0, 8.0, 16.0],
            "train_fraction": 0.1,
            "regimes": ["none", "monot", "conv", "both"],
        },
    },
    "custom": {"params": {}},
}


@dataclass
class ExperimentConfig:
    """Validated experiment configuration with JSON round-trip."""

    experiment: str
    seed: int = 0
    out_dir: str | None = None
    scheme: str | None = None
    grid_res: int = 1001
    kernel: dict = field(default_factory=dict)
    covering: CoveringConfig = field(default_factory=CoveringConfig)
    solver: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(
                f"unknown experiment {self.experiment!r}; "
                f"expected one of {EXPERIMENTS}"
            )
        if self.scheme is not None and self.scheme not in SCHEMES:
            raise ValueError(
                f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}"
            )
        if isinstance(self.covering, dict):
            self.covering = CoveringConfig(**self.covering)
        self.seed = int(self.seed)
        self.grid_res = int(self.grid_res)
        if self.grid_res < 2:
            raise ValueError("grid_res must be at least 2")

    # ------------------------------------------------------------- helpers
    def solver_settings(self) -> SolverSettings:
        return SolverSettings(**self.solver)

    def param(self, key: str, default=None):
        return self.params.get(key, default)

    # ---------------------------------------------------------- round-trip
    def to_json(self) -> dict:
        data = asdict(self)
        return data

    @staticmethod
    def from_json(data: dict) -> "ExperimentConfig":
        return ExperimentConfig(**data)

    @staticmethod
    def load(path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        if "experiment" not in data:
            raise ValueError("config file must name an experiment")
        base = default_config(data["experiment"])
        return _merge_config(base, data)

    def dump_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def default_config(experiment: str) -> ExperimentConfig:
    """Fully-populated defaults for one experiment."""
    if experiment not in _DEFAULTS:
        raise ValueError(
            f"unknown experiment {experiment!r}; expected one of {EXPERIMENTS}"
        )
    spec = _DEFAULTS[experiment]
    return ExperimentConfig(
        experiment=experiment,
        covering=CoveringConfig(**spec.get("covering", {})),
        params=copy.deepcopy(spec.get("params", {})),
    )


def _merge_config(base: ExperimentConfig, data: dict) -> ExperimentConfig:
    """Overlay a JSON dict onto a default config (params merge per key)."""
    merged = base.to_json()
    for key, value in data.items():
        if key == "params" and isinstance(value, dict):
            merged["params"].update(value)
        elif key == "covering" and isinstance(value, dict):
            merged["covering"].update(value)
        else:
            merged[key] = value
    return ExperimentConfig.from_json(merged)
