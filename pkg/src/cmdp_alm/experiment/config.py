"""
Experiment configurations: an environment, an algorithm and a hyperparameter grid.

A config file is TOML or JSON with the same keys, for example::

    env = "cliff-world"
    algorithm = "pqa-alm"
    T = [10]
    K = [100]
    beta = [10.0]
    step_size = [0.1, 1.0, 10.0]
    eps_sel = 0.001
"""

from __future__ import annotations

import itertools
import sys
import typing as t
from pathlib import Path

from pydantic import BaseModel, Field, field_validator, model_validator

from cmdp_alm.augmented_lagrangian import BudgetMode
from cmdp_alm.envs import ENVIRONMENTS
from cmdp_alm.solvers.features import TileCoderConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

Algorithm = t.Literal["pqa-alm", "ppqa-alm", "npg-pd-baseline"]
ONE_HOT = "one-hot"


class TileCoderSpec(BaseModel):
    table_size: int = Field(gt=0)
    num_tilings: int = Field(gt=0)
    tile_size: int = Field(gt=0)
    seed: int = 0

    def build(self) -> TileCoderConfig:
        return TileCoderConfig(
            table_size=self.table_size,
            num_tilings=self.num_tilings,
            tile_size=self.tile_size,
            seed=self.seed,
        )

    @property
    def label(self) -> str:
        return f"tiles(d={self.table_size},N={self.num_tilings},s={self.tile_size})"


FeatureSpec = t.Union[t.Literal["one-hot"], TileCoderSpec]


class GridPoint(BaseModel):
    """One fully specified run of a grid search."""

    index: int
    algorithm: Algorithm
    T: int
    K: t.Optional[int] = None
    beta: t.Optional[float] = None
    sigma: t.Optional[float] = None
    step_size: float
    dual_step_size: t.Optional[float] = None
    features: t.Optional[FeatureSpec] = None
    surrogate_steps: t.Optional[int] = None
    surrogate_step_size: t.Optional[float] = None

    @property
    def label(self) -> str:
        parts = [f"T={self.T}"]
        if self.K is not None:
            parts.append(f"K={self.K}")
        if self.beta is not None:
            parts.append(f"beta={self.beta:g}")
        if self.sigma is not None:
            parts.append(f"sigma={self.sigma:g}")
        parts.append(f"eta={self.step_size:g}")
        if self.dual_step_size is not None:
            parts.append(f"dual_eta={self.dual_step_size:g}")
        if self.features is not None:
            parts.append(
                self.features if isinstance(self.features, str) else self.features.label
            )
        if self.surrogate_steps is not None:
            parts.append(f"N={self.surrogate_steps}")
        if self.surrogate_step_size is not None:
            parts.append(f"zeta={self.surrogate_step_size:g}")
        return " ".join(parts)


class ExperimentConfig(BaseModel):
    """
    Grid-search experiment. Every list is one axis of the grid; only the axes the
    chosen algorithm uses are expanded.

    `K` and `beta` are ignored by the NPG-PD baseline, which runs `T` single
    gradient steps; `dual_step_size` is used by the baseline only.
    """

    env: str
    algorithm: Algorithm = "pqa-alm"
    T: t.List[int] = Field(default_factory=lambda: [10], min_length=1)
    K: t.List[int] = Field(default_factory=lambda: [100], min_length=1)
    beta: t.List[float] = Field(default_factory=lambda: [10.0], min_length=1)
    sigma: t.List[float] = Field(default_factory=lambda: [1.0], min_length=1)
    step_size: t.List[float] = Field(default_factory=lambda: [0.1, 1.0, 10.0], min_length=1)
    dual_step_size: t.List[float] = Field(default_factory=lambda: [0.1], min_length=1)
    features: t.List[FeatureSpec] = Field(default_factory=lambda: [ONE_HOT], min_length=1)
    surrogate_steps: t.List[int] = Field(default_factory=lambda: [250], min_length=1)
    surrogate_step_size: t.List[float] = Field(default_factory=lambda: [1.0], min_length=1)
    budget_mode: BudgetMode = BudgetMode.FIXED
    eps_sel: float = 0.001
    seed: int = 42
    initial_policy: t.Literal["uniform", "random"] = "uniform"
    name: t.Optional[str] = None

    @field_validator("env")
    @classmethod
    def known_env(cls, v: str) -> str:
        if v not in ENVIRONMENTS:
            raise ValueError(f"unknown environment '{v}', expected one of {sorted(ENVIRONMENTS)}")
        return v

    @field_validator("T")
    @classmethod
    def positive_horizon(cls, v: t.List[int]) -> t.List[int]:
        if any(x < 1 for x in v):
            raise ValueError("every T must be at least 1")
        return v

    @field_validator("K", "surrogate_steps")
    @classmethod
    def non_negative_counts(cls, v: t.List[int]) -> t.List[int]:
        if any(x < 0 for x in v):
            raise ValueError("iteration counts must be non-negative")
        return v

    @field_validator("beta", "sigma", "step_size", "dual_step_size", "surrogate_step_size")
    @classmethod
    def positive_values(cls, v: t.List[float]) -> t.List[float]:
        if any(x <= 0 for x in v):
            raise ValueError("step sizes, beta and sigma must be positive")
        return v

    @model_validator(mode="after")
    def check_selection(self) -> "ExperimentConfig":
        if self.eps_sel <= 0:
            raise ValueError(f"eps_sel must be positive, got {self.eps_sel}")
        return self

    @property
    def label(self) -> str:
        return self.name or f"{self.env}-{self.algorithm}"

    def grid(self) -> t.List[GridPoint]:
        if self.algorithm == "npg-pd-baseline":
            axes: t.Dict[str, t.Sequence[t.Any]] = {
                "T": self.T,
                "step_size": self.step_size,
                "dual_step_size": self.dual_step_size,
            }
        else:
            axes = {
                "T": self.T,
                "K": self.K,
                "beta": self.beta,
                "sigma": self.sigma,
                "step_size": self.step_size,
            }
            if self.algorithm == "ppqa-alm":
                axes.update(
                    features=self.features,
                    surrogate_steps=self.surrogate_steps,
                    surrogate_step_size=self.surrogate_step_size,
                )
        names = list(axes)
        return [
            GridPoint(index=i, algorithm=self.algorithm, **dict(zip(names, values)))
            for i, values in enumerate(itertools.product(*axes.values()))
        ]

    @classmethod
    def from_file(cls, path: t.Union[str, Path]) -> "ExperimentConfig":
        path = Path(path)
        suffix = path.suffix.lower()
        if suffix == ".toml":
            with open(path, "rb") as f:
                return cls.model_validate(tomllib.load(f))
        if suffix == ".json":
            return cls.model_validate_json(path.read_text())
        raise ValueError(f"config must be a .toml or .json file, got '{path.name}'")
