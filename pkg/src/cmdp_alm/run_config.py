from __future__ import annotations

import typing as t
from dataclasses import dataclass

import numpy as np


@dataclass
class RunConfig:
    """
    Configuration for parallelism, progress reporting and seeding of cmdp-alm runs.

    Parameters
    ----------
    max_workers : int, optional
        Maximum number of grid points solved concurrently, by default 16.
        Use -1 to remove the limit.
    show_progress : bool, optional
        Whether the executor shows a progress bar, by default True.
    seed : int, optional
        Random seed for reproducibility, by default 42.

    Attributes
    ----------
    rng : numpy.random.Generator
        Random number generator initialized with the specified seed.

    Notes
    -----
    Every solver in this package is deterministic. Randomness only enters through
    random initial policies and random test instances, and each grid point draws
    from its own generator (see `spawn_rng`) so that the number of workers and the
    order of completion never change results.
    """

    max_workers: int = 16
    show_progress: bool = True
    seed: t.Optional[int] = 42

    def __post_init__(self):
        if self.max_workers == 0 or self.max_workers < -1:
            raise ValueError(
                f"max_workers must be positive or -1, got {self.max_workers}"
            )
        self.rng = np.random.default_rng(seed=self.seed)

    def spawn_rng(self, index: int) -> np.random.Generator:
        """
        Independent generator for job `index`, derived from `(seed, index)` only.
        """
        if self.seed is None:
            return np.random.default_rng()
        return np.random.default_rng([self.seed, index])
