"""
State-action features for log-linear policies on grid worlds.

Tile coding lays `num_tilings` offset grids of `tile_size` x `tile_size` cells over
the (row, col) coordinates of each state and hashes (tiling, row tile, col tile,
action) into a table of `table_size` entries. Collisions are allowed; the hash is
a fixed multiplicative hash, so the same seed always gives the same table.
"""

from __future__ import annotations

import logging
import typing as t
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from pydantic import BaseModel, model_validator

from cmdp_alm.exceptions import OutputWriteError
from cmdp_alm.utils import as_float_array

logger = logging.getLogger(__name__)

NORM_ATOL = 1e-12
_HASH_MULTIPLIER = 2654435761
_HASH_MODULUS = 2**32


class GridCoordinates(t.Protocol):
    """Anything that places states on a grid."""

    @property
    def n_states(self) -> int: ...

    def coords(self, state: int) -> t.Tuple[int, int]: ...


@dataclass(frozen=True)
class TileCoderConfig:
    """
    Attributes
    ----------
    table_size : int
        Feature dimension d (size of the hash table).
    num_tilings : int
        Number N of offset tilings; every (s, a) activates one tile per tiling.
    tile_size : int
        Side length of a tile in grid cells.
    seed : int
        Hashing seed.
    """

    table_size: int
    num_tilings: int
    tile_size: int
    seed: int = 0

    def __post_init__(self):
        if self.num_tilings < 1:
            raise ValueError(f"num_tilings must be positive, got {self.num_tilings}")
        if self.tile_size < 1:
            raise ValueError(f"tile_size must be positive, got {self.tile_size}")
        if self.table_size < self.num_tilings:
            raise ValueError(
                f"table_size ({self.table_size}) must be at least num_tilings ({self.num_tilings})"
            )


def _hash_coords(coords: t.Sequence[int], seed: int, size: int) -> int:
    h = seed % _HASH_MODULUS
    for c in coords:
        h = (h * _HASH_MULTIPLIER + c + 1) % _HASH_MODULUS
        h ^= h >> 16
    return h % size


@dataclass(frozen=True)
class FeatureMap:
    """phi(s, a) in R^d with shape (S, A, d); every row has l2-norm at most 1."""

    phi: np.ndarray

    def __post_init__(self):
        phi = as_float_array(self.phi, "features", 3)
        max_norm = float(np.max(np.linalg.norm(phi, axis=-1)))
        if max_norm > 1.0 + NORM_ATOL:
            raise ValueError(f"feature rows must have l2-norm <= 1, found {max_norm:.6g}")
        object.__setattr__(self, "phi", phi)

    @property
    def n_states(self) -> int:
        return self.phi.shape[0]

    @property
    def n_actions(self) -> int:
        return self.phi.shape[1]

    @property
    def dim(self) -> int:
        return self.phi.shape[2]

    def logits(self, theta: np.ndarray) -> np.ndarray:
        """<phi(s, a), theta> for every (s, a)."""
        return self.phi @ np.asarray(theta, dtype=np.float64)

    def to_document(self) -> "FeatureMapDocument":
        return FeatureMapDocument(
            n_states=self.n_states,
            n_actions=self.n_actions,
            dim=self.dim,
            phi=self.phi.tolist(),
        )

    @classmethod
    def from_document(cls, document: "FeatureMapDocument") -> "FeatureMap":
        return cls(np.asarray(document.phi, dtype=np.float64))

    def save_json(self, path: t.Union[str, Path]):
        try:
            Path(path).write_text(self.to_document().model_dump_json(indent=2))
        except OSError as e:
            raise OutputWriteError(str(path), str(e)) from e

    @classmethod
    def load_json(cls, path: t.Union[str, Path]) -> "FeatureMap":
        return cls.from_document(
            FeatureMapDocument.model_validate_json(Path(path).read_text())
        )


class FeatureMapDocument(BaseModel):
    n_states: int
    n_actions: int
    dim: int
    phi: t.List[t.List[t.List[float]]]

    @model_validator(mode="after")
    def check_sizes(self) -> "FeatureMapDocument":
        if len(self.phi) != self.n_states:
            raise ValueError(f"phi has {len(self.phi)} states, expected {self.n_states}")
        for row in self.phi:
            if len(row) != self.n_actions or any(len(v) != self.dim for v in row):
                raise ValueError("phi rows do not match n_actions x dim")
        return self


def normalize_rows(phi: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(phi, axis=-1, keepdims=True)
    return np.divide(phi, norms, out=np.zeros_like(phi), where=norms > 0)


def one_hot_features(n_states: int, n_actions: int) -> FeatureMap:
    """phi(s, a) = e_{s*A + a}."""
    dim = n_states * n_actions
    return FeatureMap(np.eye(dim).reshape(n_states, n_actions, dim))


def tile_code(
    config: TileCoderConfig, geometry: GridCoordinates, n_actions: int
) -> FeatureMap:
    n = config.num_tilings
    width = n * config.tile_size
    phi = np.zeros((geometry.n_states, n_actions, config.table_size))
    for s in range(geometry.n_states):
        row, col = geometry.coords(s)
        for tiling in range(n):
            # asymmetric offsets: tiling j shifts rows by j and columns by 3j (in 1/N cells)
            row_tile = (row * n + tiling) // width
            col_tile = (col * n + 3 * tiling) // width
            for a in range(n_actions):
                index = _hash_coords((tiling, row_tile, col_tile, a), config.seed, config.table_size)
                phi[s, a, index] += 1.0
    features = FeatureMap(normalize_rows(phi))
    active = np.count_nonzero(phi.reshape(-1, config.table_size).sum(axis=0))
    logger.debug(
        "tile coding (d=%d, N=%d, s=%d): %d of %d table entries in use",
        config.table_size,
        n,
        config.tile_size,
        active,
        config.table_size,
    )
    return features
