from __future__ import annotations

import logging
import os
import typing as t
from functools import lru_cache

import numpy as np

DEBUG_ENV_VAR = "CMDP_ALM_DEBUG"
LOG_FORMAT = "[%(name)s.%(levelname)s] %(message)s"


@lru_cache(maxsize=1)
def get_debug_mode() -> bool:
    if os.environ.get(DEBUG_ENV_VAR, str(False)).lower() == "true":
        return True
    else:
        return False


def patch_logger(module: str, level: int):
    patched_logger = logging.getLogger(module)
    patched_logger.setLevel(level=level)
    # avoid stacking handlers when the CLI is invoked repeatedly in one process
    for handler in list(patched_logger.handlers):
        if getattr(handler, "_cmdp_alm", False):
            patched_logger.removeHandler(handler)
    handler = logging.StreamHandler()
    handler.setLevel(logging.DEBUG)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler._cmdp_alm = True  # type: ignore[attr-defined]
    patched_logger.addHandler(handler)
    patched_logger.propagate = False


def format_float(value: float) -> str:
    """17 significant digits, enough to parse back to the same float."""
    return f"{float(value):.17g}"


def as_float_array(values: t.Any, name: str, ndim: int) -> np.ndarray:
    """
    Copy `values` into a read-only float64 array with `ndim` dimensions.
    """
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must have {ndim} dimension(s), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr
