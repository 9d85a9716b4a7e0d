from __future__ import annotations

import logging
import typing as t
from pathlib import Path

from cmdp_alm.cmdp import TabularCmdp
from cmdp_alm.envs.cliff_world import cliff_world
from cmdp_alm.envs.deep_sea_treasure import deep_sea_treasure
from cmdp_alm.envs.grid import GridGeometry
from cmdp_alm.exceptions import OutputWriteError

logger = logging.getLogger(__name__)

ENVIRONMENTS: t.Dict[str, t.Callable[[], t.Tuple[TabularCmdp, GridGeometry]]] = {
    "cliff-world": cliff_world,
    "deep-sea-treasure": deep_sea_treasure,
}


def make_env(env_id: str) -> t.Tuple[TabularCmdp, GridGeometry]:
    try:
        builder = ENVIRONMENTS[env_id]
    except KeyError:
        raise ValueError(
            f"unknown environment '{env_id}', expected one of {sorted(ENVIRONMENTS)}"
        )
    return builder()


def export_environment(env_id: str, directory: t.Union[str, Path]) -> t.List[Path]:
    """Writes `<env_id>.json` (the CMDP document) and `<env_id>.txt` (ASCII map)."""
    cmdp, geometry = make_env(env_id)
    directory = Path(directory)
    json_path = directory / f"{env_id}.json"
    map_path = directory / f"{env_id}.txt"
    try:
        directory.mkdir(parents=True, exist_ok=True)
        cmdp.save_json(json_path)
        map_path.write_text(geometry.ascii_map())
    except OSError as e:
        raise OutputWriteError(str(directory), str(e)) from e
    logger.info("exported %s to %s", env_id, directory)
    return [json_path, map_path]


__all__ = [
    "ENVIRONMENTS",
    "GridGeometry",
    "cliff_world",
    "deep_sea_treasure",
    "export_environment",
    "make_env",
]
