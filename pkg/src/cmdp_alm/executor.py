from __future__ import annotations

import asyncio
import logging
import typing as t
from dataclasses import dataclass, field

import nest_asyncio
from tqdm.auto import tqdm

from cmdp_alm.exceptions import ExceptionInRunner
from cmdp_alm.run_config import RunConfig

logger = logging.getLogger(__name__)


def is_event_loop_running() -> bool:
    """
    Check if an event loop is currently running.
    """
    try:
        loop = asyncio.get_running_loop()
    except RuntimeError:
        return False
    else:
        return loop.is_running()


async def as_completed(coros, max_workers: int):
    if max_workers == -1:
        return asyncio.as_completed(coros)

    semaphore = asyncio.Semaphore(max_workers)

    async def sema_coro(coro):
        async with semaphore:
            return await coro

    return asyncio.as_completed([sema_coro(c) for c in coros])


@dataclass
class Executor:
    """
    Runs independent CPU-bound jobs on worker threads with a progress bar.

    Each job runs through `asyncio.to_thread`, at most `run_config.max_workers` at
    a time, and `results()` returns them in submission order regardless of
    completion order. The first failing job aborts the batch.
    """

    desc: str = "Solving"
    run_config: RunConfig = field(default_factory=RunConfig)
    jobs: t.List[t.Tuple[t.Callable, t.Dict[str, t.Any]]] = field(
        default_factory=list, repr=False
    )

    def submit(self, func: t.Callable, **kwargs):
        self.jobs.append((func, kwargs))

    async def _run_job(self, index: int, func: t.Callable, kwargs: t.Dict[str, t.Any]):
        try:
            result = await asyncio.to_thread(func, **kwargs)
        except Exception as e:
            logger.error("Exception raised in Job[%d]: %s(%s)", index, type(e).__name__, e)
            raise ExceptionInRunner(index, e) from e
        return index, result

    def results(self) -> t.List[t.Any]:
        if is_event_loop_running():
            # asyncio.run below must nest inside notebooks and async callers
            nest_asyncio.apply()

        async def _aresults() -> t.List[t.Tuple[int, t.Any]]:
            coros = [
                self._run_job(i, func, kwargs) for i, (func, kwargs) in enumerate(self.jobs)
            ]
            futures_as_they_finish = await as_completed(
                coros, max_workers=self.run_config.max_workers
            )
            results = []
            for future in tqdm(
                futures_as_they_finish,
                desc=self.desc,
                total=len(self.jobs),
                leave=False,
                disable=not self.run_config.show_progress,
            ):
                results.append(await future)
            return results

        results = asyncio.run(_aresults())
        return [r for _, r in sorted(results, key=lambda x: x[0])]


def run_batch(
    desc: str,
    func: t.Callable,
    kwargs_list: t.List[t.Dict],
    run_config: t.Optional[RunConfig] = None,
) -> t.List[t.Any]:
    """
    Run the same function with different keyword arguments in parallel and
    return the results in input order.
    """
    executor = Executor(desc=desc, run_config=run_config or RunConfig())
    for kwargs in kwargs_list:
        executor.submit(func, **kwargs)
    return executor.results()
