from __future__ import annotations

import time
import typing as t

import numpy as np
from rich.console import Console
from rich.table import Table

P = t.ParamSpec("P")
R = t.TypeVar("R")
OrigFunc = t.Callable[P, R]
DecoratedFunc = t.Callable[P, tuple[np.floating, np.floating]]


def timeit(func: OrigFunc, iteration: int = 3) -> DecoratedFunc:
    def function_timer(
        *args: P.args, **kwargs: P.kwargs
    ) -> tuple[np.floating, np.floating]:
        """
        Mean and variance of the wall-clock time of `iteration` calls after one warmup.
        """
        func(*args, **kwargs)

        runtimes = []
        for _ in range(iteration):
            start = time.perf_counter()
            func(*args, **kwargs)
            runtimes.append(time.perf_counter() - start)

        return np.mean(runtimes), np.var(runtimes)

    return function_timer


def print_table(result: t.Dict[str, tuple[np.floating, np.floating]]):
    table = Table("Benchmark", "mean (s)", "var", title="Benchmark Results")

    for name, (mean, var) in result.items():
        table.add_row(name, f"{mean:.4f}", f"{var:.2e}")

    console = Console()
    console.print(table)
