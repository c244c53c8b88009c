"""Order-preserving parallel map over an index range.

Workers only read shared inputs and write disjoint output slots, so results
are identical to the sequential run regardless of scheduling.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def map_indexed(fn: Callable[[T], R], items: Sequence[T], threads: int = 1) -> list[R]:
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    out: list = [None] * len(items)

    def run(i: int) -> None:
        out[i] = fn(items[i])

    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(run, range(len(items))))
    return out
