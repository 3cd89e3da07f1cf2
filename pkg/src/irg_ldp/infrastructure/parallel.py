from __future__ import annotations

from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor
from typing import TypeVar

T = TypeVar("T")
R = TypeVar("R")


def map_ordered(func: Callable[[T], R], items: Iterable[T], workers: int = 1) -> list[R]:
    """Apply func to items, returning results in input order for any worker count."""
    materialized = list(items)
    if workers <= 1 or len(materialized) <= 1:
        return [func(item) for item in materialized]

    with ThreadPoolExecutor(max_workers=min(workers, len(materialized))) as executor:
        return list(executor.map(func, materialized))


def chunk_ranges(total: int, chunk_size: int) -> list[tuple[int, int]]:
    if chunk_size < 1:
        raise ValueError("chunk_size must be at least 1")
    return [(start, min(start + chunk_size, total)) for start in range(0, total, chunk_size)]
