"""Allocation accounting for numeric buffers.

Ops and kernels report each buffer they allocate; an active
:class:`AllocationTracker` keeps the largest single buffer (in elements) and a
running total. Used to check the aggregation memory contract.
"""
from __future__ import annotations

import contextlib
import threading

import numpy as np

_local = threading.local()


class AllocationTracker:
    def __init__(self):
        self.peak_elements = 0
        self.peak_label: str | None = None
        self.total_elements = 0
        self.count = 0

    def record(self, numel: int, label: str | None = None) -> None:
        self.count += 1
        self.total_elements += numel
        if numel > self.peak_elements:
            self.peak_elements = numel
            self.peak_label = label

    def __repr__(self) -> str:
        return (
            f"AllocationTracker(peak={self.peak_elements} [{self.peak_label}], "
            f"buffers={self.count})"
        )


def _stack() -> list[AllocationTracker]:
    st = getattr(_local, "stack", None)
    if st is None:
        st = _local.stack = []
    return st


@contextlib.contextmanager
def track_allocations():
    tracker = AllocationTracker()
    _stack().append(tracker)
    try:
        yield tracker
    finally:
        _stack().remove(tracker)


def track(arr, label: str | None = None):
    """Report ``arr`` (an ndarray or an element count) to active trackers."""
    st = getattr(_local, "stack", None)
    if st:
        numel = int(arr) if isinstance(arr, (int, np.integer)) else int(np.size(arr))
        for tr in st:
            tr.record(numel, label)
    return arr
