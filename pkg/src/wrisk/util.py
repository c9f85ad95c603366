"""Small shared helpers."""

from __future__ import annotations

import os


def worker_count() -> int:
    """Worker cap for parallelizable loops, from the WRISK_THREADS variable.

    Results are required to be bitwise independent of this value; it only
    bounds how independent units of work are scheduled.
    """
    raw = os.environ.get("WRISK_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)
