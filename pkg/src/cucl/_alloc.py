"""Allocator tuning for the training loop.

Each step allocates and frees many same-sized ~0.5 MB arrays.  Above glibc's
default mmap threshold every one of them is a fresh mapping that page-faults
on first touch; raising the threshold keeps them on the heap.
"""

import ctypes
import ctypes.util

_M_TRIM_THRESHOLD = -1
_M_MMAP_THRESHOLD = -3


def tune_malloc(threshold: int = 64 << 20) -> bool:
    """Raise glibc's mmap/trim thresholds; returns False where that is unavailable."""
    name = ctypes.util.find_library("c")
    if not name:
        return False
    try:
        libc = ctypes.CDLL(name)
        mallopt = libc.mallopt
    except (OSError, AttributeError):
        return False
    ok = mallopt(_M_MMAP_THRESHOLD, threshold) and mallopt(_M_TRIM_THRESHOLD, 2 * threshold)
    return bool(ok)
