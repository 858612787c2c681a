"""BLAS thread pinning.

Every dense operation in this package is on matrices of order ~100, where
threaded BLAS synchronization costs far more than it saves (30x slowdowns
were measured on small hosts). Parallelism belongs at the trial/deployment
level instead, so the heavy entry points pin BLAS pools to one thread.
"""

from __future__ import annotations

from threadpoolctl import threadpool_limits

_pinned = False


def pin_blas_single_thread() -> None:
    """Idempotently limit BLAS/OpenMP pools to one thread for this process."""
    global _pinned
    if not _pinned:
        threadpool_limits(limits=1)
        _pinned = True
