"""Apply ``MESHREG_THREADS`` to the native thread pools.

Must run before numpy and scipy load their BLAS/OpenMP runtimes, which is why
the package imports it first.
"""
import os

_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")


def apply_thread_cap(environ=os.environ) -> int | None:
    raw = environ.get("MESHREG_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        return None
    if n < 1:
        return None
    for var in _VARS:
        environ.setdefault(var, str(n))
    return n


THREADS = apply_thread_cap()
