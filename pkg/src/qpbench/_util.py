import os


def max_workers(requested=None):
    """Worker count for internal parallelism, capped by ``QPB_THREADS``."""
    cap = os.environ.get("QPB_THREADS")
    n = requested if requested is not None else (os.cpu_count() or 1)
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            pass
    return max(1, int(n))
