"""Worker-count policy for the embarrassingly parallel jobs."""

import os

ENV_VAR = "DOMAINGAP_THREADS"


def worker_count() -> int:
    """``os.cpu_count()`` capped by ``$DOMAINGAP_THREADS`` (if set and positive)."""
    n = os.cpu_count() or 1
    cap = os.environ.get(ENV_VAR)
    if cap:
        try:
            value = int(cap)
        except ValueError:
            return n
        if value >= 1:
            n = min(n, value)
    return n
