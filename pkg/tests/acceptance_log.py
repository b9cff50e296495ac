"""Collects one verdict line per acceptance criterion for the terminal summary."""

import functools
import time

RESULTS: dict[int, tuple[str, bool, str]] = {}


def criterion(number: int, title: str):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            t0 = time.perf_counter()
            try:
                detail = fn(*args, **kwargs) or ""
            except BaseException as exc:
                RESULTS[number] = (title, False, f"{type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}")
                raise
            RESULTS[number] = (title, True, f"{detail} [{time.perf_counter() - t0:.1f}s]".strip())
        return run
    return wrap
