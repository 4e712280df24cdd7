"""Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""
import time
from contextlib import contextmanager

RESULTS: dict[int, str] = {}


@contextmanager
def criterion(number: int, title: str, limit_seconds: float | None = None):
    """Record the outcome of one criterion; ``detail`` is a dict the body may fill in."""
    detail: dict = {}
    t0 = time.perf_counter()
    try:
        yield detail
        elapsed = time.perf_counter() - t0
        if limit_seconds is not None and elapsed > limit_seconds:
            raise AssertionError(f"runtime {elapsed:.1f}s exceeds {limit_seconds:.0f}s")
    except BaseException as exc:
        elapsed = time.perf_counter() - t0
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        RESULTS[number] = f"criterion {number:>2} FAIL  {title} [{elapsed:.1f}s] {_fmt(detail)} :: {msg}"
        raise
    RESULTS[number] = f"criterion {number:>2} PASS  {title} [{elapsed:.1f}s] {_fmt(detail)}"
    print(RESULTS[number])


def _fmt(detail: dict) -> str:
    return " ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in detail.items())
