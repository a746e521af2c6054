"""One pass/fail line per acceptance criterion, printed at the end of the run."""

from __future__ import annotations

import time
from contextlib import contextmanager

LINES: list[str] = []


@contextmanager
def criterion(name: str, budget_s: float):
    """Record ``PASS``/``FAIL`` for ``name``; a blown time budget is a failure."""
    start = time.perf_counter()
    details: dict = {}
    try:
        yield details
    except BaseException as err:
        elapsed = time.perf_counter() - start
        LINES.append(f"FAIL  {name}  ({elapsed:.1f}s) {_fmt(details)} :: {type(err).__name__}: "
                     f"{str(err).splitlines()[0] if str(err) else ''}")
        print(LINES[-1])
        raise
    elapsed = time.perf_counter() - start
    ok = elapsed <= budget_s
    LINES.append(f"{'PASS' if ok else 'FAIL'}  {name}  ({elapsed:.1f}s / {budget_s:g}s) "
                 f"{_fmt(details)}")
    print(LINES[-1])
    assert ok, f"{name} took {elapsed:.1f}s, budget {budget_s}s"


def _fmt(details: dict) -> str:
    return " ".join(f"{k}={v}" for k, v in details.items())
