"""PASS/FAIL bookkeeping for the acceptance suite."""

import time
from contextlib import contextmanager

import pytest

RESULTS = []


def record(name, status, detail=""):
    line = f"{status:<4} {name}" + (f" ({detail})" if detail else "")
    RESULTS.append(line)
    print(line)


@contextmanager
def criterion(name):
    """Run one criterion; the body may put a summary into ``info["detail"]``."""
    info = {"detail": ""}
    start = time.perf_counter()
    try:
        yield info
    except pytest.skip.Exception as exc:
        record(name, "SKIP", str(exc.msg))
        raise
    except BaseException as exc:
        msg = str(exc).strip().splitlines()
        record(name, "FAIL", f"{type(exc).__name__}: {msg[0] if msg else ''}")
        raise
    else:
        elapsed = time.perf_counter() - start
        detail = info["detail"]
        record(name, "PASS", f"{detail}; {elapsed:.1f} s" if detail else f"{elapsed:.1f} s")
