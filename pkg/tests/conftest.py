import numpy as np
import pytest
from hypothesis import settings

import dpinn  # noqa: F401  (enables float64)

# JAX compiles on first call, so per-example deadlines are meaningless.
settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def central_diff(f, x, h):
    """Five-point central first and second differences of scalar f per coordinate.

    Fourth-order accurate, so h can be large enough (1e-3) that rounding
    does not swamp small second derivatives.
    """
    x = np.asarray(x, dtype=float)
    f0 = f(x)
    d1, d2 = np.empty(x.size), np.empty(x.size)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        f1, fm1, f2, fm2 = f(x + e), f(x - e), f(x + 2 * e), f(x - 2 * e)
        d1[i] = (-f2 + 8 * f1 - 8 * fm1 + fm2) / (12 * h)
        d2[i] = (-f2 + 16 * f1 - 30 * f0 + 16 * fm1 - fm2) / (12 * h**2)
    return d1, d2


def fd_gradient(f, x, h):
    x = np.asarray(x, dtype=float)
    g = np.empty(x.size)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance report -----------------------------------------------------------
_REPORT = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_REPORT] = []


@pytest.fixture
def acceptance_report(request):
    """Record one pass/fail line per acceptance criterion."""
    config = request.config

    def record(number, title, ok, detail):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        config.stash[_REPORT].append((number, line))
        tr = config.pluginmanager.get_plugin("terminalreporter")
        if tr is not None:
            tr.write_line("")
            tr.write_line(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_REPORT, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
