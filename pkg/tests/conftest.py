import numpy as np
import pytest


def central_diff(f, arrays, step=1e-5):
    """Central finite differences of scalar ``f(*arrays)`` w.r.t. every array."""
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        flat, gflat = a.reshape(-1), g.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            hi = float(f(*arrays))
            flat[k] = orig - step
            lo = float(f(*arrays))
            flat[k] = orig
            gflat[k] = (hi - lo) / (2 * step)
        grads.append(g)
    return grads


def rel_error(a, b):
    """Max elementwise error relative to the larger gradient scale."""
    a, b = np.asarray(a), np.asarray(b)
    scale = max(np.abs(a).max(), np.abs(b).max(), 1e-8)
    return float(np.abs(a - b).max() / scale)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in RESULTS.values():
        terminalreporter.write_line(line)
