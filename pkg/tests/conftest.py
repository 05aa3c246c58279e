import numpy as np
import pytest

from randers_src import build

_ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """``record(n, ok, detail)`` logs one acceptance criterion for the summary block."""
    def record(n, ok, detail=""):
        # parametrized criteria accumulate: all parts must pass
        if n in _ACCEPTANCE:
            prev_ok, prev = _ACCEPTANCE[n]
            ok, detail = prev_ok and ok, f"{prev} | {detail}"
        _ACCEPTANCE[n] = (bool(ok), detail)
        print(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_MODELS = {}


def model(name, **params):
    """Cached model build; models are immutable."""
    key = (name, tuple(sorted(params.items())))
    if key not in _MODELS:
        _MODELS[key] = build({"name": name, "params": params})
    return _MODELS[key]


def bl_sphere_samples(rng, n, radius, theta_margin=0.2):
    """Random points on ``r = radius`` with random (unprojected) directions and u-velocities."""
    X = np.column_stack([np.full(n, radius), rng.uniform(theta_margin, np.pi - theta_margin, n),
                         rng.uniform(0, 2 * np.pi, n)])
    return X, rng.normal(size=(n, 3)), rng.uniform(0.0, 2.0, n)
