import numpy as np
import pytest

from hypgnn import autodiff as ad

FD_STEP = 1e-5
REL_TOL = 1e-4


def central_diff(fn, x, step=FD_STEP):
    """Central finite differences of a scalar function of one array."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + step
        hi = fn(x.copy())
        x[i] = orig - step
        lo = fn(x.copy())
        x[i] = orig
        grad[i] = (hi - lo) / (2 * step)
    return grad


def rel_error(analytic, numeric):
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    return np.abs(analytic - numeric) / (np.abs(analytic) + 1e-8)


def check_grad(build, x, tol=REL_TOL):
    """Compare autodiff and central differences of ``build(Tensor) -> scalar Tensor``."""
    t = ad.Tensor(np.array(x, dtype=np.float64), requires_grad=True)
    ad.backward(build(t))
    numeric = central_diff(lambda v: build(ad.Tensor(v)).item(), x)
    err = rel_error(t.grad, numeric)
    assert err.max() < tol, f"max rel err {err.max():.3g}\nanalytic {t.grad}\nnumeric {numeric}"
    return err.max()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion and assert on it."""
    def record(name, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  [{detail}]" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
