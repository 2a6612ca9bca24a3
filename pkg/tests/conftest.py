import numpy as np
import pytest
import sympy as sp

from slipfsi.config import SimConfig


def sym_eval(exprs, a, b, variables):
    """Evaluate an array of sympy expressions on numpy arrays a, b."""
    exprs = np.array(exprs, dtype=object)
    out = np.empty(exprs.shape + np.shape(a))
    for idx in np.ndindex(exprs.shape):
        f = sp.lambdify(variables, exprs[idx], "numpy")
        out[idx] = np.broadcast_to(f(a, b), np.shape(a))
    return out


def l2(grid, e):
    e = np.asarray(e)
    if e.ndim == 3:
        e = np.sum(e**2, axis=0)
    else:
        e = e**2
    return float(np.sqrt(grid.integrate(e)))


def slope(hs, errs):
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])


@pytest.fixture
def small_cfg():
    return SimConfig(n_r=17, n_theta=32, t_end=0.1)


ACCEPTANCE = []


def record(criterion, name, ok, detail=""):
    """Log one acceptance line; printed in the terminal summary."""
    line = f"criterion {criterion:2d} {name:28s} {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
