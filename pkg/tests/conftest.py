import sys

import numpy as np
import pytest

from stsfa.panel import PanelDataset


def make_panel(rng, n=8, t=4, p=2, sigma_v=0.3, sigma_u=0.5, decay=None, u_scale=None):
    """Random production panel with an intercept and p-1 regressors."""
    X = np.ones((n, t, p))
    X[:, :, 1:] = rng.normal(size=(n, t, p - 1))
    beta = np.linspace(1.0, 0.5, p)
    u = np.abs(rng.normal(0.0, sigma_u, size=n))
    if u_scale is not None:
        u = u * u_scale
    h = np.ones(t) if decay is None else decay
    y = X @ beta + rng.normal(0.0, sigma_v, size=(n, t)) - np.outer(u, h)
    names = ("(Intercept)",) + tuple(f"x{j}" for j in range(1, p))
    return PanelDataset(tuple(f"u{i}" for i in range(n)), tuple(range(1, t + 1)), y, X, names)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
