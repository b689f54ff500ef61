import numpy as np
import pytest

from macroforecast import data as D


def simulate_var(N, T, seed=0, rho=0.5, cross=0.05, noise=1.0):
    rng = np.random.default_rng(seed)
    A = rho * np.eye(N) + cross * rng.standard_normal((N, N))
    y = np.zeros((T, N))
    for t in range(1, T):
        y[t] = 0.1 + y[t - 1] @ A.T + noise * rng.standard_normal(N)
    return y


def make_panel(values, names=None, start="1959-01", tcodes=None):
    values = np.asarray(values, dtype=float)
    T, N = values.shape
    names = names or [f"V{j}" for j in range(N)]
    dates = np.arange(D.month(start), D.month(start) + T, dtype="datetime64[M]")
    return D.TimeSeriesPanel(dates, names, values, tcodes or [5] * N)


@pytest.fixture
def small_panel():
    """Transformed-looking 4-variable panel covering 1959-01..1987-12."""
    T = (1987 - 1959 + 1) * 12
    names = list(D.MEDIUM.members[:4])
    return make_panel(simulate_var(4, T, seed=1), names)


@pytest.fixture
def write_csv(tmp_path):
    def _write(name, text):
        p = tmp_path / name
        p.write_text(text, encoding="utf-8")
        return p

    return _write
