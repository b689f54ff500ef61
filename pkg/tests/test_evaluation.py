import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from macroforecast import data as D
from macroforecast import evaluation as E
from macroforecast.errors import ConfigurationError, DegenerateStatisticError, ValidationError
from macroforecast.harness import ForecastRecord

from conftest import make_panel

finite = st.floats(-50, 50, allow_nan=False)


def test_rmsfe_examples():
    e = np.array([0.3, -1.2, 0.7])
    assert E.rmsfe_ratio(e, e) == 1.0
    assert E.rmsfe_ratio([1, 1], [2, 2]) == 0.5
    with pytest.raises(DegenerateStatisticError):
        E.rmsfe_ratio([1, 1], [0, 0])
    with pytest.raises(ValidationError):
        E.rmsfe_ratio([1, 1], [1, 1, 1])


def test_dm_hand_case():
    stat, p = E.diebold_mariano(np.sqrt([1, 2, 3, 4, 5.0]), np.zeros(5), 1)
    assert stat == pytest.approx(3 * math.sqrt(2), rel=1e-12)
    assert p == pytest.approx(2.2e-5, rel=0.05)


def test_dm_symmetric_and_degenerate():
    d = np.array([1, -1, 1, -1, 1, -1.0])
    stat, p = E.diebold_mariano(np.sqrt(np.maximum(d, 0)), np.sqrt(np.maximum(-d, 0)), 1)
    assert stat == 0.0 and p == 1.0
    e = np.arange(1.0, 8.0)
    with pytest.raises(DegenerateStatisticError):
        E.diebold_mariano(e, e, 1)
    with pytest.raises(DegenerateStatisticError):
        E.diebold_mariano([1.0, 2.0, 3.0], [0.0, 0.0, 0.0], 2)


def test_dm_long_run_variance_lags():
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal(40), rng.standard_normal(40)
    d = a**2 - b**2
    T, h = d.size, 3
    u = d - d.mean()
    V = sum((1 if l == 0 else 2) * (u[l:] @ u[: T - l]) / T for l in range(h))
    V = V if V > 0 else u @ u / T
    want = math.sqrt((T + 1 - 2 * h + h * (h - 1) / T) / T) * d.mean() / math.sqrt(V / T)
    assert E.diebold_mariano(a, b, h)[0] == pytest.approx(want, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, 20, elements=finite), arrays(np.float64, 20, elements=finite), st.integers(1, 6))
def test_antisymmetry(a, b, h):
    try:
        s1, p1 = E.diebold_mariano(a, b, h)
    except DegenerateStatisticError:
        return
    s2, p2 = E.diebold_mariano(b, a, h)
    assert s2 == -s1 and p1 == p2
    if a @ a > 0 and b @ b > 0:
        assert E.rmsfe_ratio(a, b) * E.rmsfe_ratio(b, a) == pytest.approx(1.0, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1))
def test_star_consistency(p):
    s = E.stars(p)
    assert (s == 3) == (p < 0.01)
    assert (s >= 2) == (p < 0.05)
    assert (s >= 1) == (p < 0.10)


def test_stars_undefined_and_cell_validation():
    assert E.stars(float("nan")) == 0
    with pytest.raises(ValidationError):
        E.EvalCell("m", "v", 1, 1.0, 2.0, 0.001, 1, 10)
    with pytest.raises(ValidationError):
        E.EvalCell("m", "v", 1, float("inf"), 2.0, 0.5, 0, 10)


def test_summaries():
    s = E.summarize_distribution([1, 1, 1])
    assert (s.median, s.std, s.has_outliers) == (1, 0, False)
    s = E.summarize_distribution([0.9, 1.0, 1.1, 5.0])
    assert s.outliers == (5.0,) and s.max == 5.0 and s.whisker_high == 1.1
    assert E.flag_outliers(s)
    assert E.flag_outliers(E.summarize_distribution([2.5]))
    assert not E.flag_outliers(E.summarize_distribution([0.9, 1.0, 1.2]))
    with pytest.raises(ValidationError):
        E.summarize_distribution([])


def test_persistence_split():
    rng = np.random.default_rng(1)
    T = 600
    wn = rng.standard_normal(T)
    rw = np.cumsum(rng.standard_normal(T))
    const = np.ones(T)
    panel = make_panel(np.column_stack([wn, rw, const]), names=["wn", "rw", "flat"])
    split = E.persistence_split(panel)
    assert split.high == ["rw"] and set(split.low) == {"wn", "flat"}
    assert split.undefined == ["flat"]
    assert sorted(split.low + split.high) == sorted(panel.names)


def test_persistence_boundary(monkeypatch):
    monkeypatch.setattr(E, "partial_autocorr_lag1", lambda x: 0.9)
    panel = make_panel(np.random.default_rng(0).standard_normal((20, 1)))
    split = E.persistence_split(panel, threshold=0.9)
    assert split.high == [] and len(split.low) == 1


def test_window_validation_and_monotonicity():
    with pytest.raises(ValidationError):
        E.EvalWindow("x", "2000-01", "1999-01")
    with pytest.raises(ValidationError):
        E.EvalWindow("x", "2000-01", "2001-01", ("2005-01",))
    origins = np.arange(np.datetime64("2019-06"), np.datetime64("2022-12"))
    n = E.COVID.mask(origins, 1).sum()
    plain = E.EvalWindow("c", "2020-01", "2022-12")
    assert plain.mask(origins, 1).sum() - n == 4
    more = E.COVID.with_exclusions(["2021-01"])
    assert more.mask(origins, 1).sum() == n - 1
    by_target = E.EvalWindow("c", "2020-01", "2022-12", E.COVID_ONSET, exclude_on="target")
    m = by_target.mask(origins, 3)
    assert not m[np.isin(origins + 3, np.array(E.COVID_ONSET))].any()


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 35), max_size=8), st.integers(1, 12))
def test_window_exclusions_never_add(offsets, h):
    base = E.EvalWindow("w", "2000-01", "2002-12")
    origins = np.arange(np.datetime64("1999-01"), np.datetime64("2003-01"))
    n = base.mask(origins, h).sum()
    months = [np.datetime64("2000-01") + k for k in offsets]
    assert base.with_exclusions(months).mask(origins, h).sum() <= n


# --- report -----------------------------------------------------------------


def _synthetic(scale=0.5, extra_model=True):
    rng = np.random.default_rng(3)
    dates = D.month_range("1984-01", "1990-12")
    values = rng.standard_normal((len(dates), 3))
    panel = make_panel(values, names=["a", "b", "c"], start="1984-01")
    recs = []
    for o in D.month_range("1984-12", "1989-12"):
        for j, v in enumerate(panel.names):
            for h in (1, 3):
                actual = values[panel.row_index(o + np.timedelta64(h, "M")), j]
                err = rng.standard_normal()
                recs.append(ForecastRecord("ar1", v, o, h, actual - err))
                if extra_model:
                    recs.append(ForecastRecord("bvar", v, o, h, actual - scale * err))
    return panel, recs


def test_report_benchmark_only():
    panel, recs = _synthetic(extra_model=False)
    rep = E.build_report(recs, panel, windows=[E.EvalWindow("w", "1985-01", "1990-12")])
    assert rep.cells and all(c.rmsfe_ratio == 1.0 and c.stars == 0 for c in rep.cells)
    assert len(rep.diagnostics) == len(rep.cells)  # DM undefined for self comparison


def test_report_halved_errors(tmp_path):
    panel, recs = _synthetic(0.5)
    w = E.EvalWindow("w", "1985-01", "1990-12")
    rep = E.build_report(recs, panel, windows=[w], out_dir=tmp_path)
    cells = [c for c in rep.cells if c.model == "bvar"]
    assert len(cells) == 6
    for c in cells:
        assert c.rmsfe_ratio == pytest.approx(0.5, rel=1e-12)
        assert c.stars == 3 and c.dm_stat < 0
        assert c.n_obs == 61
    for name in ["w_summary.csv", "w_cells.csv", "w_starred_h1.csv", "w_starred_h3.csv",
                 "w_boxplot_h1.csv", "w_paths.csv", "diagnostics.jsonl"]:
        assert (tmp_path / name).exists()
    with open(tmp_path / "w_starred_h1.csv", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["variable", "bvar"] and rows[1] == ["a", "0.500***"]
    summary = rep.summaries[("w", "all", "bvar", 1)]
    assert summary.median == pytest.approx(0.5) and summary.n == 3


def test_report_is_reproducible(tmp_path):
    panel, recs = _synthetic(0.7)
    w = [E.EvalWindow("w", "1985-01", "1990-12")]
    E.build_report(recs, panel, windows=w, out_dir=tmp_path / "a")
    E.build_report(list(reversed(recs)), panel, windows=w, out_dir=tmp_path / "b")
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_report_missing_benchmark_and_out_of_plan():
    panel, recs = _synthetic()
    with pytest.raises(ConfigurationError):
        E.build_report(recs, panel, benchmark="rw")
    tagged = [ForecastRecord(r.model, r.variable, r.origin, r.horizon, r.value, out_of_plan=r.model == "bvar")
              for r in recs]
    w = [E.EvalWindow("w", "1985-01", "1990-12")]
    assert {c.model for c in E.build_report(tagged, panel, windows=w).cells} == {"ar1"}
    both = E.build_report(tagged, panel, windows=w, include_out_of_plan=True)
    assert {c.model for c in both.cells} == {"ar1", "bvar"}


def test_actuals_missing_at_end_drop_cells():
    panel, recs = _synthetic()
    late = recs + [ForecastRecord(m, "a", "1990-12", 1, 0.0) for m in ("ar1", "bvar")]
    w = E.EvalWindow("w", "1985-01", "1991-06")
    a = E.build_report(recs, panel, windows=[w]).cell("bvar", "a", 1)
    b = E.build_report(late, panel, windows=[w]).cell("bvar", "a", 1)
    assert a.n_obs == b.n_obs
