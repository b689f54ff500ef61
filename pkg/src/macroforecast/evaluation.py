"""Forecast evaluation: relative RMSFE, Diebold-Mariano tests, distribution
summaries, persistence splits and CSV reports."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import data as D
from .errors import ConfigurationError, DegenerateStatisticError, ValidationError
from .numerics import partial_autocorr_lag1, two_sided_normal_pvalue

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvalWindow:
    """Target-date window ``[start, end]`` with optional excluded months.

    ``exclude_on`` decides whether exclusions match the forecast origin
    (default) or the target date.
    """

    label: str
    start: np.datetime64
    end: np.datetime64
    excluded: tuple = ()
    exclude_on: str = "origin"

    def __post_init__(self):
        object.__setattr__(self, "start", D.month(self.start))
        object.__setattr__(self, "end", D.month(self.end))
        object.__setattr__(self, "excluded", tuple(D.month(m) for m in self.excluded))
        if not self.start < self.end:
            raise ValidationError(f"window {self.label}: start must precede end")
        if self.exclude_on not in ("origin", "target"):
            raise ValidationError("exclude_on must be 'origin' or 'target'")
        # an origin can precede the first target by up to the horizon, so only
        # the upper bound is checked for origin-keyed exclusions
        for m in self.excluded:
            if m > self.end or (self.exclude_on == "target" and m < self.start):
                raise ValidationError(f"window {self.label}: exclusion {D.iso(m)} outside range")

    def mask(self, origins: np.ndarray, horizon: int) -> np.ndarray:
        origins = np.asarray(origins, dtype="datetime64[M]")
        targets = origins + np.timedelta64(int(horizon), "M")
        keep = (targets >= self.start) & (targets <= self.end)
        if self.excluded:
            keyed = origins if self.exclude_on == "origin" else targets
            keep &= ~np.isin(keyed, np.array(self.excluded, dtype="datetime64[M]"))
        return keep

    def with_exclusions(self, months: Iterable, exclude_on: str | None = None) -> "EvalWindow":
        return EvalWindow(self.label, self.start, self.end, tuple(self.excluded) + tuple(months),
                          exclude_on or self.exclude_on)


COVID_ONSET = tuple(D.month_range("2020-03", "2020-06"))
PRE_COVID = EvalWindow("pre_covid", "1985-01", "2019-12")
COVID = EvalWindow("covid", "2020-01", "2022-12", COVID_ONSET)
FULL_SAMPLE = EvalWindow("full", "1985-01", "2022-12", COVID_ONSET)
WINDOWS = {w.label: w for w in (PRE_COVID, COVID, FULL_SAMPLE)}


# --- statistics -------------------------------------------------------------


def _pair(e_model, e_bmk):
    a = np.asarray(e_model, dtype=float).ravel()
    b = np.asarray(e_bmk, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValidationError(f"error series not aligned: {a.size} vs {b.size}")
    if a.size == 0:
        raise ValidationError("empty error series")
    return a, b


def rmsfe_ratio(e_model, e_bmk) -> float:
    """sqrt(sum e_model^2 / sum e_bmk^2) over aligned errors."""
    a, b = _pair(e_model, e_bmk)
    den = float(b @ b)
    if den == 0.0:
        raise DegenerateStatisticError("benchmark has zero squared error")
    return math.sqrt(float(a @ a) / den)


def diebold_mariano(e_model, e_bmk, h: int) -> tuple[float, float]:
    """Small-sample adjusted DM test on the squared-error differential.

    The long-run variance uses a rectangular kernel with h - 1 lags and
    autocovariances scaled by 1/T. A nonpositive long-run variance (possible
    with the rectangular kernel) falls back to the lag-0 variance.
    Positive statistics mean the model has larger losses.
    """
    a, b = _pair(e_model, e_bmk)
    h = int(h)
    if h < 1:
        raise ValidationError("horizon must be >= 1")
    d = a * a - b * b
    T = d.size
    if T < h + 2:
        raise DegenerateStatisticError(f"DM test needs at least h + 2 = {h + 2} observations, got {T}")
    dbar = d.sum() / T
    u = d - dbar
    gamma0 = float(u @ u) / T
    if gamma0 == 0.0:
        raise DegenerateStatisticError("loss differential has zero variance")
    V = gamma0 + 2.0 * sum(float(u[l:] @ u[:-l]) / T for l in range(1, h))
    if V <= 0.0:
        log.info("DM long-run variance %.3g <= 0 at h=%d; using lag-0 variance", V, h)
        V = gamma0
    adj = math.sqrt((T + 1 - 2 * h + h * (h - 1) / T) / T)
    stat = adj * dbar / math.sqrt(V / T)
    return float(stat), two_sided_normal_pvalue(stat)


def stars(p_value) -> int:
    """3 if p < 0.01, 2 if p < 0.05, 1 if p < 0.10, else 0 (also for undefined p)."""
    if p_value is None or not np.isfinite(p_value):
        return 0
    return 3 if p_value < 0.01 else 2 if p_value < 0.05 else 1 if p_value < 0.10 else 0


@dataclass(frozen=True)
class DistributionSummary:
    n: int
    median: float
    std: float
    min: float
    max: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    outliers: tuple

    @property
    def has_outliers(self) -> bool:
        return len(self.outliers) > 0


def summarize_distribution(values) -> DistributionSummary:
    """Box-plot statistics with the 1.5 IQR outlier rule.

    Quartiles use linear interpolation. The standard deviation uses ddof=1
    (0 for a single value). Min and max include outliers.
    """
    x = np.asarray(values, dtype=float).ravel()
    if x.size == 0:
        raise ValidationError("cannot summarize an empty set of cells")
    q1, med, q3 = np.percentile(x, [25, 50, 75])
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = x[(x >= lo_fence) & (x <= hi_fence)]
    out = tuple(float(v) for v in np.sort(x[(x < lo_fence) | (x > hi_fence)]))
    return DistributionSummary(
        n=int(x.size),
        median=float(med),
        std=float(np.std(x, ddof=1)) if x.size > 1 else 0.0,
        min=float(x.min()),
        max=float(x.max()),
        q1=float(q1),
        q3=float(q3),
        whisker_low=float(inside.min()),
        whisker_high=float(inside.max()),
        outliers=out,
    )


def flag_outliers(summary: DistributionSummary, max_ratio: float = 2.0) -> bool:
    """True if the set has IQR-rule outliers or any ratio above ``max_ratio``."""
    return summary.has_outliers or summary.max > max_ratio


@dataclass
class PersistenceSplit:
    low: list[str]
    high: list[str]
    pacf: dict[str, float]
    undefined: list[str] = field(default_factory=list)

    def groups(self) -> dict[str, list[str]]:
        return {"low_persistence": list(self.low), "high_persistence": list(self.high)}


def persistence_split(panel: D.TimeSeriesPanel, threshold: float = 0.9, window: EvalWindow | None = None) -> PersistenceSplit:
    """Partition variables by lag-one partial autocorrelation.

    Values <= ``threshold`` go to the low group, values above it to the high
    group. A variable whose statistic is undefined is put in the low group.
    """
    if window is not None:
        lo = max(window.start, panel.start)
        hi = min(window.end, panel.end)
        panel = D.estimation_window(panel, lo, hi)
    low, high, undefined, pacf = [], [], [], {}
    for j, name in enumerate(panel.names):
        try:
            r = partial_autocorr_lag1(panel.values[:, j])
        except DegenerateStatisticError as exc:
            log.warning("persistence undefined for %s (%s); assigned to low group", name, exc)
            undefined.append(name)
            low.append(name)
            pacf[name] = float("nan")
            continue
        pacf[name] = r
        (high if r > threshold else low).append(name)
    return PersistenceSplit(low, high, pacf, undefined)


# --- store-level evaluation -------------------------------------------------


@dataclass(frozen=True)
class ErrorSeries:
    origins: np.ndarray
    forecasts: np.ndarray
    actuals: np.ndarray

    @property
    def errors(self) -> np.ndarray:
        return self.actuals - self.forecasts


@dataclass(frozen=True)
class EvalCell:
    model: str
    variable: str
    horizon: int
    rmsfe_ratio: float
    dm_stat: float
    p_value: float
    stars: int
    n_obs: int
    window: str = ""

    def __post_init__(self):
        if not (np.isfinite(self.rmsfe_ratio) and self.rmsfe_ratio >= 0):
            raise ValidationError(f"invalid ratio for {self.model}/{self.variable}/h={self.horizon}")
        if self.stars != stars(self.p_value):
            raise ValidationError("stars inconsistent with p-value")


def _forecast_table(records, include_out_of_plan=False):
    """{(model, variable, horizon): (origins, values)} sorted by origin."""
    groups: dict[tuple, list] = {}
    for r in records:
        if r.out_of_plan and not include_out_of_plan:
            continue
        groups.setdefault((r.model, r.variable, r.horizon), []).append((r.origin, r.value))
    out = {}
    for key, rows in groups.items():
        rows.sort(key=lambda t: t[0])
        out[key] = (np.array([o for o, _ in rows], dtype="datetime64[M]"), np.array([v for _, v in rows]))
    return out


def _actuals(panel: D.TimeSeriesPanel, variable: str, targets: np.ndarray) -> np.ndarray:
    col = panel.column(variable)
    idx = (targets - panel.start).astype(int)
    out = np.full(targets.size, np.nan)
    ok = (idx >= 0) & (idx < col.size)
    out[ok] = col[idx[ok]]
    return out


def error_series(table, panel, model, variable, horizon, window: EvalWindow) -> ErrorSeries:
    origins, values = table.get((model, variable, horizon), (np.array([], "datetime64[M]"), np.array([])))
    keep = window.mask(origins, horizon)
    origins, values = origins[keep], values[keep]
    act = _actuals(panel, variable, origins + np.timedelta64(int(horizon), "M"))
    ok = ~np.isnan(act)
    return ErrorSeries(origins[ok], values[ok], act[ok])


def _align(a: ErrorSeries, b: ErrorSeries):
    common, ia, ib = np.intersect1d(a.origins, b.origins, return_indices=True)
    return common, a.errors[ia], b.errors[ib]


def evaluate_cell(table, panel, model, variable, horizon, window, benchmark, diagnostics=None) -> EvalCell | None:
    em = error_series(table, panel, model, variable, horizon, window)
    eb = error_series(table, panel, benchmark, variable, horizon, window)
    _, a, b = _align(em, eb)
    base = {"model": model, "variable": variable, "horizon": horizon, "window": window.label}
    if a.size == 0:
        return None
    try:
        ratio = rmsfe_ratio(a, b)
    except DegenerateStatisticError as exc:
        if diagnostics is not None:
            diagnostics.append({**base, "issue": "ratio", "error": str(exc)})
        return None
    try:
        stat, p = diebold_mariano(a, b, horizon)
    except DegenerateStatisticError as exc:
        stat, p = float("nan"), float("nan")
        if diagnostics is not None:
            diagnostics.append({**base, "issue": "dm", "error": str(exc)})
    return EvalCell(model, variable, int(horizon), ratio, stat, p, stars(p), int(a.size), window.label)


@dataclass
class EvalReport:
    cells: list[EvalCell]
    summaries: dict
    diagnostics: list[dict]
    files: list[Path] = field(default_factory=list)

    def cell(self, model, variable, horizon, window=None) -> EvalCell:
        for c in self.cells:
            if c.model == model and c.variable == variable and c.horizon == horizon and (window is None or c.window == window):
                return c
        raise KeyError((model, variable, horizon, window))


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def _fmt(x, digits=3):
    return "" if x is None or not np.isfinite(x) else f"{x:.{digits}f}"


def build_report(
    records,
    panel: D.TimeSeriesPanel,
    windows: Sequence[EvalWindow] = (PRE_COVID,),
    out_dir=None,
    benchmark: str = "ar1",
    groupings: Mapping[str, Sequence[str]] | None = None,
    starred_horizons: Sequence[int] = (1, 3),
    include_out_of_plan: bool = False,
    outlier_max_ratio: float = 2.0,
    write_paths: bool = True,
) -> EvalReport:
    """Evaluate every (model, variable, horizon) against ``benchmark``.

    ``records`` is any iterable of forecast records (e.g. a ForecastStore)
    and ``panel`` the transformed data used as actuals. With ``out_dir`` the
    report is written as CSV files plus ``diagnostics.jsonl``.
    """
    table = _forecast_table(records, include_out_of_plan)
    models = sorted({k[0] for k in table})
    if benchmark not in models:
        raise ConfigurationError(f"benchmark model {benchmark!r} not found in store (models: {models})")
    others = [m for m in models if m != benchmark]
    models = [benchmark] + others
    variables = sorted({k[1] for k in table if k[1] in panel.names})
    unknown = sorted({k[1] for k in table} - set(panel.names))
    if unknown:
        log.warning("no actuals for %s; skipped", unknown)
    horizons = sorted({k[2] for k in table})
    groupings = {"all": variables} if groupings is None else dict(groupings)

    cells, diagnostics, summaries, files = [], [], {}, []
    for w in windows:
        for m in models:
            for v in variables:
                for h in horizons:
                    c = evaluate_cell(table, panel, m, v, h, w, benchmark, diagnostics)
                    if c is not None:
                        cells.append(c)
        for g, members in groupings.items():
            members = set(members)
            for m in models:
                for h in horizons:
                    ratios = [c.rmsfe_ratio for c in cells
                              if c.window == w.label and c.model == m and c.horizon == h and c.variable in members]
                    if ratios:
                        summaries[(w.label, g, m, h)] = summarize_distribution(ratios)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files += _write_files(out, windows, models, variables, horizons, cells, summaries,
                              table, panel, starred_horizons, outlier_max_ratio, write_paths)
        diag = out / "diagnostics.jsonl"
        with open(diag, "w", encoding="utf-8") as fh:
            for d in diagnostics:
                fh.write(json.dumps(d) + "\n")
        files.append(diag)
    return EvalReport(cells, summaries, diagnostics, files)


def _write_files(out, windows, models, variables, horizons, cells, summaries, table, panel,
                 starred_horizons, outlier_max_ratio, write_paths):
    files = []
    by_key = {(c.window, c.model, c.variable, c.horizon): c for c in cells}
    for w in windows:
        lab = w.label
        rows = [
            [g, m, h, s.n, s.median, s.std, s.min, s.max, s.q1, s.q3, s.whisker_low, s.whisker_high,
             len(s.outliers), int(flag_outliers(s, outlier_max_ratio))]
            for (wl, g, m, h), s in summaries.items() if wl == lab
        ]
        files.append(_write_csv(out / f"{lab}_summary.csv",
                                ["group", "model", "horizon", "n_variables", "median", "std", "min", "max",
                                 "q1", "q3", "whisker_low", "whisker_high", "n_outliers", "outlier_flag"], rows))
        files.append(_write_csv(
            out / f"{lab}_cells.csv",
            ["model", "variable", "horizon", "rmsfe_ratio", "dm_stat", "p_value", "stars", "n_obs"],
            [[c.model, c.variable, c.horizon, c.rmsfe_ratio, c.dm_stat, c.p_value, c.stars, c.n_obs]
             for c in cells if c.window == lab],
        ))
        for h in starred_horizons:
            if h not in horizons:
                continue
            rows = []
            for v in variables:
                row = [v]
                for m in models[1:]:
                    c = by_key.get((lab, m, v, h))
                    row.append("" if c is None else _fmt(c.rmsfe_ratio) + "*" * c.stars)
                rows.append(row)
            files.append(_write_csv(out / f"{lab}_starred_h{h}.csv", ["variable"] + models[1:], rows))
        for h in horizons:
            rows = [[c.model, c.variable, c.rmsfe_ratio] for c in cells if c.window == lab and c.horizon == h]
            files.append(_write_csv(out / f"{lab}_boxplot_h{h}.csv", ["model", "variable", "rmsfe_ratio"], rows))
        if write_paths:
            rows = []
            for m in models:
                for v in variables:
                    for h in horizons:
                        es = error_series(table, panel, m, v, h, w)
                        tg = es.origins + np.timedelta64(int(h), "M")
                        rows += [[m, v, h, D.iso(o), D.iso(t), f, a]
                                 for o, t, f, a in zip(es.origins, tg, es.forecasts, es.actuals)]
            files.append(_write_csv(out / f"{lab}_paths.csv",
                                    ["model", "variable", "horizon", "origin", "target", "forecast", "actual"], rows))
    return files


def cells_to_frame(cells: Sequence[EvalCell]):
    import pandas as pd

    return pd.DataFrame([asdict(c) for c in cells])
