"""Recursive pseudo out-of-sample forecasting.

At every monthly origin each model is estimated on an expanding window that
ends at the origin and emits point forecasts for horizons 1..H. Forecasts
live in a :class:`ForecastStore`, an append-only CSV store that also records
which (model, origin) pairs are complete, so interrupted runs can resume.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Protocol, Sequence

import numpy as np

from . import data as D
from .benchmark import ar1_forecast
from .bvar import ConjugateBVAR, ConjugateHyper, HyperSearch, phi_star_from_tcodes
from .bvar_asym import AsymmetricBVAR
from .errors import ConflictError, MacroForecastError, RangeError, SchemaError, ValidationError
from .factor import FactorModel
from .numerics import RngStream, em_balance

log = logging.getLogger(__name__)

EXCHANGE_COLUMNS = ["model", "variable", "origin", "horizon", "value"]


@dataclass(frozen=True)
class ForecastRecord:
    model: str
    variable: str
    origin: np.datetime64
    horizon: int
    value: float
    out_of_plan: bool = False

    def __post_init__(self):
        object.__setattr__(self, "origin", D.month(self.origin))
        object.__setattr__(self, "horizon", int(self.horizon))
        object.__setattr__(self, "value", float(self.value))
        if self.horizon < 1:
            raise ValidationError(f"horizon must be positive, got {self.horizon}")
        if not math.isfinite(self.value):
            raise ValidationError(f"non-finite forecast for {self.key}")

    @property
    def key(self) -> tuple:
        return (self.model, self.variable, str(self.origin), self.horizon)

    @property
    def target(self) -> np.datetime64:
        return self.origin + np.timedelta64(self.horizon, "M")


@dataclass
class ExperimentPlan:
    models: Sequence[str]
    variables: Sequence[str] | str = "medium"
    first_origin: str = "1984-12"
    last_origin: str = "2022-12"
    estimation_start: str = "1960-01"
    max_horizon: int = 12
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.variables, (str, D.VariableSet)):
            self.variables = list(D.variable_set(self.variables).members)
        self.models = list(self.models)
        if self.max_horizon < 1:
            raise ValidationError("max_horizon must be >= 1")
        if D.month(self.first_origin) > D.month(self.last_origin):
            raise ValidationError("first_origin must not be after last_origin")
        if D.month(self.estimation_start) > D.month(self.first_origin):
            raise ValidationError("estimation_start must not be after first_origin")

    @property
    def horizons(self) -> range:
        return range(1, self.max_horizon + 1)

    def origins(self) -> np.ndarray:
        return D.month_range(self.first_origin, self.last_origin)

    def expected_records(self) -> int:
        return len(self.models) * len(self.variables) * len(self.origins()) * self.max_horizon

    def to_dict(self) -> dict:
        return {
            "models": list(self.models),
            "variables": list(self.variables),
            "first_origin": str(D.month(self.first_origin)),
            "last_origin": str(D.month(self.last_origin)),
            "estimation_start": str(D.month(self.estimation_start)),
            "max_horizon": self.max_horizon,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, cfg: Mapping) -> "ExperimentPlan":
        known = {"models", "variables", "first_origin", "last_origin", "estimation_start", "max_horizon", "seed"}
        extra = set(cfg) - known
        if extra:
            raise SchemaError(f"unknown plan keys: {sorted(extra)}")
        return cls(**cfg)


# --- models -----------------------------------------------------------------


class Forecaster(Protocol):
    def forecast(self, window: D.TimeSeriesPanel, H: int, rng: np.random.Generator, origin_index: int) -> np.ndarray:
        """Point forecasts (H x N) for every variable in ``window``."""


def complete_window(window: D.TimeSeriesPanel) -> D.TimeSeriesPanel:
    """Drop leading rows with any gap, then EM-fill whatever is still missing."""
    vals = window.values
    miss_rows = np.isnan(vals).any(axis=1)
    first = int(np.argmin(miss_rows)) if not miss_rows.all() else len(miss_rows)
    if first == len(miss_rows):
        raise ValidationError("window has no complete row")
    vals = vals[first:]
    if np.isnan(vals).any():
        vals = em_balance(vals, k=1)
    return D.TimeSeriesPanel(window.dates[first:], window.names, vals, window.tcodes)


class AR1Forecaster:
    def forecast(self, window, H, rng=None, origin_index=0):
        return np.column_stack([ar1_forecast(window.values[:, j], H) for j in range(window.shape[1])])


@dataclass
class _ScheduledHyper:
    """Re-optimize hyperparameters every ``refresh_every`` origins.

    The hyperparameters used at origin index k are those optimized on the
    window ending at origin k - k % refresh_every, so results do not depend on
    the order in which origins are processed. refresh_every = 1 re-optimizes
    at every origin; 0 optimizes once, at the first origin.
    """

    refresh_every: int = 12
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    @staticmethod
    def cache_key(window: D.TimeSeriesPanel) -> str:
        return window_digest(window)

    def refresh_index(self, origin_index: int) -> int:
        if self.refresh_every <= 0:
            return 0
        return origin_index - origin_index % self.refresh_every


@dataclass
class ConjugateBVARForecaster(_ScheduledHyper):
    p: int = 6
    n_draws: int = 1000
    search: HyperSearch = field(default_factory=HyperSearch)
    hyper: ConjugateHyper | None = None

    def forecast(self, window, H, rng, origin_index=0, refresh_window=None):
        window = complete_window(window)
        model = ConjugateBVAR(p=self.p, n_draws=self.n_draws, search=self.search)
        phi_star = phi_star_from_tcodes(window.tcodes)
        hyper = self.hyper
        if hyper is None:
            src = window if refresh_window is None else complete_window(refresh_window)
            key = self.cache_key(src)
            if key not in self._cache:
                self._cache[key] = ConjugateBVAR(p=self.p, search=self.search).fit(src, phi_star).hyper
            hyper = self._cache[key]
        model.fit(window, phi_star, hyper=hyper)
        return model.forecast(H, rng)


@dataclass
class AsymmetricBVARForecaster(_ScheduledHyper):
    p: int = 6
    n_draws: int = 1000
    search: HyperSearch = field(default_factory=HyperSearch)

    def forecast(self, window, H, rng, origin_index=0, refresh_window=None):
        window = complete_window(window)
        src = window if refresh_window is None else complete_window(refresh_window)
        key = self.cache_key(src)
        if key not in self._cache:
            self._cache[key] = AsymmetricBVAR(p=self.p, search=self.search).fit(src, src.tcodes).hyper
        model = AsymmetricBVAR(p=self.p, n_draws=self.n_draws, search=self.search)
        model.fit(window, window.tcodes, hyper=self._cache[key])
        return model.forecast(H, rng)


@dataclass
class FactorForecaster:
    q_f_max: int = 3
    q_y_max: int = 6

    def forecast(self, window, H, rng=None, origin_index=0):
        return FactorModel(self.q_f_max, self.q_y_max).forecast_window(window, H)


def default_registry(p: int = 6, n_draws: int = 1000, refresh_every: int = 12) -> dict[str, Forecaster]:
    """Model ids: ``ar1`` (benchmark), ``bvar_conj`` (v.1), ``bvar_asym`` (v.2), ``factor``."""
    return {
        "ar1": AR1Forecaster(),
        "bvar_conj": ConjugateBVARForecaster(refresh_every=refresh_every, p=p, n_draws=n_draws),
        "bvar_asym": AsymmetricBVARForecaster(refresh_every=refresh_every, p=p, n_draws=n_draws),
        "factor": FactorForecaster(),
    }


# --- store ------------------------------------------------------------------


def window_digest(window: D.TimeSeriesPanel) -> str:
    h = hashlib.sha256()
    h.update("|".join(window.names).encode())
    h.update(np.ascontiguousarray(window.dates.astype("int64")).tobytes())
    h.update(np.ascontiguousarray(window.values).tobytes())
    return h.hexdigest()[:32]


class ForecastStore:
    """Forecast records keyed by (model, variable, origin, horizon).

    With a directory, every addition is appended to ``forecasts.csv`` and
    completed (model, origin) pairs to ``index.csv``; failures go to
    ``gaps.jsonl``. Opening an existing directory reloads all three.
    """

    def __init__(self, directory=None):
        self.records: dict[tuple, ForecastRecord] = {}
        self.index: dict[tuple, str] = {}
        self.gaps: list[dict] = []
        self.directory = Path(directory) if directory is not None else None
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)
            self._load()

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records.values())

    @property
    def models(self) -> list[str]:
        return sorted({r.model for r in self.records.values()})

    def _path(self, name):
        return self.directory / name

    def _load(self):
        fc = self._path("forecasts.csv")
        if fc.exists():
            for rec in read_exchange(fc, extra_columns=("out_of_plan",)):
                self.records[rec.key] = rec
        idx = self._path("index.csv")
        if idx.exists():
            with open(idx, newline="", encoding="utf-8") as fh:
                for row in csv.DictReader(fh):
                    self.index[(row["model"], row["origin"])] = row["digest"]
        gp = self._path("gaps.jsonl")
        if gp.exists():
            self.gaps = [json.loads(line) for line in gp.read_text(encoding="utf-8").splitlines() if line]

    def add(self, records: Iterable[ForecastRecord]) -> int:
        records = list(records)
        seen, dup = set(), []
        for r in records:
            if r.key in self.records or r.key in seen:
                dup.append(r.key)
            seen.add(r.key)
        if dup:
            raise ConflictError(f"{len(dup)} duplicate forecast keys, e.g. {dup[:3]}", dup)
        for r in records:
            self.records[r.key] = r
        if self.directory is not None and records:
            path = self._path("forecasts.csv")
            new = not path.exists()
            with open(path, "a", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                if new:
                    w.writerow(EXCHANGE_COLUMNS + ["out_of_plan"])
                for r in records:
                    w.writerow([r.model, r.variable, D.iso(r.origin), r.horizon, repr(r.value), int(r.out_of_plan)])
        return len(records)

    def mark_done(self, model: str, origin, digest: str):
        key = (model, str(D.month(origin)))
        self.index[key] = digest
        if self.directory is not None:
            path = self._path("index.csv")
            new = not path.exists()
            with open(path, "a", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                if new:
                    w.writerow(["model", "origin", "digest"])
                w.writerow([model, key[1], digest])

    def is_done(self, model: str, origin) -> bool:
        return (model, str(D.month(origin))) in self.index

    def add_gap(self, model: str, origin, error: str):
        gap = {"model": model, "origin": str(D.month(origin)), "error": error}
        self.gaps.append(gap)
        if self.directory is not None:
            with open(self._path("gaps.jsonl"), "a", encoding="utf-8") as fh:
                fh.write(json.dumps(gap) + "\n")

    def select(self, model=None, variable=None, horizon=None, include_out_of_plan=False) -> list[ForecastRecord]:
        return [
            r
            for r in self.records.values()
            if (model is None or r.model == model)
            and (variable is None or r.variable == variable)
            and (horizon is None or r.horizon == horizon)
            and (include_out_of_plan or not r.out_of_plan)
        ]

    def to_frame(self):
        import pandas as pd

        rows = [
            (r.model, r.variable, D.iso(r.origin), r.horizon, r.value, r.out_of_plan)
            for r in self.records.values()
        ]
        return pd.DataFrame(rows, columns=EXCHANGE_COLUMNS + ["out_of_plan"])


# --- exchange format --------------------------------------------------------


def read_exchange(path, extra_columns: Sequence[str] = ()) -> list[ForecastRecord]:
    """Parse a forecast-exchange CSV (model,variable,origin,horizon,value)."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: missing header row") from None
        expected = EXCHANGE_COLUMNS + [c for c in extra_columns if c in header]
        if header != expected:
            raise SchemaError(f"{path}: header must be exactly {','.join(EXCHANGE_COLUMNS)}, got {','.join(header)}")
        out = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ValidationError(f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}")
            model, variable, origin, horizon, value = (c.strip() for c in row[:5])
            try:
                origin_m = np.datetime64(D.month(np.datetime64(origin, "D")), "M")
            except ValueError:
                raise ValidationError(f"{path}:{line_no}: origin {origin!r} is not an ISO-8601 date") from None
            try:
                h = int(horizon)
            except ValueError:
                raise ValidationError(f"{path}:{line_no}: horizon {horizon!r} is not an integer") from None
            try:
                v = float(value)
            except ValueError:
                raise ValidationError(f"{path}:{line_no}: value {value!r} is not a number") from None
            if not math.isfinite(v):
                raise ValidationError(f"{path}:{line_no}: non-finite value {value!r}")
            if h < 1:
                raise ValidationError(f"{path}:{line_no}: horizon must be a positive integer")
            flag = len(row) > 5 and row[5].strip() in ("1", "true", "True")
            out.append(ForecastRecord(model, variable, origin_m, h, v, flag))
    return out


def write_exchange(records: Iterable[ForecastRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(EXCHANGE_COLUMNS)
        for r in records:
            w.writerow([r.model, r.variable, D.iso(r.origin), r.horizon, repr(r.value)])


def ingest_external_forecasts(path, plan: ExperimentPlan | None = None, store: ForecastStore | None = None) -> list[ForecastRecord]:
    """Load externally produced forecasts (e.g. from a pretrained time-series model).

    Duplicate keys inside the file, or against ``store``, raise ConflictError.
    Records outside the plan's origins or horizons are kept but flagged
    ``out_of_plan``; reports skip them unless asked otherwise.
    """
    records = read_exchange(path)
    seen, dup = set(), []
    for r in records:
        if r.key in seen:
            dup.append(r.key)
        seen.add(r.key)
    if dup:
        raise ConflictError(f"duplicate forecast keys in {path}: {dup}", dup)
    if plan is not None:
        lo, hi = D.month(plan.first_origin), D.month(plan.last_origin)
        records = [
            ForecastRecord(r.model, r.variable, r.origin, r.horizon, r.value,
                           not (lo <= r.origin <= hi and r.horizon <= plan.max_horizon))
            for r in records
        ]
    if store is not None:
        store.add(records)
    return records


# --- driver -----------------------------------------------------------------


def _origin_task(args):
    model_id, model, window, refresh_window, H, seed, origin, origin_index = args
    rng = RngStream.keyed(seed, model_id, str(origin)).generator()
    try:
        if refresh_window is not None:
            fc = model.forecast(window, H, rng, origin_index, refresh_window=refresh_window)
        else:
            fc = model.forecast(window, H, rng, origin_index)
        fc = np.asarray(fc, dtype=float)
        if fc.shape != (H, window.shape[1]):
            raise ValidationError(f"model returned shape {fc.shape}, expected {(H, window.shape[1])}")
        if not np.all(np.isfinite(fc)):
            raise ValidationError("model returned non-finite forecasts")
        return model_id, origin, fc, None
    except (MacroForecastError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        return model_id, origin, None, f"{type(exc).__name__}: {exc}"


def run_experiment(
    plan: ExperimentPlan,
    panel: D.TimeSeriesPanel,
    registry: Mapping[str, Forecaster] | None = None,
    store: ForecastStore | None = None,
    workers: int = 1,
    progress: Callable[[str, np.datetime64], None] | None = None,
) -> ForecastStore:
    """Run every model at every origin of ``plan`` on the (transformed) ``panel``.

    (model, origin) pairs already completed in ``store`` are skipped. A model
    failure at one origin is logged as a gap and the run continues.
    """
    registry = default_registry() if registry is None else registry
    store = ForecastStore() if store is None else store
    missing = [m for m in plan.models if m not in registry]
    if missing:
        raise SchemaError(f"models not in registry: {missing}")
    panel = D.select_set(panel, plan.variables)
    start = D.month(plan.estimation_start)
    last_needed = D.month(plan.last_origin) + np.timedelta64(plan.max_horizon, "M")
    if panel.start > start or panel.end < last_needed:
        raise RangeError(
            f"panel {D.iso(panel.start)}..{D.iso(panel.end)} must cover "
            f"{D.iso(start)}..{D.iso(last_needed)}"
        )
    origins = plan.origins()
    H = plan.max_horizon
    for model_id in plan.models:
        model = registry[model_id]
        refresh = getattr(model, "refresh_index", None)
        tasks = []
        for k, origin in enumerate(origins):
            if store.is_done(model_id, origin):
                continue
            window = D.estimation_window(panel, start, origin)
            refresh_window = None
            if refresh is not None and getattr(model, "hyper", None) is None:
                r_origin = origins[refresh(k)]
                if r_origin != origin:
                    refresh_window = D.estimation_window(panel, start, r_origin)
            tasks.append((model_id, model, window, refresh_window, H, plan.seed, origin, k))
        if not tasks:
            continue
        digests = {t[6]: window_digest(t[2]) for t in tasks}
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_origin_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
        else:
            results = map(_origin_task, tasks)
        for model_id_, origin, fc, err in results:
            if err is not None:
                log.warning("%s failed at %s: %s", model_id_, origin, err)
                store.add_gap(model_id_, origin, err)
                continue
            store.add(
                ForecastRecord(model_id_, name, origin, h, fc[h - 1, j])
                for j, name in enumerate(panel.names)
                for h in range(1, H + 1)
            )
            store.mark_done(model_id_, origin, digests[origin])
            if progress is not None:
                progress(model_id_, origin)
    return store


def audit_no_lookahead(store: ForecastStore, panel: D.TimeSeriesPanel, plan: ExperimentPlan) -> list[tuple]:
    """Recompute the digest of data dated <= origin for each completed pair.

    Returns the (model, origin) pairs whose recorded digest differs, i.e. the
    estimation input was not exactly the pre-origin data.
    """
    panel = D.select_set(panel, plan.variables)
    start = D.month(plan.estimation_start)
    bad = []
    for (model, origin), digest in store.index.items():
        window = D.estimation_window(panel, start, origin)
        if window_digest(window) != digest:
            bad.append((model, origin))
    return bad
