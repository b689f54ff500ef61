"""Scoring forecasts produced elsewhere, e.g. by a pretrained time-series model.

External forecasts arrive as a CSV with the columns
model, variable, origin, horizon, value. They are scored exactly like the
built-in models. Sets whose relative RMSFE distribution has extreme values are
flagged.

    python3 demos/external_forecasts.py
"""

import tempfile
from pathlib import Path

import numpy as np

from macroforecast import data as D
from macroforecast import evaluation as E
from macroforecast import harness as H

rng = np.random.default_rng(3)
names = ["a", "b", "c", "d", "e"]
dates = D.month_range("1970-01", "1995-12")
values = rng.standard_normal((len(dates), len(names))).cumsum(0) * 0.1 + rng.standard_normal((len(dates), 5))
panel = D.TimeSeriesPanel(dates, names, values, [1] * len(names))

# benchmark forecasts from the library, external ones written to a file
plan = H.ExperimentPlan(["ar1"], names, first_origin="1984-12", last_origin="1994-12",
                       estimation_start="1970-01", max_horizon=1)
store = H.run_experiment(plan, panel)

records = []
for r in store:
    actual = panel.column(r.variable)[panel.row_index(r.target)]
    bench_err = actual - r.value
    # a stand-in model: a bit better on most series, badly off on "e"
    factor = 4.0 if r.variable == "e" else 0.9
    records.append(H.ForecastRecord("stand_in", r.variable, r.origin, 1, actual - factor * bench_err))

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "stand_in.csv"
    H.write_exchange(records, path)
    H.ingest_external_forecasts(path, plan=plan, store=store)
    report = E.build_report(store, panel, windows=[E.EvalWindow("w", "1985-01", "1995-01")],
                            out_dir=Path(tmp) / "report")
    print("files:", sorted(p.name for p in (Path(tmp) / "report").iterdir()))

for c in report.cells:
    if c.model == "stand_in":
        print(f"{c.variable}: ratio {c.rmsfe_ratio:.2f}{'*' * c.stars}  DM {c.dm_stat:+.2f}")
s = report.summaries[("w", "all", "stand_in", 1)]
print(f"median {s.median:.2f}, max {s.max:.2f}, IQR outliers {s.outliers}, flagged: {E.flag_outliers(s)}")
