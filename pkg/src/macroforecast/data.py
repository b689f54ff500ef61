"""FRED-MD style panel loading, stationarity transforms and variable sets.

A panel holds monthly observations for a set of named series. Missing cells are
stored as NaN; ``TimeSeriesPanel.mask`` exposes them explicitly. Dates are kept
as ``numpy.datetime64`` values at month resolution.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import (
    DomainError,
    LookupFailure,
    ParseError,
    RangeError,
    SchemaError,
    ValidationError,
)

ALLOWED_TCODES = frozenset({1, 2, 4, 5, 6})
LOG_TCODES = frozenset({4, 5, 6})
LEVEL_TCODES = frozenset({1, 4})

# Appendix table of the 120 series: (FRED-MD mnemonic, transform code).
# Blocks are cumulative: medium, then the large additions, then x-large.
_MEDIUM = [
    ("PAYEMS", 5),
    ("INDPRO", 5),
    ("FEDFUNDS", 1),
    ("UNRATE", 1),
    ("RPI", 5),
    ("DPCERA3M086SBEA", 5),
    ("CMRMTSPLx", 5),
    ("CUMFNS", 1),
    ("CES0600000007", 1),
    ("HOUST", 4),
    ("S&P 500", 5),
    ("T1YFFM", 1),
    ("T10YFFM", 1),
    ("BAAFFM", 1),
    ("EXUSUKx", 5),
    ("WPSFD49207", 5),
    ("PPICMM", 5),
    ("PCEPI", 5),
    ("CES0600000008", 6),
]

_LARGE_EXTRA = [
    ("HWI", 1),
    ("HWIURATIO", 1),
    ("CLF16OV", 5),
    ("M1SL", 5),
    ("M2SL", 5),
    ("M2REAL", 5),
    ("S&P div yield", 1),
    ("S&P PE ratio", 5),
    ("TB6MS", 1),
    ("GS1", 1),
    ("GS5", 1),
    ("AAA", 1),
    ("BAA", 1),
    ("OILPRICEx", 5),
    ("INVEST", 5),
]

_XLARGE_EXTRA = [
    ("W875RX1", 5),
    ("RETAILx", 5),
    ("IPFPNSS", 5),
    ("IPFINAL", 5),
    ("IPCONGD", 5),
    ("IPDCONGD", 5),
    ("IPNCONGD", 5),
    ("IPBUSEC", 5),
    ("IPMAT", 5),
    ("IPDMAT", 5),
    ("IPNMAT", 5),
    ("IPMANSICS", 5),
    ("IPB51222S", 5),
    ("IPFUELS", 5),
    ("CE16OV", 5),
    ("UEMPMEAN", 1),
    ("UEMPLT5", 5),
    ("UEMP5TO14", 5),
    ("UEMP15OV", 5),
    ("UEMP15T26", 5),
    ("UEMP27OV", 5),
    ("CLAIMSx", 5),
    ("USGOOD", 5),
    ("CES1021000001", 5),
    ("USCONS", 5),
    ("MANEMP", 5),
    ("DMANEMP", 5),
    ("NDMANEMP", 5),
    ("SRVPRD", 5),
    ("USTPU", 5),
    ("USWTRADE", 5),
    ("USTRADE", 5),
    ("USFIRE", 5),
    ("USGOVT", 5),
    ("AWOTMAN", 1),
    ("AWHMAN", 1),
    ("HOUSTNE", 4),
    ("HOUSTMW", 4),
    ("HOUSTS", 4),
    ("HOUSTW", 4),
    ("PERMIT", 4),
    ("PERMITNE", 4),
    ("PERMITMW", 4),
    ("PERMITS", 4),
    ("PERMITW", 4),
    ("AMDMNOx", 5),
    ("AMDMUOx", 5),
    ("BUSINVx", 5),
    ("ISRATIOx", 1),
    ("BOGMBASE", 5),
    ("TOTRESNS", 5),
    ("BUSLOANS", 5),
    ("REALLN", 5),
    ("NONREVSL", 5),
    ("CONSPI", 1),
    ("CP3Mx", 1),
    ("TB3MS", 1),
    ("GS10", 1),
    ("COMPAPFFx", 1),
    ("TB3SMFFM", 1),
    ("TB6SMFFM", 1),
    ("T5YFFM", 1),
    ("AAAFFM", 1),
    ("EXSZUSx", 5),
    ("EXJPUSx", 5),
    ("EXCAUSx", 5),
    ("WPSFD49502", 5),
    ("WPSID61", 5),
    ("WPSID62", 5),
    ("CPIAUCSL", 5),
    ("CPIAPPSL", 5),
    ("CPITRNSL", 5),
    ("CPIMEDSL", 5),
    ("CUSR0000SAC", 5),
    ("CUSR0000SAD", 5),
    ("CUSR0000SAS", 5),
    ("CPIULFSL", 5),
    ("CUSR0000SA0L2", 5),
    ("CUSR0000SA0L5", 5),
    ("DDURRG3M086SBEA", 5),
    ("DNDGRG3M086SBEA", 5),
    ("DSERRG3M086SBEA", 5),
    ("CES2000000008", 5),
    ("CES3000000008", 5),
    ("DTCOLNVHFNM", 5),
    ("DTCTHFNM", 5),
]

REFERENCE_TCODES: dict[str, int] = dict(_MEDIUM + _LARGE_EXTRA + _XLARGE_EXTRA)


def month(value) -> np.datetime64:
    """Coerce a date-like value (``"1984-12"``, ``date``, ``datetime64``) to a month."""
    if isinstance(value, np.datetime64):
        return value.astype("datetime64[M]")
    if isinstance(value, str):
        value = value.strip()
        try:
            return np.datetime64(value[:7], "M")
        except ValueError:
            return np.datetime64(pd.Timestamp(value).strftime("%Y-%m"), "M")
    return np.datetime64(pd.Timestamp(value).strftime("%Y-%m"), "M")


def iso(m: np.datetime64) -> str:
    """ISO-8601 date string for the first day of month ``m``."""
    return str(np.datetime64(m, "M").astype("datetime64[D]"))


def month_range(start, end) -> np.ndarray:
    start, end = month(start), month(end)
    return np.arange(start, end + 1, dtype="datetime64[M]")


@dataclass(frozen=True)
class VariableSet:
    name: str
    members: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if len(set(self.members)) != len(self.members):
            raise SchemaError(f"variable set {self.name!r} has duplicate members")

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)


MEDIUM = VariableSet("medium", [n for n, _ in _MEDIUM])
LARGE = VariableSet("large", [n for n, _ in _MEDIUM + _LARGE_EXTRA])
XLARGE = VariableSet("xlarge", [n for n, _ in _MEDIUM + _LARGE_EXTRA + _XLARGE_EXTRA])
VARIABLE_SETS = {s.name: s for s in (MEDIUM, LARGE, XLARGE)}


def variable_set(name: str | VariableSet) -> VariableSet:
    if isinstance(name, VariableSet):
        return name
    key = name.lower().replace("-", "")
    if key not in VARIABLE_SETS:
        raise LookupFailure(f"unknown variable set {name!r}; expected one of {sorted(VARIABLE_SETS)}")
    return VARIABLE_SETS[key]


@dataclass(frozen=True, eq=False)
class TimeSeriesPanel:
    """Monthly panel of named series.

    ``values`` is T x N with NaN for missing cells. Instances are treated as
    immutable: the arrays are flagged read-only on construction.
    """

    dates: np.ndarray
    names: tuple[str, ...]
    values: np.ndarray
    tcodes: tuple[int, ...]

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[M]")
        values = np.array(self.values, dtype=float, copy=True)
        names = tuple(str(n) for n in self.names)
        tcodes = tuple(int(c) for c in self.tcodes)
        if values.ndim != 2 or values.shape != (len(dates), len(names)):
            raise SchemaError(
                f"values shape {values.shape} does not match {len(dates)} dates x {len(names)} names"
            )
        if len(tcodes) != len(names):
            raise SchemaError("one transform code per variable is required")
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise SchemaError(f"duplicate variable names: {dup}")
        for n, c in zip(names, tcodes):
            if c not in ALLOWED_TCODES:
                raise ValidationError(f"unknown transform code {c} for variable {n!r}")
        if len(dates) > 1 and np.any(np.diff(dates).astype(int) != 1):
            raise SchemaError("dates must increase by exactly one month")
        dates.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "tcodes", tcodes)

    @property
    def mask(self) -> np.ndarray:
        """Boolean T x N array, True where the cell is missing."""
        return np.isnan(self.values)

    @property
    def shape(self):
        return self.values.shape

    @property
    def start(self) -> np.datetime64:
        return self.dates[0]

    @property
    def end(self) -> np.datetime64:
        return self.dates[-1]

    def column(self, name: str) -> np.ndarray:
        try:
            return self.values[:, self.names.index(name)]
        except ValueError:
            raise LookupFailure(f"variable {name!r} not in panel") from None

    def tcode(self, name: str) -> int:
        return self.tcodes[self.names.index(name)]

    def row_index(self, date) -> int:
        m = month(date)
        idx = int((m - self.dates[0]).astype(int))
        if idx < 0 or idx >= len(self.dates):
            raise RangeError(f"{iso(m)} outside panel range {iso(self.start)}..{iso(self.end)}")
        return idx

    def to_frame(self) -> pd.DataFrame:
        index = pd.PeriodIndex(self.dates.astype(str), freq="M")
        return pd.DataFrame(np.array(self.values), index=index, columns=list(self.names))

    def __eq__(self, other):
        if not isinstance(other, TimeSeriesPanel):
            return NotImplemented
        return (
            self.names == other.names
            and self.tcodes == other.tcodes
            and np.array_equal(self.dates, other.dates)
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    def __repr__(self):
        return (
            f"TimeSeriesPanel(T={len(self.dates)}, N={len(self.names)}, "
            f"{iso(self.start)}..{iso(self.end)})"
        )


@dataclass
class PanelSchema:
    """Layout descriptor for panel CSV files.

    The FRED-MD layout is the default: a header row of names whose first cell
    labels the date column, then a row of transform codes, then data rows.
    """

    date_column: str | None = None  # None: first column
    has_tcode_row: bool = True
    date_format: str | None = None  # None: try common formats
    columns: list[str] | None = None  # keep only these, in this order
    tcode_overrides: dict[str, int] = field(default_factory=dict)
    default_tcode: int | None = None  # used when the file has no code row

    @classmethod
    def fredmd(cls, var_set: str | VariableSet = "xlarge", reference_codes: bool = True) -> "PanelSchema":
        vs = variable_set(var_set)
        overrides = {n: REFERENCE_TCODES[n] for n in vs} if reference_codes else {}
        return cls(columns=list(vs.members), tcode_overrides=overrides)

    @classmethod
    def from_file(cls, path) -> "PanelSchema":
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
        if "variable_set" in cfg:
            base = cls.fredmd(cfg.pop("variable_set"), cfg.pop("reference_codes", True))
            for k, v in cfg.items():
                setattr(base, k, v)
            return base
        return cls(**cfg)


_DATE_FORMATS = ("%m/%d/%Y", "%Y-%m-%d", "%Y-%m", "%Y/%m/%d", "%d/%m/%Y")


def _parse_date(text: str, fmt: str | None, line_no: int) -> np.datetime64:
    text = text.strip()
    formats = (fmt,) if fmt else _DATE_FORMATS
    for f in formats:
        try:
            return month(pd.to_datetime(text, format=f))
        except (ValueError, TypeError):
            continue
    raise ParseError(f"malformed date {text!r} on line {line_no}")


def _parse_cell(text: str) -> float:
    try:
        v = float(text)
    except (TypeError, ValueError):
        return math.nan
    return v if math.isfinite(v) else math.nan


def load_panel(path, schema: PanelSchema | None = None) -> TimeSeriesPanel:
    """Read a FRED-MD format CSV into a panel.

    Empty or non-numeric cells become missing. Completely empty trailing rows
    (common in published vintages) are ignored.
    """
    schema = schema or PanelSchema()
    path = Path(path)
    with open(path, newline="", encoding="utf-8-sig") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    date_idx = 0 if schema.date_column is None else header.index(schema.date_column)
    var_cols = [(i, h) for i, h in enumerate(header) if i != date_idx]
    names = [h for _, h in var_cols]
    dups = sorted({n for n in names if names.count(n) > 1})
    if dups:
        raise SchemaError(f"duplicate variable names: {dups}")

    body_start = 1
    codes_raw: dict[str, str] = {}
    if schema.has_tcode_row:
        if len(rows) < 2:
            raise SchemaError(f"{path}: missing transform-code row")
        code_row = rows[1]
        codes_raw = {h: (code_row[i].strip() if i < len(code_row) else "") for i, h in var_cols}
        body_start = 2

    dates, data = [], []
    for line_no, row in enumerate(rows[body_start:], start=body_start + 1):
        if not row or all(not c.strip() for c in row):
            continue
        dates.append(_parse_date(row[date_idx], schema.date_format, line_no))
        data.append([_parse_cell(row[i]) if i < len(row) else math.nan for i, _ in var_cols])

    keep = schema.columns if schema.columns is not None else names
    missing = [n for n in keep if n not in names]
    if missing:
        raise LookupFailure(f"variables not found in {path.name}: {missing}")
    pos = [names.index(n) for n in keep]
    values = np.array(data, dtype=float).reshape(len(data), len(names))[:, pos]

    tcodes = []
    for n in keep:
        if n in schema.tcode_overrides:
            tcodes.append(int(schema.tcode_overrides[n]))
            continue
        raw = codes_raw.get(n)
        if raw is None:
            if schema.default_tcode is None:
                raise SchemaError(f"no transform code for {n!r}")
            tcodes.append(int(schema.default_tcode))
            continue
        try:
            c = int(float(raw))
        except ValueError:
            raise ValidationError(f"unknown transform code {raw!r} for variable {n!r}") from None
        if c not in ALLOWED_TCODES:
            raise ValidationError(f"unknown transform code {c} for variable {n!r}")
        tcodes.append(c)
    return TimeSeriesPanel(np.array(dates, dtype="datetime64[M]"), keep, values, tcodes)


def save_panel(panel: TimeSeriesPanel, path, with_tcodes: bool = True) -> None:
    """Write ``panel`` as CSV with ISO-8601 dates (FRED-MD layout)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["date", *panel.names])
        if with_tcodes:
            w.writerow(["Transform:", *panel.tcodes])
        for d, row in zip(panel.dates, panel.values):
            w.writerow([iso(d), *("" if np.isnan(v) else repr(float(v)) for v in row)])


def transform_series(x: np.ndarray, tcode: int, name: str = "?", dates=None) -> np.ndarray:
    """Apply one FRED-MD transform code, keeping the series length."""
    x = np.asarray(x, dtype=float)
    if tcode not in ALLOWED_TCODES:
        raise ValidationError(f"unknown transform code {tcode} for variable {name!r}")
    if tcode in LOG_TCODES:
        bad = np.flatnonzero(~np.isnan(x) & (x <= 0))
        if bad.size:
            when = iso(dates[bad[0]]) if dates is not None else f"row {bad[0]}"
            raise DomainError(f"non-positive value {x[bad[0]]} for log transform of {name!r} at {when}")
        with np.errstate(invalid="ignore"):
            x = np.log(x)
    out = np.full_like(x, np.nan)
    if tcode in (1, 4):
        out[:] = x
    elif tcode in (2, 5):
        out[1:] = x[1:] - x[:-1]
    else:  # 6
        out[2:] = x[2:] - 2 * x[1:-1] + x[:-2]
    return out


def apply_transforms(panel: TimeSeriesPanel) -> TimeSeriesPanel:
    cols = [
        transform_series(panel.values[:, j], c, n, panel.dates)
        for j, (n, c) in enumerate(zip(panel.names, panel.tcodes))
    ]
    values = np.column_stack(cols) if cols else panel.values.copy()
    return replace(panel, values=values)


def select_set(panel: TimeSeriesPanel, members: VariableSet | Sequence[str] | str) -> TimeSeriesPanel:
    if isinstance(members, str):
        members = variable_set(members)
    members = list(members)
    absent = [m for m in members if m not in panel.names]
    if absent:
        raise LookupFailure(f"variable(s) not in panel: {absent}")
    idx = [panel.names.index(m) for m in members]
    return TimeSeriesPanel(panel.dates, members, panel.values[:, idx], [panel.tcodes[i] for i in idx])


def estimation_window(panel: TimeSeriesPanel, start, end) -> TimeSeriesPanel:
    """Rows with dates in ``[start, end]`` inclusive."""
    start, end = month(start), month(end)
    if start > end:
        raise RangeError(f"window start {iso(start)} after end {iso(end)}")
    sel = (panel.dates >= start) & (panel.dates <= end)
    if not sel.any():
        raise RangeError(
            f"window {iso(start)}..{iso(end)} does not overlap panel {iso(panel.start)}..{iso(panel.end)}"
        )
    if start < panel.start or end > panel.end:
        raise RangeError(
            f"window {iso(start)}..{iso(end)} not within panel {iso(panel.start)}..{iso(panel.end)}"
        )
    return TimeSeriesPanel(panel.dates[sel], panel.names, panel.values[sel], panel.tcodes)


def data_path(path) -> Path:
    """Resolve relative paths against ``$MACROFORECAST_DATA_DIR`` when it is set."""
    p = Path(path)
    root = os.environ.get("MACROFORECAST_DATA_DIR")
    if root and not p.is_absolute() and not p.exists():
        return Path(root) / p
    return p
