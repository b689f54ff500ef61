"""Command-line entry point: ``macroforecast {transform,run,evaluate,tokenize}``.

Exit codes: 0 success (a run may still have logged gaps), 2 configuration or
validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from . import data as D
from . import errors as E
from .bvar import HyperSearch
from .evaluation import COVID_ONSET, WINDOWS, build_report, persistence_split
from .harness import ExperimentPlan, ForecastStore, default_registry, ingest_external_forecasts, run_experiment
from .tokens import PatchSpec, QuantizerSpec, ScalerSpec, patch_bounds, quantize, scale, spec_from_dict, write_patches, write_tokens

log = logging.getLogger("macroforecast")

USAGE_ERRORS = (
    E.ParseError, E.SchemaError, E.ValidationError, E.DomainError, E.RangeError, E.LookupFailure,
    E.ConflictError, E.ConfigurationError, E.ScaleError, FileNotFoundError, json.JSONDecodeError,
)


def _digest_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _load_json(path):
    if path is None:
        return {}
    with open(D.data_path(path), encoding="utf-8") as fh:
        return json.load(fh)


# --- transform --------------------------------------------------------------


def cmd_transform(args) -> int:
    schema = D.PanelSchema.from_file(args.schema) if args.schema else D.PanelSchema()
    if args.set:
        vs = D.variable_set(args.set)
        schema = replace(schema, columns=list(vs.members))
        if args.reference_codes:
            schema = replace(schema, tcode_overrides={n: D.REFERENCE_TCODES[n] for n in vs})
    elif args.reference_codes:
        raise E.ConfigurationError("--reference-codes needs --set")
    raw = D.load_panel(D.data_path(args.input), schema)
    panel = D.apply_transforms(raw)
    if args.start:
        panel = D.estimation_window(panel, args.start, panel.end)
    D.save_panel(panel, args.out)
    print(f"{'variable':<18}{'tcode':>6}{'first':>12}{'last':>12}{'missing':>9}")
    for j, (n, c) in enumerate(zip(panel.names, panel.tcodes)):
        col = panel.values[:, j]
        ok = np.flatnonzero(~np.isnan(col))
        first = D.iso(panel.dates[ok[0]])[:7] if ok.size else "-"
        last = D.iso(panel.dates[ok[-1]])[:7] if ok.size else "-"
        print(f"{n:<18}{c:>6}{first:>12}{last:>12}{int(np.isnan(col).sum()):>9}")
    print(f"wrote {args.out}: {panel.shape[0]} rows x {panel.shape[1]} variables")
    return 0


# --- run --------------------------------------------------------------------

_PLAN_FLAGS = {
    "models": "models",
    "set": "variables",
    "seed": "seed",
    "first_origin": "first_origin",
    "last_origin": "last_origin",
    "estimation_start": "estimation_start",
    "max_horizon": "max_horizon",
}
_MODEL_DEFAULTS = {"p": 6, "n_draws": 1000, "refresh_every": 12, "grid_points": 7}


def resolve_run_config(args) -> dict:
    cfg = _load_json(args.config)
    extra = set(cfg) - {"plan", "models"}
    if extra:
        raise E.ConfigurationError(f"unknown config sections: {sorted(extra)}")
    plan = dict(cfg.get("plan", {}))
    for flag, key in _PLAN_FLAGS.items():
        val = getattr(args, flag, None)
        if val is not None:
            plan[key] = val.split(",") if flag == "models" else val
    plan.setdefault("models", ["ar1"])
    model_cfg = {**_MODEL_DEFAULTS, **cfg.get("models", {})}
    unknown = set(model_cfg) - set(_MODEL_DEFAULTS)
    if unknown:
        raise E.ConfigurationError(f"unknown model settings: {sorted(unknown)}")
    for key in ("n_draws", "refresh_every"):
        if getattr(args, key, None) is not None:
            model_cfg[key] = getattr(args, key)
    # canonical form: resolved plan (variables expanded)
    resolved = ExperimentPlan.from_dict(plan).to_dict()
    return {"plan": resolved, "models": model_cfg}


def _registry(model_cfg):
    reg = default_registry(model_cfg["p"], model_cfg["n_draws"], model_cfg["refresh_every"])
    search = HyperSearch(grid_points=model_cfg["grid_points"])
    for key in ("bvar_conj", "bvar_asym"):
        reg[key].search = search
    return reg


def cmd_run(args) -> int:
    cfg = resolve_run_config(args)
    plan = ExperimentPlan.from_dict(cfg["plan"])
    panel_path = D.data_path(args.panel)
    panel = D.load_panel(panel_path)
    manifest = {
        "config": cfg,
        "config_digest": hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest(),
        "seed": plan.seed,
        "version": __version__,
        "input": {"path": str(panel_path), "sha256": _digest_file(panel_path)},
    }
    store_dir = Path(args.store)
    mpath = store_dir / "manifest.json"
    if mpath.exists():
        old = json.loads(mpath.read_text(encoding="utf-8"))
        for key in ("config_digest",):
            if old.get(key) != manifest[key]:
                raise E.ConfigurationError(f"{store_dir} was produced with a different configuration")
        if old["input"]["sha256"] != manifest["input"]["sha256"]:
            raise E.ConfigurationError(f"{store_dir} was produced from a different panel file")
    elif args.resume:
        raise E.ConfigurationError(f"--resume given but {mpath} does not exist")
    store = ForecastStore(store_dir)
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    before = len(store)
    workers = args.workers if args.workers is not None else (os.cpu_count() or 1)
    gaps_before = len(store.gaps)
    run_experiment(plan, panel, _registry(cfg["models"]), store, workers=workers)
    new_gaps = store.gaps[gaps_before:]
    print(f"{len(store) - before} new records, {len(store)} total in {store_dir}")
    if new_gaps:
        print(f"{len(new_gaps)} (model, origin) gaps logged to {store_dir / 'gaps.jsonl'}")
        for g in new_gaps[:10]:
            print(f"  {g['model']} {g['origin']}: {g['error']}")
    return 0


# --- evaluate ---------------------------------------------------------------


def cmd_evaluate(args) -> int:
    if not (Path(args.store) / "forecasts.csv").exists():
        raise E.ConfigurationError(f"no forecast store at {args.store}")
    store = ForecastStore(args.store)
    for ext in args.external or []:
        ingest_external_forecasts(D.data_path(ext), _plan_from_store(args.store), store=_Sink(store))
    panel = D.load_panel(D.data_path(args.panel))
    names = list(args.window or [])
    if args.pre_covid or not names:
        names = ["pre_covid"] + [n for n in names if n != "pre_covid"]
    windows = []
    for n in names:
        if n not in WINDOWS:
            raise E.ConfigurationError(f"unknown window {n!r}; choose from {sorted(WINDOWS)}")
        w = WINDOWS[n]
        if args.exclude_covid_onset and w.end >= COVID_ONSET[-1]:
            w = w.with_exclusions([m for m in COVID_ONSET if m not in w.excluded], args.exclude_on)
        elif args.exclude_on != w.exclude_on:
            w = replace(w, exclude_on=args.exclude_on)
        windows.append(w)
    groupings = None
    if args.split == "persistence":
        variables = sorted({r.variable for r in store} & set(panel.names))
        split = persistence_split(D.select_set(panel, variables), args.threshold, windows[0])
        groupings = {"all": variables, **split.groups()}
        print(f"persistence split at {args.threshold}: {len(split.low)} low, {len(split.high)} high")
    report = build_report(
        store, panel, windows, args.out, benchmark=args.benchmark, groupings=groupings,
        include_out_of_plan=args.include_out_of_plan,
    )
    print(f"{len(report.cells)} cells evaluated; {len(report.diagnostics)} diagnostics")
    for f in report.files:
        print(f"  {f}")
    return 0


class _Sink:
    """Adds external records to an in-memory view without touching the store files."""

    def __init__(self, store: ForecastStore):
        self.store = store

    def add(self, records):
        dup = [r.key for r in records if r.key in self.store.records]
        if dup:
            raise E.ConflictError(f"external forecasts collide with stored ones: {dup[:3]}", dup)
        for r in records:
            self.store.records[r.key] = r


def _plan_from_store(store_dir):
    mpath = Path(store_dir) / "manifest.json"
    if not mpath.exists():
        return None
    return ExperimentPlan.from_dict(json.loads(mpath.read_text(encoding="utf-8"))["config"]["plan"])


# --- tokenize ---------------------------------------------------------------


def _tokenizer_specs(args):
    cfg = _load_json(args.spec)
    specs = {k: spec_from_dict(v) for k, v in cfg.items()}
    if args.bins is not None:
        lo = args.range[0] if args.range else None
        hi = args.range[1] if args.range else None
        specs["quantizer"] = QuantizerSpec(args.bins, lo, hi)
    if args.patch_size is not None:
        specs["patch"] = PatchSpec(args.patch_size, args.overlap)
    if args.scale:
        center, spread = args.scale.split("/")
        specs["scaler"] = ScalerSpec(center, spread, "global")
    return specs


def cmd_tokenize(args) -> int:
    specs = _tokenizer_specs(args)
    panel = D.load_panel(D.data_path(args.panel), D.PanelSchema(has_tcode_row=args.tcode_row, default_tcode=1))
    names = args.variables.split(",") if args.variables else panel.names
    series = {}
    for n in names:
        col = panel.column(n)
        col = col[~np.isnan(col)]
        if "scaler" in specs:
            col = scale(col, specs["scaler"]).values
        series[n] = col
    if args.mode == "patches":
        if "patch" not in specs:
            raise E.ConfigurationError("patch mode needs a patch spec (--patch-size or spec file)")
        out = {n: [(a, x[a:b]) for a, b in patch_bounds(x.size, specs["patch"])] for n, x in series.items()}
        write_patches(args.out, out)
        print(f"wrote patches for {len(out)} series to {args.out}")
        return 0
    if "quantizer" not in specs:
        raise E.ConfigurationError("token mode needs a quantizer spec (--bins or spec file)")
    toks = {n: quantize(x, specs["quantizer"]) for n, x in series.items()}
    write_tokens(args.out, toks)
    for n, t in toks.items():
        print(f"{n}: {' '.join(map(str, t[:20]))}{' ...' if t.size > 20 else ''}")
    return 0


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="macroforecast", description="Macroeconomic forecasting experiments.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("transform", help="apply transform codes to a FRED-MD style CSV")
    t.add_argument("--in", dest="input", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--schema", help="JSON panel schema")
    t.add_argument("--set", choices=sorted(D.VARIABLE_SETS), help="keep only this variable set")
    t.add_argument("--reference-codes", action="store_true", help="use the reference transform codes for --set")
    t.add_argument("--start", help="drop rows before this month (YYYY-MM)")
    t.set_defaults(func=cmd_transform)

    r = sub.add_parser("run", help="recursive out-of-sample forecasting")
    r.add_argument("--panel", required=True, help="transformed panel CSV")
    r.add_argument("--store", required=True, help="output directory")
    r.add_argument("--config", help="JSON run config with 'plan' and 'models' sections")
    r.add_argument("--models")
    r.add_argument("--set")
    r.add_argument("--seed", type=int)
    r.add_argument("--first-origin")
    r.add_argument("--last-origin")
    r.add_argument("--estimation-start")
    r.add_argument("--max-horizon", type=int)
    r.add_argument("--n-draws", type=int)
    r.add_argument("--refresh-every", type=int)
    r.add_argument("--workers", type=int)
    r.add_argument("--resume", action="store_true", help="require and continue an existing store")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("evaluate", help="RMSFE / DM report from a forecast store")
    e.add_argument("--store", required=True)
    e.add_argument("--panel", required=True, help="transformed panel CSV (actuals)")
    e.add_argument("--out", required=True)
    e.add_argument("--window", action="append", help=f"one of {sorted(WINDOWS)}; repeatable")
    e.add_argument("--pre-covid", action="store_true", help="shorthand for --window pre_covid")
    e.add_argument("--exclude-covid-onset", action="store_true", help="drop Mar-Jun 2020 origins")
    e.add_argument("--exclude-on", choices=["origin", "target"], default="origin")
    e.add_argument("--split", choices=["persistence"])
    e.add_argument("--threshold", type=float, default=0.9)
    e.add_argument("--benchmark", default="ar1")
    e.add_argument("--external", action="append", help="forecast-exchange CSV to evaluate alongside")
    e.add_argument("--include-out-of-plan", action="store_true")
    e.set_defaults(func=cmd_evaluate)

    k = sub.add_parser("tokenize", help="scale / patch / quantize panel series")
    k.add_argument("--panel", required=True)
    k.add_argument("--out", required=True)
    k.add_argument("--spec", help="JSON with 'quantizer', 'patch', 'scaler' entries")
    k.add_argument("--mode", choices=["tokens", "patches"], default="tokens")
    k.add_argument("--bins", type=int)
    k.add_argument("--range", type=float, nargs=2, metavar=("LO", "HI"))
    k.add_argument("--patch-size", type=int)
    k.add_argument("--overlap", type=int, default=0)
    k.add_argument("--scale", help="center/spread, e.g. median/iqr")
    k.add_argument("--variables")
    k.add_argument("--no-tcode-row", dest="tcode_row", action="store_false")
    k.set_defaults(func=cmd_tokenize)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NotImplementedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (E.MacroForecastError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
