"""Tokenization primitives for time-series language models.

Three pure codecs: affine scaling, patching into fixed-length segments, and
uniform quantization into integer tokens 1..B.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import RangeError, ScaleError, ValidationError


@dataclass(frozen=True)
class PatchSpec:
    size: int
    overlap: int = 0

    def __post_init__(self):
        if int(self.size) != self.size or self.size < 1:
            raise ValidationError(f"patch size must be a positive integer, got {self.size}")
        if int(self.overlap) != self.overlap or self.overlap < 0:
            raise ValidationError(f"overlap must be a nonnegative integer, got {self.overlap}")
        if self.overlap >= self.size:
            raise ValidationError(f"overlap {self.overlap} must be smaller than size {self.size}")

    @property
    def stride(self) -> int:
        return self.size - self.overlap


def patch_bounds(length: int, spec: PatchSpec) -> list[tuple[int, int]]:
    """(start, stop) of each patch for a series of ``length`` points.

    Full windows start every ``stride`` points. If the last point is not
    covered, one shorter patch holding the uncovered tail is appended.
    A series shorter than ``size`` becomes a single short patch.
    """
    if length < 1:
        raise ValidationError("cannot patch an empty series")
    if length <= spec.size:
        return [(0, length)]
    starts = range(0, length - spec.size + 1, spec.stride)
    bounds = [(s, s + spec.size) for s in starts]
    covered = bounds[-1][1]
    if covered < length:
        # overlap is only meaningful between full windows, so the tail starts
        # right after the last covered point
        bounds.append((covered, length))
    return bounds


def patch(series, spec: PatchSpec) -> list[np.ndarray]:
    x = np.asarray(series, dtype=float).ravel()
    return [x[a:b].copy() for a, b in patch_bounds(x.size, spec)]


@dataclass(frozen=True)
class QuantizerSpec:
    n_bins: int
    lo: float | None = None
    hi: float | None = None
    scheme: str = "uniform"

    def __post_init__(self):
        if int(self.n_bins) != self.n_bins or self.n_bins < 2:
            raise ValidationError(f"n_bins must be an integer >= 2, got {self.n_bins}")
        if self.scheme not in ("uniform", "data-dependent"):
            raise ValidationError(f"unknown quantization scheme {self.scheme!r}")
        if (self.lo is None) != (self.hi is None):
            raise ValidationError("give both lo and hi, or neither")
        if self.lo is not None and not self.lo < self.hi:
            raise ValidationError(f"need lo < hi, got [{self.lo}, {self.hi})")

    @property
    def width(self) -> float:
        return (self.hi - self.lo) / self.n_bins

    def with_range_from(self, series) -> "QuantizerSpec":
        """Range [min, max + one ulp) of ``series`` unless already explicit."""
        if self.lo is not None:
            return self
        x = np.asarray(series, dtype=float)
        if x.size == 0 or not np.all(np.isfinite(x)):
            raise ValidationError("range inference needs a nonempty finite series")
        lo, hi = float(x.min()), float(np.nextafter(x.max(), np.inf))
        return QuantizerSpec(self.n_bins, lo, hi, self.scheme)


def quantize(series, spec: QuantizerSpec) -> np.ndarray:
    """token = 1 + floor(B (x - lo) / (hi - lo)) for x in [lo, hi)."""
    if spec.scheme != "uniform":
        raise NotImplementedError("data-dependent quantization is not implemented")
    x = np.asarray(series, dtype=float).ravel()
    spec = spec.with_range_from(x)
    bad = np.flatnonzero(~((x >= spec.lo) & (x < spec.hi)))
    if bad.size:
        i = int(bad[0])
        raise RangeError(f"value {x[i]!r} at index {i} outside [{spec.lo}, {spec.hi})")
    tok = 1 + np.floor(spec.n_bins * (x - spec.lo) / (spec.hi - spec.lo)).astype(np.int64)
    # rounding can push values just below hi into bin B + 1
    return np.minimum(tok, spec.n_bins)


def dequantize(tokens, spec: QuantizerSpec) -> np.ndarray:
    """Midpoint of each token's bin."""
    if spec.lo is None:
        raise ValidationError("dequantize needs an explicit range")
    t = np.asarray(tokens)
    if t.size and (not np.all(np.equal(np.mod(t, 1), 0)) or t.min() < 1 or t.max() > spec.n_bins):
        raise ValidationError(f"tokens must be integers in 1..{spec.n_bins}")
    return spec.lo + (t.astype(float) - 0.5) * spec.width


_CENTERS = ("mean", "median")
_SPREADS = ("std", "iqr")
_LEVELS = ("global", "window", "patch")


@dataclass(frozen=True)
class ScalerSpec:
    center: str = "median"
    spread: str = "iqr"
    level: str = "global"
    window: int | None = None  # context length for level="window"
    patch: PatchSpec | None = None  # segments for level="patch"

    def __post_init__(self):
        if self.center not in _CENTERS:
            raise ValidationError(f"center must be one of {_CENTERS}")
        if self.spread not in _SPREADS:
            raise ValidationError(f"spread must be one of {_SPREADS}")
        if self.level not in _LEVELS:
            raise ValidationError(f"level must be one of {_LEVELS}")
        if self.level == "window" and (self.window is None or self.window < 1):
            raise ValidationError("level='window' needs a positive window length")
        if self.level == "patch" and self.patch is None:
            raise ValidationError("level='patch' needs a PatchSpec")


def _stats(x: np.ndarray, spec: ScalerSpec, where: str) -> tuple[float, float]:
    m = float(np.mean(x)) if spec.center == "mean" else float(np.median(x))
    if spec.spread == "std":
        s = float(np.std(x))
    else:
        q1, q3 = np.percentile(x, [25, 75])
        s = float(q3 - q1)
    if not s > 0:
        raise ScaleError(f"zero {spec.spread} on {where}")
    return m, s


@dataclass(frozen=True)
class Scaled:
    """Scaled segments with the (M, S) used for each."""

    segments: tuple[np.ndarray, ...]
    bounds: tuple[tuple[int, int], ...]
    center: np.ndarray
    spread: np.ndarray

    @property
    def values(self) -> np.ndarray:
        """Concatenated scaled values (segments must not overlap)."""
        if any(b[0] < a[1] for a, b in zip(self.bounds, self.bounds[1:])):
            raise ValidationError("segments overlap; use .segments")
        return np.concatenate(self.segments)

    def inverse(self) -> list[np.ndarray]:
        return [z * s + m for z, m, s in zip(self.segments, self.center, self.spread)]


def scale(series, spec: ScalerSpec) -> Scaled:
    """(x - M) / S with M and S computed per global, window or patch segment."""
    x = np.asarray(series, dtype=float).ravel()
    if x.size == 0:
        raise ValidationError("cannot scale an empty series")
    if spec.level == "global":
        bounds = [(0, x.size)]
    elif spec.level == "window":
        bounds = [(a, min(a + spec.window, x.size)) for a in range(0, x.size, spec.window)]
    else:
        bounds = patch_bounds(x.size, spec.patch)
    segs, ms, ss = [], [], []
    for a, b in bounds:
        m, s = _stats(x[a:b], spec, f"segment [{a}, {b})")
        segs.append((x[a:b] - m) / s)
        ms.append(m)
        ss.append(s)
    return Scaled(tuple(segs), tuple(bounds), np.array(ms), np.array(ss))


def unscale(values, center: float, spread: float) -> np.ndarray:
    return np.asarray(values, dtype=float) * spread + center


# --- serialization ----------------------------------------------------------


def spec_to_dict(spec) -> dict:
    d = asdict(spec)
    d["kind"] = type(spec).__name__
    return d


def spec_from_dict(d: Mapping):
    d = dict(d)
    kind = d.pop("kind", None)
    if kind == "PatchSpec":
        return PatchSpec(**d)
    if kind == "QuantizerSpec":
        return QuantizerSpec(**d)
    if kind == "ScalerSpec":
        if isinstance(d.get("patch"), Mapping):
            d["patch"] = PatchSpec(**d["patch"])
        return ScalerSpec(**d)
    raise ValidationError(f"unknown spec kind {kind!r}")


def write_tokens(path, tokens: Mapping[str, Sequence[int]]) -> None:
    """CSV with columns series_id, position, token (positions start at 1)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["series_id", "position", "token"])
        for sid, toks in tokens.items():
            for i, t in enumerate(toks, start=1):
                w.writerow([sid, i, int(t)])


def write_patches(path, patches: Mapping[str, Sequence[tuple[int, np.ndarray]]]) -> None:
    """CSV with columns series_id, patch, start, position, value."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["series_id", "patch", "start", "position", "value"])
        for sid, plist in patches.items():
            for k, (start, vals) in enumerate(plist, start=1):
                for i, v in enumerate(vals):
                    w.writerow([sid, k, start, start + i, repr(float(v))])
