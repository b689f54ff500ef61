"""Turning a numeric series into tokens for a sequence model.

Three steps: scale the series, cut it into patches, and map each value to one
of B integer bins. Decoding a token returns the midpoint of its bin, so the
round-trip error never exceeds half a bin width.

    python3 demos/tokenization.py
"""

import numpy as np

from macroforecast import tokens as T

x = np.array([4.7, 4.76, 6.8, 7.2, 6.1])

print("patches, size 3 with overlap 2:")
for p in T.patch(x, T.PatchSpec(3, 2)):
    print("  ", p.tolist())
print("patches, size 3 without overlap:")
for p in T.patch(x, T.PatchSpec(3, 0)):
    print("  ", p.tolist())

q = T.QuantizerSpec(n_bins=4, lo=4.0, hi=8.0)
tok = T.quantize(x, q)
print("\ntokens with 4 bins on [4, 8):", tok.tolist())
print("decoded bin midpoints:", T.dequantize(tok, q).tolist())

s = T.scale([1, 2, 3, 4, 5], T.ScalerSpec("median", "iqr"))
print("\nmedian/IQR scaling of 1..5:", s.values.tolist(), f"(M={s.center[0]}, S={s.spread[0]})")

# a longer series: scale per patch, then quantize with a range inferred from the data
rng = np.random.default_rng(1)
walk = np.cumsum(rng.standard_normal(48))
scaled = T.scale(walk, T.ScalerSpec("mean", "std", level="patch", patch=T.PatchSpec(12)))
q = T.QuantizerSpec(16).with_range_from(scaled.values)
tokens = T.quantize(scaled.values, q)
err = np.abs(T.dequantize(tokens, q) - scaled.values).max()
print(f"\n48-step random walk -> {len(scaled.segments)} scaled patches -> tokens")
print(" ", tokens.tolist())
print(f"  max decode error {err:.3f} <= half bin {q.width / 2:.3f}")
