"""Small shared helpers: quantized interning keys and float formatting."""

from __future__ import annotations

import numpy as np

# Entries smaller than this are treated as exact zeros by sign rules.
ZERO_EPS = 1e-12


def quant_key(values: np.ndarray | tuple[float, ...], tol: float) -> tuple[int, ...]:
    """Map floats to integer buckets of width `tol` (round-half-even).

    Tuples equal after rounding intern to the same id; tuples farther apart
    than `tol` never collide.
    """
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite coefficient")
    return tuple(int(v) for v in np.rint(arr / tol))


def first_nonzero_sign(a: np.ndarray) -> float:
    """Sign of the first entry with |a_i| > ZERO_EPS, or 0.0 if none."""
    for v in a:
        if abs(v) > ZERO_EPS:
            return 1.0 if v > 0 else -1.0
    return 0.0
