"""Least-squares power-law fits."""

import numpy as np


def loglog_slope(x, y) -> float:
    """Slope of log|y| against log x; nan if fewer than two usable points."""
    x = np.asarray(x, dtype=float)
    y = np.abs(np.asarray(y))
    ok = (x > 0) & (y > 0) & np.isfinite(y)
    if np.count_nonzero(ok) < 2:
        return float("nan")
    slope, _ = np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)
    return float(slope)
