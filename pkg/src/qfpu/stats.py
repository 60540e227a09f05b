"""Error bars for time-correlated sample sequences."""

from __future__ import annotations

import numpy as np

MIN_BLOCKS = 32


def blocked_standard_error(x, axis: int = 0, min_blocks: int = MIN_BLOCKS):
    """Standard error of the mean of a correlated sequence by repeated pairwise blocking.

    The naive error grows with block size until the blocks decorrelate; the
    largest value over all levels that still hold ``min_blocks`` blocks is
    returned, which errs on the conservative side.
    """
    x = np.moveaxis(np.asarray(x, dtype=float), axis, 0)
    n = x.shape[0]
    if n < 2:
        return np.full(x.shape[1:], np.nan) if x.ndim > 1 else float("nan")
    best = np.std(x, axis=0, ddof=1) / np.sqrt(n)
    y = x
    while y.shape[0] // 2 >= min_blocks:
        m = y.shape[0] // 2
        y = 0.5 * (y[: 2 * m : 2] + y[1 : 2 * m : 2])
        se = np.std(y, axis=0, ddof=1) / np.sqrt(m)
        best = np.maximum(best, se)
    return best if np.ndim(best) else float(best)


def mean_and_error(x, axis: int = 0):
    x = np.asarray(x, dtype=float)
    return np.mean(x, axis=axis), blocked_standard_error(x, axis=axis)
