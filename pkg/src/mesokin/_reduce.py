"""Order-fixed floating point reductions."""
from __future__ import annotations

import math

import numpy as np

DEFAULT_CHUNK = 4096


def chunked_sum(values, chunk_size: int = DEFAULT_CHUNK):
    """Sum along axis 0 in fixed index chunks.

    Each chunk is reduced with numpy's pairwise sum; chunk partials are then
    combined with ``math.fsum`` (correctly rounded), so the result depends only
    on the chunk contents and never on scheduling.  Returns a float for 1-d
    input and an array for 2-d input.
    """
    values = np.asarray(values, dtype=np.float64)
    if chunk_size < 1:
        raise ValueError("chunk_size must be >= 1")
    n = values.shape[0]
    partials = [values[s:s + chunk_size].sum(axis=0) for s in range(0, n, chunk_size)]
    if values.ndim == 1:
        return math.fsum(partials)
    if not partials:
        return np.zeros(values.shape[1:])
    stacked = np.stack(partials)
    return np.array([math.fsum(stacked[:, k]) for k in range(stacked.shape[1])])


def fsum_columns(rows):
    """Correctly rounded column sums of a 2-d array of partials."""
    rows = np.asarray(rows, dtype=np.float64)
    return np.array([math.fsum(rows[:, k]) for k in range(rows.shape[1])])
