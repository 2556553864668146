"""Rank-based pseudo-observations and the inverse empirical marginal transform.

Pseudo-observations map each column of a data matrix to (0, 1) through its
own empirical CDF scaled by n/(n+1), so that the transformed sample has
(approximately) uniform marginals while never touching 0 or 1.  The inverse
transform maps copula-scale values back onto observed data values; by
construction it cannot extend the observed range of a column.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import InvalidInputError


@dataclass(frozen=True)
class PseudoSample:
    """Rank-transformed sample plus the sorted originals needed for inversion.

    Attributes
    ----------
    n, p : int
        Sample size and dimension.
    u : ndarray, shape (n, p)
        Pseudo-observations; every entry lies in [1/(n+1), n/(n+1)].
    sorted_columns : tuple of ndarray
        Each original column sorted ascending, for inverse transforms.
    """

    n: int
    p: int
    u: np.ndarray
    sorted_columns: tuple

    def column(self, j: int) -> np.ndarray:
        return self.sorted_columns[j]


def pseudo_observations(data) -> PseudoSample:
    """Transform an n-by-p data matrix to pseudo-observations.

    Entry (i, j) becomes ``#{k : X_kj <= X_ij} / (n + 1)``; ties share the
    rank implied by the <= count.

    Raises
    ------
    InvalidInputError
        If the matrix has fewer than 2 rows or any non-finite entry.
    """
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise InvalidInputError(f"expected a 2-d data matrix, got ndim={x.ndim}")
    n, p = x.shape
    if n < 2:
        raise InvalidInputError(f"need at least 2 observations, got n={n}")
    if p < 1:
        raise InvalidInputError("need at least one column")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("data contains non-finite entries")

    # rank with method='max' counts ties with <=, exactly the indicator sum
    ranks = rankdata(x, method="max", axis=0)
    u = ranks / (n + 1.0)
    cols = tuple(np.sort(x[:, j]) for j in range(p))
    u.flags.writeable = False
    for c in cols:
        c.flags.writeable = False
    return PseudoSample(n=n, p=p, u=u, sorted_columns=cols)


def inverse_empirical(column, u):
    """Generalized inverse of the empirical marginal CDF.

    Returns the smallest order statistic ``x_(k)`` with ``k/n >= u``,
    clamped to the extreme order statistics at both ends.  Each observed
    value then carries probability 1/n under uniform u, so the output law
    is exactly the resampling distribution of the column.  Accepts a scalar
    or an array of u values; the column must be sorted ascending.
    """
    col = np.asarray(column, dtype=float)
    if col.ndim != 1 or col.size == 0:
        raise InvalidInputError("column must be a non-empty 1-d array")
    n = col.size
    uu = np.asarray(u, dtype=float)
    if np.any((uu <= 0.0) | (uu >= 1.0)):
        raise InvalidInputError("u must lie strictly inside (0, 1)")
    grid = np.arange(1, n + 1, dtype=float) / n
    k = np.searchsorted(grid, uu, side="left")  # first index with k/n >= u
    k = np.minimum(k, n - 1)
    out = col[k]
    return float(out) if np.isscalar(u) or np.ndim(u) == 0 else out
