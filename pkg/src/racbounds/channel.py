"""Row-stochastic channel matrices."""
from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError


class ChannelMatrix:
    """Pr(out | in) with rows indexed by the input symbol.

    Built from either a conditional table or a joint table: rows that do not
    sum to one are normalised, and an all-zero row (input never occurs)
    becomes uniform so the matrix stays stochastic.
    """

    def __init__(self, table, normalize=True):
        P = np.array(table, dtype=float)
        if P.ndim != 2 or P.size == 0:
            raise InvalidArgumentError("channel must be a non-empty 2-D table")
        if np.any(P < -1e-15):
            raise InvalidArgumentError("channel entries must be non-negative")
        P = np.clip(P, 0.0, None)
        rows = P.sum(axis=1)
        self.input_weights = rows.copy()
        if normalize:
            zero = rows <= 0
            P[zero] = 1.0 / P.shape[1]
            P[~zero] /= rows[~zero, None]
        elif np.any(np.abs(rows - 1) > 1e-12):
            raise InvalidArgumentError("rows must sum to 1")
        self.matrix = P

    @property
    def shape(self):
        return self.matrix.shape

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)

    def __matmul__(self, other):
        """Cascade: X -> Y through self, then Y -> Z through other."""
        other = other.matrix if isinstance(other, ChannelMatrix) else np.asarray(other)
        return ChannelMatrix(self.matrix @ other, normalize=False)

    def is_stochastic(self, tol=1e-12):
        return bool(np.all(self.matrix >= 0) and np.all(np.abs(self.matrix.sum(axis=1) - 1) <= tol))

    @classmethod
    def symmetric(cls, d, xi):
        """d-ary symmetric channel with diagonal ((d-1) xi + 1)/d."""
        off = (1 - xi) / d
        P = np.full((d, d), off)
        np.fill_diagonal(P, off + xi)
        return cls(P, normalize=False)

    def __repr__(self):
        return f"ChannelMatrix({self.matrix!r})"
