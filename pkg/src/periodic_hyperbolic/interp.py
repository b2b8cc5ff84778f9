"""Periodic 4-point Lagrange interpolation in time."""
from __future__ import annotations

import numpy as np


class PeriodicCubic:
    """Interpolation of T-periodic nodal data at fixed query times.

    The stencil (indices and weights) is computed once for ``query`` and
    reused for every data vector passed to :meth:`apply`.
    """

    def __init__(self, query, nt: int, dt: float):
        query = np.asarray(query, dtype=float)
        s = query / dt
        base = np.floor(s)
        th = s - base
        base = base.astype(np.int64)
        self.shape = query.shape
        self.nt = nt
        self.index = np.stack([np.mod(base + k, nt) for k in (-1, 0, 1, 2)])
        self.weight = np.stack(
            [
                -th * (th - 1.0) * (th - 2.0) / 6.0,
                (th + 1.0) * (th - 1.0) * (th - 2.0) / 2.0,
                -(th + 1.0) * th * (th - 2.0) / 2.0,
                (th + 1.0) * th * (th - 1.0) / 6.0,
            ]
        )

    def apply(self, values: np.ndarray) -> np.ndarray:
        """``values`` has shape ``(nt, *batch)``; returns ``(*query.shape, *batch)``."""
        extra = (1,) * (values.ndim - 1)
        out = self.weight[0].reshape(self.shape + extra) * values[self.index[0]]
        for k in range(1, 4):
            out = out + self.weight[k].reshape(self.shape + extra) * values[self.index[k]]
        return out

    def matrix(self) -> np.ndarray:
        """Dense ``(prod(query.shape), nt)`` matrix of the stencil."""
        n = int(np.prod(self.shape))
        mat = np.zeros((n, self.nt))
        rows = np.arange(n)
        for k in range(4):
            np.add.at(mat, (rows, self.index[k].ravel()), self.weight[k].ravel())
        return mat
