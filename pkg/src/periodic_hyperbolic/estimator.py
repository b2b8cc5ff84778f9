"""Estimator-style facade: ``fit`` a problem, ``predict`` w at (x, t) points."""
from __future__ import annotations

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .problem import GridSpec, ProblemSpec
from .solver import SolveOptions, solve

_PAD = 3  # wrap-around time nodes on each side for cubic interpolation


class PeriodicHyperbolicSolver(BaseEstimator):
    """Solve a periodic-Robin problem on a fixed grid.

    Parameters mirror :class:`SolveOptions` plus the grid size.  After
    :meth:`fit` the attributes ``result_``, ``grid_``, ``w_`` and ``u_`` hold
    the solver output; :meth:`predict` evaluates w by cubic interpolation
    (periodic in t).
    """

    def __init__(
        self,
        nx: int = 65,
        nt: int = 64,
        strategy: str = "auto",
        tol_abs: float = 1e-10,
        max_iter: int = 10000,
        relaxation: float = 1.0,
        second_iterate: bool = False,
    ):
        self.nx = nx
        self.nt = nt
        self.strategy = strategy
        self.tol_abs = tol_abs
        self.max_iter = max_iter
        self.relaxation = relaxation
        self.second_iterate = second_iterate

    def _options(self) -> SolveOptions:
        return SolveOptions(
            strategy=self.strategy,
            tol_abs=self.tol_abs,
            max_iter=self.max_iter,
            relaxation=self.relaxation,
            second_iterate=self.second_iterate,
        )

    def fit(self, problem: ProblemSpec, y=None, u0=None):
        if not isinstance(problem, ProblemSpec):
            raise TypeError("fit expects a ProblemSpec")
        grid = GridSpec(self.nx, self.nt)
        result = solve(problem, grid, self._options(), u0=u0)
        self.problem_ = problem
        self.grid_ = grid
        self.result_ = result
        self.converged_ = result.converged
        self.n_iter_ = result.iterations
        self.u_ = np.asarray(result.u.values)
        self.w_ = np.asarray(result.w.values)
        nt, T = grid.nt, problem.T
        idx = np.arange(-_PAD, nt + _PAD)
        self._interp = RegularGridInterpolator(
            (grid.x, idx * grid.dt(T)), self.w_[:, idx % nt], method="cubic",
            # default iterative tolerance leaves ~1e-5 defects at the nodes
            solver_args={"atol": 1e-13, "rtol": 1e-13},
        )
        return self

    def predict(self, X) -> np.ndarray:
        """``X`` has columns ``(x, t)``; t is taken modulo the period."""
        check_is_fitted(self, "result_")
        X = check_array(X, dtype=float)
        if X.shape[1] != 2:
            raise ValueError(f"X must have 2 columns (x, t), got {X.shape[1]}")
        x = X[:, 0]
        if np.any((x < 0) | (x > 1)):
            raise ValueError("x must lie in [0, 1]")
        t = np.mod(X[:, 1], self.problem_.T)
        return self._interp(np.column_stack([x, t]))
