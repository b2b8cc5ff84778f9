"""First-order (Riemann-invariant) form of the problem.

Pairs ``u = (u1, u2)`` are arrays of shape ``(2, nx, nt, *batch)``; the
trailing batch axes let the dense assembler push many basis vectors through
the same code.  Trace functions of ``t`` alone have shape ``(nt, *batch)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import Coefficients, GridSpec, ProblemSpec, compute_C


def bij_values(a, a_x, a_t, a1, a2):
    """Coupling coefficients of the diagonalized first-order system.

    Obtained by substituting ``w_t = (u1 + u2)/2``, ``w_x = (u1 - u2)/(2a)``
    into the second-order equation.  ``b11 + b12 = b21 + b22 = a1``.
    """
    half_a1 = 0.5 * a1
    left = (a2 + a * a_x - a_t) / (2.0 * a)
    right = (a2 + a * a_x + a_t) / (2.0 * a)
    return half_a1 + left, half_a1 - left, half_a1 + right, half_a1 - right


@dataclass(frozen=True)
class RiemannCoeffs:
    b11: np.ndarray
    b12: np.ndarray
    b21: np.ndarray
    b22: np.ndarray
    a_x: np.ndarray
    a_t: np.ndarray


def compute_bij(spec: ProblemSpec, grid: GridSpec) -> RiemannCoeffs:
    coeffs = Coefficients(spec)
    X, Tm = grid.mesh(spec.T)
    a = coeffs("a", X, Tm)
    a_x = coeffs("a_x", X, Tm)
    a_t = coeffs("a_t", X, Tm)
    b = bij_values(a, a_x, a_t, coeffs("a1", X, Tm), coeffs("a2", X, Tm))
    return RiemannCoeffs(*b, a_x=a_x, a_t=a_t)


def _expand(arr: np.ndarray, ndim: int) -> np.ndarray:
    return arr.reshape(arr.shape + (1,) * (ndim - arr.ndim))


def cumulative_trapezoid(values: np.ndarray, step: float, axis: int = 0) -> np.ndarray:
    """Cumulative trapezoid starting from zero, same length as ``values``."""
    v = np.moveaxis(values, axis, 0)
    out = np.zeros_like(v, dtype=float)
    out[1:] = np.cumsum(0.5 * step * (v[1:] + v[:-1]), axis=0)
    return np.moveaxis(out, 0, axis)


class RiemannSystem:
    """The integral operators I, J, N, G, F and the w <-> u maps on a grid."""

    def __init__(self, spec: ProblemSpec, grid: GridSpec, coeffs: Coefficients | None = None):
        self.spec = spec
        self.grid = grid
        self.coeffs = coeffs or Coefficients(spec)
        X, Tm = grid.mesh(spec.T)
        self.a_grid = self.coeffs("a", X, Tm)
        t = grid.t(spec.T)
        self.a0r0 = self.coeffs("a", 0.0, t) * self.coeffs("r0", 0.0, t)
        self.C = compute_C(spec, grid)
        self.dt = grid.dt(spec.T)

    def mean(self, u: np.ndarray) -> np.ndarray:
        """Period average of ``(u1 + u2)/2`` at ``x = 0``; zero for every genuine solution."""
        return 0.5 * np.mean(u[0, 0] + u[1, 0], axis=0)

    def apply_I(self, u: np.ndarray) -> np.ndarray:
        """Time integral of ``w_t(0, .)`` with its linear drift removed.

        For a periodic ``w`` the drift is zero and this is the plain integral;
        removing it keeps ``Iu`` periodic for every ``u``, so no sawtooth enters
        ``G`` when it is evaluated modulo ``T``.
        """
        integrand = 0.5 * (u[0, 0] + u[1, 0])
        raw = cumulative_trapezoid(integrand, self.dt, axis=0)
        t = self.grid.t(self.spec.T)
        return raw - _expand(t, raw.ndim) * self.mean(u)[None]

    def apply_J(self, u: np.ndarray) -> np.ndarray:
        integrand = (u[0] - u[1]) / (2.0 * _expand(self.a_grid, u.ndim - 1))
        return cumulative_trapezoid(integrand, self.grid.h, axis=0)

    def compute_N(self, u: np.ndarray, Iu: np.ndarray | None = None):
        if Iu is None:
            Iu = self.apply_I(u)
        integrand = 0.5 * (u[0, 0] - u[1, 0]) - _expand(self.a0r0, Iu.ndim) * Iu
        return np.sum(integrand, axis=0) * self.dt / self.C

    def apply_G(self, u: np.ndarray) -> np.ndarray:
        Iu = self.apply_I(u)
        return Iu + self.compute_N(u, Iu)

    def apply_F(self, u: np.ndarray) -> np.ndarray:
        return self.apply_G(u)[None] + self.apply_J(u)

    def riemann_to_w(self, u: np.ndarray) -> np.ndarray:
        """w = Iu + Ju + Nu (identical to F u)."""
        return self.apply_F(u)

    def w_to_riemann(self, w_t: np.ndarray, w_x: np.ndarray) -> np.ndarray:
        """u1 = w_t + a w_x, u2 = w_t - a w_x from supplied derivative grids."""
        a = _expand(self.a_grid, np.ndim(w_x))
        return np.stack([w_t + a * w_x, w_t - a * w_x])
