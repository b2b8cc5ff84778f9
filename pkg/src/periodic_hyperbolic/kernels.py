"""Exponential weights c_j, c_j^l and kernels d_j along characteristics.

``c_j^l(xi, x, t) = exp(int_x^xi (-1)^j (b_jj/a - l a_t/a^2)(eta, tau_j(eta, x, t)) d eta)``
and ``d_j = (-1)^j c_j / a(xi, tau_j(xi, x, t))``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .characteristics import CharField, _sign, trace
from .problem import Coefficients, GridSpec


def weight_from_integrals(j: int, l: int, Ib, Iat):
    return np.exp(_sign(j) * (Ib - l * Iat))


def compute_c(j: int, l: int, xi: float, x: float, t, grid: GridSpec, coeffs: Coefficients):
    if l < 0:
        raise ValueError("l must be non-negative")
    tr = trace(j, x, t, grid, coeffs, weights=True, inverse=False)
    return weight_from_integrals(j, l, tr.at(xi, "Ib"), tr.at(xi, "Iat"))


def compute_d(j: int, xi: float, x: float, t, grid: GridSpec, coeffs: Coefficients):
    tr = trace(j, x, t, grid, coeffs, weights=True, inverse=False)
    c = weight_from_integrals(j, 0, tr.at(xi, "Ib"), tr.at(xi, "Iat"))
    return _sign(j) * c / coeffs("a", xi, tr.at(xi))


@dataclass(frozen=True)
class KernelField:
    """Weights on the :class:`CharField` sites.

    ``foot_c[j][l]`` is ``c_j^l`` from the base point to the inflow boundary
    for ``l = 0..k``; ``step_c[j]`` is ``c_j`` across one upstream cell and
    ``step_d[j]`` the matching ``d_j`` at the upstream node.
    """

    k: int
    foot_c: dict
    step_c: dict
    step_d: dict

    @classmethod
    def build(cls, field: CharField, coeffs: Coefficients, k: int) -> "KernelField":
        foot_c, step_c, step_d = {}, {}, {}
        x = field.grid.x
        for j in (1, 2):
            foot = field.foot[j]
            foot_c[j] = [weight_from_integrals(j, l, foot["Ib"], foot["Iat"]) for l in range(k + 1)]
            step = field.step[j]
            step_c[j] = weight_from_integrals(j, 0, step["Ib"], step["Iat"])
            if j == 1:
                xi = np.concatenate([x[:1], x[:-1]])
            else:
                xi = np.concatenate([x[1:], x[-1:]])
            step_d[j] = _sign(j) * step_c[j] / coeffs("a", xi[:, None], step["tau"])
        return cls(k=k, foot_c=foot_c, step_c=step_c, step_d=step_d)
