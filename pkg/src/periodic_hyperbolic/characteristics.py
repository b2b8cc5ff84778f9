"""Characteristic curves of the first-order system.

The j-th characteristic through ``(x, t)`` is the curve ``xi -> tau_j(xi, x, t)``
with ``d tau_j / d xi = (-1)**j / a(xi, tau_j)`` and ``tau_j(x, x, t) = t``.
Curves are integrated with classical RK4 on the nodes of the x-grid.  Along
the way the same RK4 stages integrate three line integrals from ``x`` to
``xi``::

    Ib  = int b_jj / a      (exponential weights c_j, see kernels)
    Iat = int a_t / a**2    (d tau / dt, d tau / dx, weights c_j^l)
    Iax = int a_x / a       (derivatives of the inverse curve)

Times are kept unwrapped; coefficients reduce them modulo T on evaluation.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from .problem import Coefficients, GridSpec, ProblemSpec
from .riemann import bij_values


class TraceRangeError(ValueError):
    pass


def _sign(j: int) -> float:
    if j not in (1, 2):
        raise ValueError(f"characteristic family must be 1 or 2, got {j}")
    return -1.0 if j == 1 else 1.0


class _Integrands:
    """Evaluates the slope and the three line-integral densities at a stage."""

    def __init__(self, coeffs: Coefficients, j: int, weights: bool, inverse: bool):
        self.coeffs = coeffs
        self.j = j
        self.sign = _sign(j)
        self.weights = weights
        self.inverse = inverse

    def __call__(self, xi, tau):
        c = self.coeffs
        a = c("a", xi, tau)
        a_t = c("a_t", xi, tau)
        out = {"tau": self.sign / a, "Iat": a_t / a**2}
        if self.weights or self.inverse:
            a_x = c("a_x", xi, tau)
            if self.inverse:
                out["Iax"] = a_x / a
            if self.weights:
                b11, _, _, b22 = bij_values(a, a_x, a_t, c("a1", xi, tau), c("a2", xi, tau))
                out["Ib"] = (b11 if self.j == 1 else b22) / a
        return out


def _rk4_step(rhs: _Integrands, xi, state: dict, step):
    tau = state["tau"]
    k1 = rhs(xi, tau)
    k2 = rhs(xi + 0.5 * step, tau + 0.5 * step * k1["tau"])
    k3 = rhs(xi + 0.5 * step, tau + 0.5 * step * k2["tau"])
    k4 = rhs(xi + step, tau + step * k3["tau"])
    return {
        key: state[key] + step / 6.0 * (k1[key] + 2.0 * k2[key] + 2.0 * k3[key] + k4[key])
        for key in state
    }


def _initial_state(rhs: _Integrands, t):
    t = np.asarray(t, dtype=float)
    state = {"tau": t.copy(), "Iat": np.zeros_like(t)}
    if rhs.weights:
        state["Ib"] = np.zeros_like(t)
    if rhs.inverse:
        state["Iax"] = np.zeros_like(t)
    return state


@dataclass(frozen=True)
class Trace:
    """A sampled characteristic family member (or a batch of them).

    ``xi`` is increasing; ``tau`` and the integrals have shape
    ``(len(xi), *t.shape)``.  ``base`` is the index of the base point ``x``
    inside ``xi``.
    """

    j: int
    x: float
    t: np.ndarray
    xi: np.ndarray
    tau: np.ndarray
    Iat: np.ndarray
    Ib: np.ndarray | None
    Iax: np.ndarray | None
    base: int

    def at(self, xi_value: float, key: str = "tau") -> np.ndarray:
        """Value at a node of ``xi`` (exact node match required)."""
        idx = np.flatnonzero(np.isclose(self.xi, xi_value, rtol=0, atol=1e-13))
        if idx.size == 0:
            raise KeyError(f"xi = {xi_value} is not a node of this trace")
        return getattr(self, key)[idx[0]]


def trace(
    j: int,
    x: float,
    t,
    grid: GridSpec,
    coeffs: Coefficients,
    weights: bool = True,
    inverse: bool = True,
) -> Trace:
    """RK4 curve through ``(x, t)`` sampled at every x-grid node.

    ``t`` may be an array; all curves are marched together.  When ``x`` is
    not a node, the base point is inserted into the returned ``xi``.
    """
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    rhs = _Integrands(coeffs, j, weights, inverse)
    nodes = grid.x
    h = grid.h
    pos = x / h
    near = int(round(pos))
    on_node = abs(pos - near) < 1e-12
    t = np.asarray(t, dtype=float)

    left_nodes = nodes[: near + 1] if on_node else nodes[: int(np.floor(pos)) + 1]
    right_nodes = nodes[near:] if on_node else nodes[int(np.floor(pos)) + 1 :]
    if on_node:
        x = float(nodes[near])

    def march(targets):
        states = []
        state = _initial_state(rhs, t)
        xi = x
        for target in targets:
            state = _rk4_step(rhs, xi, state, target - xi)
            xi = target
            states.append(state)
        return states

    left_targets = left_nodes[::-1][1:] if on_node else left_nodes[::-1]
    right_targets = right_nodes[1:] if on_node else right_nodes
    left = march(left_targets)[::-1]
    right = march(right_targets)
    base_state = _initial_state(rhs, t)
    states = left + [base_state] + right
    xi = np.concatenate([left_targets[::-1], [x], right_targets])

    def stack(key):
        if key not in base_state:
            return None
        return np.stack([s[key] for s in states])

    return Trace(
        j=j,
        x=x,
        t=t,
        xi=xi,
        tau=stack("tau"),
        Iat=stack("Iat"),
        Ib=stack("Ib"),
        Iax=stack("Iax"),
        base=len(left),
    )


def tau_at(j: int, xi: float, x: float, t, grid: GridSpec, coeffs: Coefficients):
    """``tau_j(xi, x, t)`` for a grid node ``xi``."""
    return trace(j, x, t, grid, coeffs, weights=False, inverse=False).at(xi)


def tau_partials(j: int, xi: float, x: float, t, grid: GridSpec, coeffs: Coefficients):
    """Closed-form ``(d tau_j/dx, d tau_j/dt)`` at ``(xi, x, t)``.

    ``d tau_j/dt = exp(int_xi^x (-1)^j a_t/a^2)`` along the curve and
    ``d tau_j/dx = (-1)^(j+1) / a(x, t) * d tau_j/dt``.
    """
    tr = trace(j, x, t, grid, coeffs, weights=False, inverse=False)
    # Iat runs from x to xi; the exponent runs from xi to x.
    dt_ = np.exp(-_sign(j) * tr.at(xi, "Iat"))
    dx_ = -_sign(j) / coeffs("a", x, t) * dt_
    return dx_, dt_


def inverse_trace(j: int, tau, x: float, t: float, grid: GridSpec, coeffs: Coefficients) -> float:
    """The ``xi`` at which the j-th curve through ``(x, t)`` reaches time ``tau``.

    Bracketing on the sampled curve, bisection on its monotone cubic
    interpolant, then Newton steps on the RK4 curve itself.
    """
    tr = trace(j, x, float(t), grid, coeffs, weights=False, inverse=False)
    taus = tr.tau
    lo_t, hi_t = min(taus[0], taus[-1]), max(taus[0], taus[-1])
    span = max(1.0, abs(hi_t), abs(lo_t))
    if not (lo_t - 1e-12 * span <= tau <= hi_t + 1e-12 * span):
        raise TraceRangeError(
            f"tau = {tau} is outside [{lo_t}, {hi_t}] swept by characteristic {j} through ({x}, {t})"
        )
    # curve as increasing function of xi
    increasing = taus if j == 2 else -taus
    target = tau if j == 2 else -tau
    m = int(np.clip(np.searchsorted(increasing, target) - 1, 0, len(taus) - 2))
    interp = PchipInterpolator(tr.xi, increasing)
    lo, hi = tr.xi[m], tr.xi[m + 1]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if interp(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    guess = 0.5 * (lo + hi)
    rhs = _Integrands(coeffs, j, False, False)
    base_xi, base_tau = tr.xi[m], taus[m]
    for _ in range(3):
        state = _rk4_step(rhs, base_xi, {"tau": np.float64(base_tau), "Iat": 0.0}, guess - base_xi)
        slope = _sign(j) / coeffs("a", guess, state["tau"])
        guess = float(guess - (state["tau"] - tau) / slope)
    return guess


def inverse_partials(j: int, tau: float, x: float, t: float, grid: GridSpec, coeffs: Coefficients):
    """Closed-form ``(d/dx, d/dt)`` of the inverse curve ``tilde tau_j(tau, x, t)``.

    Both carry the factor ``exp(int_t^tau (-1)^j a_x(tilde tau_j(s), s) ds)``,
    evaluated as ``exp(int_x^xi a_x / a)`` along the curve.
    """
    xi_t = inverse_trace(j, tau, x, t, grid, coeffs)
    rhs = _Integrands(coeffs, j, False, True)
    state = _initial_state(rhs, np.float64(t))
    # march from x to xi_t over grid-sized steps
    n = max(1, int(np.ceil(abs(xi_t - x) / grid.h)))
    step = (xi_t - x) / n
    xi = x
    for _ in range(n):
        state = _rk4_step(rhs, xi, state, step)
        xi += step
    factor = float(np.exp(state["Iax"]))
    d_x = factor
    d_t = -_sign(j) * float(coeffs("a", x, t)) * factor
    return d_x, d_t


@dataclass(frozen=True)
class CharField:
    """Characteristic data on every grid base point ``(x_i, t_n)``.

    ``foot[j]`` holds the curve's value where it leaves through the inflow
    boundary (xi = 0 for j = 1, xi = 1 for j = 2); ``step[j]`` holds the value
    one grid cell upstream (xi = x_{i-1} for j = 1, x_{i+1} for j = 2).  Rows
    with no upstream cell (i = 0 for j = 1, i = nx-1 for j = 2) hold the base
    point itself.  The dict values are ``{"tau", "Ib", "Iat"}`` arrays of shape
    ``(nx, nt)``.
    """

    grid: GridSpec
    T: float
    foot: dict
    step: dict

    @classmethod
    def build(cls, spec: ProblemSpec, grid: GridSpec, coeffs: Coefficients | None = None) -> "CharField":
        coeffs = coeffs or Coefficients(spec)
        foot, step = {}, {}
        for j in (1, 2):
            foot[j], step[j] = _march_field(j, grid, spec.T, coeffs)
        return cls(grid=grid, T=spec.T, foot=foot, step=step)

    def dump_csv(self, path, coeffs: Coefficients, stride: int = 1) -> None:
        """Write full curves through every ``stride``-th base point.

        Columns ``j,x,t,xi,tau``.
        """
        t = self.grid.t(self.T)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["j", "x", "t", "xi", "tau"])
            for j in (1, 2):
                for i in range(0, self.grid.nx, stride):
                    tr = trace(j, float(self.grid.x[i]), t[::stride], self.grid, coeffs, False, False)
                    for n, tn in enumerate(t[::stride]):
                        for m, xi in enumerate(tr.xi):
                            writer.writerow([j, repr(float(self.grid.x[i])), repr(float(tn)),
                                             repr(float(xi)), repr(float(tr.tau[m, n]))])


def _march_field(j: int, grid: GridSpec, T: float, coeffs: Coefficients):
    """March every base point to the inflow boundary at once.

    At march step s the active base rows are those still s cells away from
    the boundary; finished rows are recorded as feet.
    """
    nx = grid.nx
    t = grid.t(T)
    xs = grid.x
    rhs = _Integrands(coeffs, j, weights=True, inverse=False)
    full = np.broadcast_to(t, (nx, grid.nt))
    state = _initial_state(rhs, full)
    foot = {key: np.empty((nx, grid.nt)) for key in state}
    step = {key: np.empty((nx, grid.nt)) for key in state}
    for key in state:
        step[key][:] = state[key]
    if j == 1:
        # row i reaches xi = 0 after i steps; active rows are i >= s
        for key in state:
            foot[key][0] = state[key][0]
        for s in range(1, nx):
            active = {key: val[1:] for key, val in state.items()}
            xi = xs[1 : nx - s + 1][:, None]  # xs[i - s + 1] for i = s..nx-1
            state = _rk4_step(rhs, xi, active, -grid.h)
            for key in state:
                foot[key][s] = state[key][0]
                if s == 1:
                    step[key][1:] = state[key]
    else:
        for key in state:
            foot[key][nx - 1] = state[key][nx - 1]
        for s in range(1, nx):
            active = {key: val[:-1] for key, val in state.items()}
            xi = xs[s - 1 : nx - 1][:, None]  # xs[i + s - 1] for i = 0..nx-1-s
            state = _rk4_step(rhs, xi, active, grid.h)
            for key in state:
                foot[key][nx - 1 - s] = state[key][-1]
                if s == 1:
                    step[key][:-1] = state[key]
    return foot, step
