"""Discrete integral operators and the solution of ``u = Bu + Au + Du + Rf``.

Unknowns are the Riemann pair ``u = (u1, u2)`` on the ``nx x nt`` grid,
stored as an array of shape ``(2, nx, nt)``; operator methods also accept
trailing batch axes.

* ``B`` and ``A`` transport boundary data to ``(x, t)`` along the full
  characteristic: values at the foot are interpolated in time with periodic
  cubics and multiplied by the weight ``c_j`` of the whole curve.
* ``D`` and ``R`` are line integrals along characteristics.  They are
  evaluated by marching cell by cell from the inflow boundary: with
  ``tau* = tau_1(x_{i-1}, x_i, t)`` and ``c* = c_1(x_{i-1}, x_i, t)``,

      P_i(t) = c* P_{i-1}(tau*) + h/2 [d_1(x_{i-1}, x_i, t) phi(x_{i-1}, tau*) + d_1(x_i, x_i, t) phi(x_i, t)]

  which is the trapezoid rule on each cell of the curve combined with the
  multiplicative cocycle property of the weights (likewise from x = 1 for
  the second family).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.linalg

from .characteristics import CharField, trace
from .interp import PeriodicCubic
from .kernels import KernelField, weight_from_integrals
from .problem import Coefficients, GridFunction, GridSpec, ProblemSpec
from .resonance import NEAR_RESONANCE_TOL, contraction_factor, loop_products
from .riemann import RiemannSystem, bij_values

log = logging.getLogger(__name__)

DENSE_LIMIT = 40000


class ResonanceError(RuntimeError):
    """The discrete operator is (numerically) singular or no condition holds."""


class NearResonanceError(ResonanceError):
    """The boundary-to-boundary loop weight is too close to 1 for iteration."""


class SizeGuardError(MemoryError):
    pass


@dataclass(frozen=True)
class SolveOptions:
    strategy: Literal["auto", "picard", "dense"] = "auto"
    tol_abs: float = 1e-10
    max_iter: int = 10000
    relaxation: float = 1.0
    second_iterate: bool = False

    def __post_init__(self):
        if self.strategy not in ("auto", "picard", "dense"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if not self.tol_abs > 0:
            raise ValueError("tol_abs must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not 0 < self.relaxation <= 1:
            raise ValueError("relaxation must lie in (0, 1]")


@dataclass
class TraceSolveInfo:
    route: str
    direction: str
    factor: float
    iterations: int
    update_ratios: list[float]


@dataclass
class SolveResult:
    u: GridFunction
    w: GridFunction
    iterations: int
    final_update: float
    rep_residual: float
    strategy_used: str
    q0_used: float
    converged: bool
    route: str | None = None
    update_ratios: list[float] = field(default_factory=list)
    messages: list[str] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "final_update": self.final_update,
            "rep_residual": self.rep_residual,
            "strategy_used": self.strategy_used,
            "q0_used": self.q0_used,
            "route": self.route,
            "messages": list(self.messages),
        }


def _bc(arr: np.ndarray, ndim: int) -> np.ndarray:
    return arr.reshape(arr.shape + (1,) * (ndim - arr.ndim))


class DiscreteOperators:
    """B, A, D, R and the inverse of I - B for one problem on one grid."""

    def __init__(self, spec: ProblemSpec, grid: GridSpec, coeffs: Coefficients | None = None):
        self.spec = spec
        self.grid = grid
        self.coeffs = coeffs = coeffs or Coefficients(spec)
        self.nx, self.nt = grid.nx, grid.nt
        self.h = grid.h
        self.dt = grid.dt(spec.T)
        self.field = CharField.build(spec, grid, coeffs)
        self.kernels = KernelField.build(self.field, coeffs, spec.k)
        self.riemann = RiemannSystem(spec, grid, coeffs)

        X, Tm = grid.mesh(spec.T)
        a = coeffs("a", X, Tm)
        b = bij_values(a, coeffs("a_x", X, Tm), coeffs("a_t", X, Tm), coeffs("a1", X, Tm), coeffs("a2", X, Tm))
        self.b11, self.b12, self.b21, self.b22 = b
        self.a3 = coeffs("a3", X, Tm)
        self.f = coeffs("f", X, Tm)
        self.inv_a = 1.0 / a

        nt, dt = self.nt, self.dt
        foot1, foot2 = self.field.foot[1]["tau"], self.field.foot[2]["tau"]
        self.c1_foot = self.kernels.foot_c[1][0]
        self.c2_foot = self.kernels.foot_c[2][0]
        self.ip1 = PeriodicCubic(foot1, nt, dt)
        self.ip2 = PeriodicCubic(foot2, nt, dt)
        self.alpha1 = 2.0 * self.c1_foot * coeffs("a", 0.0, foot1) * coeffs("r0", 0.0, foot1)
        self.alpha2 = -2.0 * self.c2_foot * coeffs("a", 1.0, foot2) * coeffs("r1", 1.0, foot2)

        step1, step2 = self.field.step[1]["tau"], self.field.step[2]["tau"]
        self.step_ip1 = [PeriodicCubic(step1[i], nt, dt) for i in range(self.nx)]
        self.step_ip2 = [PeriodicCubic(step2[i], nt, dt) for i in range(self.nx)]
        self.c1_step = self.kernels.step_c[1]
        self.c2_step = self.kernels.step_c[2]
        self.d1_step = self.kernels.step_d[1]
        self.d2_step = self.kernels.step_d[2]

        # boundary-to-boundary hops used by the trace equation
        self.hop1 = PeriodicCubic(foot1[-1], nt, dt)  # x=0 data seen from x=1
        self.hop2 = PeriodicCubic(foot2[0], nt, dt)  # x=1 data seen from x=0
        self._reverse = None
        self._route = None
        self._loop_factors = {}

    # -- elementary operators ------------------------------------------------

    def H1(self, z):
        return _bc(self.c1_foot[-1], z.ndim) * self.hop1.apply(z)

    def H2(self, v):
        return _bc(self.c2_foot[0], v.ndim) * self.hop2.apply(v)

    def apply_B(self, u: np.ndarray) -> np.ndarray:
        nd = u.ndim - 1
        out1 = _bc(self.c1_foot, nd) * self.ip1.apply(u[1, 0])
        out2 = _bc(self.c2_foot, nd) * self.ip2.apply(u[0, -1])
        return np.stack([out1, out2])

    def _apply_A_from(self, G: np.ndarray, F: np.ndarray) -> np.ndarray:
        nd = F.ndim
        out1 = _bc(self.alpha1, nd) * self.ip1.apply(G)
        out2 = _bc(self.alpha2, nd) * self.ip2.apply(F[-1])
        return np.stack([out1, out2])

    def apply_A(self, u: np.ndarray) -> np.ndarray:
        G = self.riemann.apply_G(u)
        F = G[None] + self.riemann.apply_J(u)
        return self._apply_A_from(G, F)

    def line_integrals(self, phi1: np.ndarray, phi2: np.ndarray) -> np.ndarray:
        """``(int_0^x d_1 phi1, int_1^x d_2 phi2)`` along characteristics."""
        nx, h = self.nx, self.h
        nd = phi1.ndim
        inv_a = _bc(self.inv_a, nd)
        P1 = np.zeros_like(phi1)
        for i in range(1, nx):
            ip = self.step_ip1[i]
            P1[i] = _bc(self.c1_step[i], nd - 1) * ip.apply(P1[i - 1]) + 0.5 * h * (
                _bc(self.d1_step[i], nd - 1) * ip.apply(phi1[i - 1]) - inv_a[i] * phi1[i]
            )
        P2 = np.zeros_like(phi2)
        for i in range(nx - 2, -1, -1):
            ip = self.step_ip2[i]
            P2[i] = _bc(self.c2_step[i], nd - 1) * ip.apply(P2[i + 1]) - 0.5 * h * (
                _bc(self.d2_step[i], nd - 1) * ip.apply(phi2[i + 1]) + inv_a[i] * phi2[i]
            )
        return np.stack([P1, P2])

    def _apply_D_from(self, u: np.ndarray, F: np.ndarray) -> np.ndarray:
        nd = F.ndim
        a3F = _bc(self.a3, nd) * F
        phi1 = -(_bc(self.b12, nd) * u[1] + a3F)
        phi2 = -(_bc(self.b21, nd) * u[0] + a3F)
        return self.line_integrals(phi1, phi2)

    def apply_D(self, u: np.ndarray) -> np.ndarray:
        return self._apply_D_from(u, self.riemann.apply_F(u))

    def apply_R(self, f: np.ndarray | None = None) -> np.ndarray:
        f = self.f if f is None else f
        return self.line_integrals(f, f)

    def apply_AD(self, u: np.ndarray) -> np.ndarray:
        """(A + D) u sharing one evaluation of G and F."""
        G = self.riemann.apply_G(u)
        F = G[None] + self.riemann.apply_J(u)
        return self._apply_A_from(G, F) + self._apply_D_from(u, F)

    def apply_L(self, u: np.ndarray) -> np.ndarray:
        """u - Bu - Au - Du."""
        return u - self.apply_B(u) - self.apply_AD(u)

    # -- inverse of I - B ----------------------------------------------------

    def _reverse_hops(self):
        if self._reverse is None:
            t = self.grid.t(self.spec.T)
            back1 = trace(1, 0.0, t, self.grid, self.coeffs, weights=True, inverse=False)
            back2 = trace(2, 1.0, t, self.grid, self.coeffs, weights=True, inverse=False)
            self._reverse = (
                weight_from_integrals(1, 0, back1.Ib[-1], back1.Iat[-1]),
                PeriodicCubic(back1.tau[-1], self.nt, self.dt),
                weight_from_integrals(2, 0, back2.Ib[0], back2.Iat[0]),
                PeriodicCubic(back2.tau[0], self.nt, self.dt),
            )
        return self._reverse

    def H1_inv(self, v):
        """Transport of x=1 data back to x=0; inverts :meth:`H1` up to interpolation error."""
        c, ip, _, _ = self._reverse_hops()
        return _bc(c, v.ndim) * ip.apply(v)

    def H2_inv(self, z):
        _, _, c, ip = self._reverse_hops()
        return _bc(c, z.ndim) * ip.apply(z)

    def _loop_lu(self, route: str):
        """LU factors of the nt x nt trace matrix ``I - Q`` for one route."""
        if route not in self._loop_factors:
            h1 = self.c1_foot[-1][:, None] * self.hop1.matrix()
            h2 = self.c2_foot[0][:, None] * self.hop2.matrix()
            Q = h1 @ h2 if route == "right" else h2 @ h1
            self._loop_factors[route] = scipy.linalg.lu_factor(np.eye(self.nt) - Q)
        return self._loop_factors[route]

    def choose_route(self) -> tuple[str, str, float]:
        """Pick the trace equation and direction with the smallest contraction factor."""
        if self._route is None:
            t = self.grid.t(self.spec.T)
            loops = loop_products(self.spec, self.grid, t=t, coeffs=self.coeffs)
            candidates = []
            for route, samples in (("right", loops.q[0]), ("left", loops.p[0])):
                cf = contraction_factor(samples)
                if cf is not None:
                    candidates.append((cf[0], route, cf[1]))
            if not candidates:
                self._route = ("none", "none", math.nan)
            else:
                factor, route, direction = min(candidates)
                self._route = (route, direction, factor)
        return self._route

    def invert_ImB(
        self,
        g: np.ndarray,
        route: str | None = None,
        direction: str | None = None,
        tol: float = 1e-14,
        max_iter: int = 10000,
        return_info: bool = False,
    ):
        """Solve ``u - Bu = g`` through a scalar periodic trace equation.

        The right route solves for ``v = u1(1, .)`` from ``v = H1 H2 v + gamma``;
        the left route for ``z = u2(0, .)``.  ``forward`` iterates the equation
        as written (contracting when the loop weight is < 1); ``backward``
        iterates the reversed form ``v <- Q^{-1}(v - gamma)`` with ``Q^{-1}``
        transported along the reversed characteristics (contracting when the
        weight is > 1).  The reversed transport only inverts the discrete hop
        up to interpolation error, so the backward result gets one correction
        with the direct solve of the ``nt x nt`` trace system.
        """
        auto_route, auto_dir, factor = self.choose_route()
        route = route or auto_route
        direction = direction or auto_dir
        if route == "none":
            raise ResonanceError("neither loop weight stays on one side of 1")
        if route == auto_route and factor > 1.0 - NEAR_RESONANCE_TOL:
            raise NearResonanceError(f"loop contraction factor {factor:.6g} is within 1e-3 of 1")

        g1, g2 = g[0], g[1]
        if route == "right":
            gamma = self.H1(g2[0]) + g1[-1]
            Q = lambda v: self.H1(self.H2(v))
            P = lambda v: self.H2_inv(self.H1_inv(v))
        else:
            gamma = self.H2(g1[-1]) + g2[0]
            Q = lambda v: self.H2(self.H1(v))
            P = lambda v: self.H1_inv(self.H2_inv(v))

        v = np.zeros_like(gamma)
        ratios = []
        prev = None
        scale = max(1.0, float(np.max(np.abs(gamma))))
        it = 0
        for it in range(1, max_iter + 1):
            new = Q(v) + gamma if direction == "forward" else P(v - gamma)
            upd = float(np.max(np.abs(new - v)))
            v = new
            if prev:
                ratios.append(upd / prev)
            prev = upd
            if upd <= tol * scale:
                break
        else:
            raise NearResonanceError(f"trace iteration did not converge in {max_iter} steps")
        if direction == "backward":
            defect = (gamma + Q(v) - v).reshape(self.nt, -1)
            v = v + scipy.linalg.lu_solve(self._loop_lu(route), defect).reshape(v.shape)

        nd = g.ndim - 1
        if route == "right":
            u2 = _bc(self.c2_foot, nd) * self.ip2.apply(v) + g2
            u1 = _bc(self.c1_foot, nd) * self.ip1.apply(u2[0]) + g1
        else:
            u1 = _bc(self.c1_foot, nd) * self.ip1.apply(v) + g1
            u2 = _bc(self.c2_foot, nd) * self.ip2.apply(u1[-1]) + g2
        u = np.stack([u1, u2])
        if return_info:
            return u, TraceSolveInfo(route, direction, factor, it, ratios)
        return u

    # -- the mean constraint -------------------------------------------------

    def mean(self, u: np.ndarray) -> np.ndarray:
        return self.riemann.mean(u)

    def boundary_unit(self, batch: tuple = ()) -> np.ndarray:
        """Pair equal to 1 on the ``u1(0, .)`` nodes and 0 elsewhere."""
        e = np.zeros((2, self.nx, self.nt) + batch)
        e[0, 0] = 1.0
        return e

    def apply_M(self, u: np.ndarray) -> np.ndarray:
        """Square system solved by both paths: ``u - Bu - Au - Du + mean(u) e``.

        Summed over one period the ``u1(0, .)`` rows of ``u - Bu - Au - Du``
        vanish identically (``N`` is defined from that sum), so one equation
        is redundant and the operator has a one-dimensional kernel.  The
        missing equation is ``mean(u) = 0``, which every periodic ``w``
        satisfies; it is added along the redundant rows.
        """
        return self.apply_L(u) + self.boundary_unit(u.shape[3:]) * self.mean(u)


# ---------------------------------------------------------------------------
# assembly and solution


def assemble_dense(ops: DiscreteOperators, batch: int = 512, constrained: bool = True) -> np.ndarray:
    """Collocation matrix on the flattened pair (C order).

    ``constrained`` gives the matrix of :meth:`DiscreteOperators.apply_M`;
    otherwise the bare ``u -> u - Bu - Au - Du``.
    """
    n = 2 * ops.nx * ops.nt
    if n > DENSE_LIMIT:
        raise SizeGuardError(f"dense system of size {n} exceeds the limit {DENSE_LIMIT}")
    apply = ops.apply_M if constrained else ops.apply_L
    M = np.empty((n, n))
    for start in range(0, n, batch):
        stop = min(n, start + batch)
        E = np.zeros((n, stop - start))
        E[np.arange(start, stop), np.arange(stop - start)] = 1.0
        M[:, start:stop] = apply(E.reshape(2, ops.nx, ops.nt, stop - start)).reshape(n, stop - start)
    return M


def _finish(ops, u, iterations, final_update, strategy, q0, converged, route, ratios, messages):
    grid, T = ops.grid, ops.spec.T
    rep = ops.apply_L(u) - ops.apply_R()
    w = ops.riemann.riemann_to_w(u)
    return SolveResult(
        u=GridFunction(u, grid, T),
        w=GridFunction(w, grid, T),
        iterations=iterations,
        final_update=final_update,
        rep_residual=float(np.max(np.abs(rep))),
        strategy_used=strategy,
        q0_used=q0,
        converged=converged,
        route=route,
        update_ratios=ratios,
        messages=messages,
    )


def _solve_dense(ops: DiscreteOperators) -> np.ndarray:
    M = assemble_dense(ops)
    lu, piv = scipy.linalg.lu_factor(M, check_finite=False)
    diag = np.abs(np.diag(lu))
    if diag.min() <= 1e-13 * diag.max():
        raise ResonanceError("dense collocation matrix is numerically singular")
    rhs = ops.apply_R().ravel()
    return scipy.linalg.lu_solve((lu, piv), rhs).reshape(2, ops.nx, ops.nt)


@dataclass
class _PicardRun:
    u: np.ndarray
    iterations: int
    update: float
    converged: bool
    ratios: list[float]


def _picard(ops: DiscreteOperators, opts: SolveOptions, relaxation: float, u0=None) -> _PicardRun:
    """Outer iteration ``u <- (I - B)^{-1}((A + D) u + Rf)`` with relaxation.

    The bare operator has a one-dimensional kernel ``k`` (see
    :meth:`DiscreteOperators.apply_M`) and the iteration keeps the sum of
    ``u1 - u2`` over ``x = 0`` fixed, so it converges to a solution that may
    be off by a multiple of ``k``.  A second column iterates the homogeneous
    map from the boundary unit vector and converges to a multiple of ``k``;
    the multiple that restores ``mean(u) = 0`` is subtracted at the end.
    """
    nx, nt = ops.nx, ops.nt
    Rf = ops.apply_R()
    U = np.zeros((2, nx, nt, 2))
    if u0 is not None:
        U[..., 0] = u0
    U[..., 1] = ops.boundary_unit()
    if opts.second_iterate:
        # u = Bu + (A + D)(B + A + D) u + (I + A + D) Rf
        rhs0 = ops.invert_ImB(Rf + ops.apply_AD(Rf))

        def step(U):
            return ops.invert_ImB(ops.apply_AD(ops.apply_B(U) + ops.apply_AD(U)))
    else:
        rhs0 = ops.invert_ImB(Rf)

        def step(U):
            return ops.invert_ImB(ops.apply_AD(U))

    updates, ratios = [], []
    converged = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        new = step(U)
        new[..., 0] += rhs0
        if relaxation != 1.0:
            new = (1.0 - relaxation) * U + relaxation * new
        diff = np.max(np.abs(new - U), axis=(0, 1, 2))
        U = new
        m = ops.mean(U)
        # update of the corrected solution, bounded through both columns
        upd = float(diff[0] + abs(m[0] / m[1]) * diff[1]) if m[1] != 0 else math.inf
        if updates and updates[-1] > 0:
            ratios.append(upd / updates[-1])
        updates.append(upd)
        if not np.isfinite(upd):
            break
        if upd < 0.25 * relaxation * opts.tol_abs:
            converged = True
            break
        if it >= 30:
            rho = (updates[-1] / updates[-11]) ** 0.1 if updates[-11] > 0 else 0.0
            if rho >= 0.999:
                break
            if 0 < rho and upd * rho ** (opts.max_iter - it) > opts.tol_abs:
                break
    m = ops.mean(U)
    if not np.isfinite(m).all() or abs(m[1]) < 1e-12:
        return _PicardRun(U[..., 0], it, math.inf, False, ratios)
    u = U[..., 0] - (m[0] / m[1]) * U[..., 1]
    return _PicardRun(u, it, updates[-1], converged, ratios)


RELAXATION_LADDER = (0.8, 0.5)


def solve(
    spec: ProblemSpec,
    grid: GridSpec,
    opts: SolveOptions | None = None,
    u0: np.ndarray | None = None,
    ops: DiscreteOperators | None = None,
) -> SolveResult:
    """Solve the integral-equation system and rebuild ``w``.

    ``auto`` runs the outer fixed-point iteration (retrying with stronger
    relaxation when it stagnates) and falls back to a dense LU solve of the
    collocation system when the system is small enough.
    """
    opts = opts or SolveOptions()
    ops = ops or DiscreteOperators(spec, grid)
    messages = []
    route, direction, factor = ops.choose_route()
    n = 2 * grid.nx * grid.nt
    dense_ok = n <= DENSE_LIMIT
    near = route == "none" or factor > 1.0 - NEAR_RESONANCE_TOL

    if opts.strategy == "dense" or (opts.strategy == "auto" and near):
        if opts.strategy == "auto":
            messages.append("near resonance: using the dense collocation solve")
            if not dense_ok:
                raise ResonanceError(
                    "no contracting trace iteration and the dense system is too large "
                    f"({n} > {DENSE_LIMIT} unknowns)"
                )
        u = _solve_dense(ops)
        return _finish(ops, u, 0, 0.0, "dense", factor, True, None, [], messages)

    if near:
        raise NearResonanceError(
            f"loop contraction factor {factor:.6g} is within {NEAR_RESONANCE_TOL} of 1"
        )
    label = f"{route}/{direction}"
    ladder = [opts.relaxation]
    if opts.strategy == "auto":
        ladder += [w for w in RELAXATION_LADDER if w < opts.relaxation]
    iterations = 0
    for omega in ladder:
        run = _picard(ops, opts, omega, u0)
        iterations += run.iterations
        if run.converged:
            return _finish(
                ops, run.u, iterations, run.update, "picard", factor, True, label, run.ratios, messages
            )
        messages.append(f"fixed-point iteration with relaxation {omega:g} stopped after {run.iterations} steps")
    if opts.strategy == "auto" and dense_ok:
        messages.append("falling back to the dense collocation solve")
        u = _solve_dense(ops)
        return _finish(ops, u, iterations, run.update, "dense", factor, True, label, run.ratios, messages)
    log.warning("solve did not converge: %s", messages[-1])
    return _finish(ops, run.u, iterations, run.update, "picard", factor, False, label, run.ratios, messages)
