"""Manufactured solutions, residuals, kernel dimension, regularity and eps-sweeps."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import expr
from .expr import Node
from .problem import Coefficients, GridFunction, GridSpec, ProblemSpec, validate
from .resonance import analyze
from .solver import DENSE_LIMIT, ResonanceError, SizeGuardError, SolveOptions, solve

ENTIRE = "entire"


def _tree(value, T: float) -> Node:
    if isinstance(value, str):
        return expr.parse(value, {"T": float(T)})
    return value


def _at(node: Node, x: float) -> Node:
    return expr.substitute(node, {"x": expr.Num(float(x))})


# ---------------------------------------------------------------------------
# manufactured problems


@dataclass(frozen=True)
class ManufacturedProblem:
    w_star: Node
    f: Node
    r0: Node
    r1: Node
    spec: ProblemSpec

    def exact(self, grid: GridSpec) -> np.ndarray:
        """``w*`` on the grid."""
        return sample(self.w_star, self.spec, grid)

    def exact_riemann(self, grid: GridSpec) -> np.ndarray:
        """``(w_t + a w_x, w_t - a w_x)`` of ``w*`` on the grid."""
        w_t = sample(expr.differentiate(self.w_star, "t"), self.spec, grid)
        w_x = sample(expr.differentiate(self.w_star, "x"), self.spec, grid)
        X, Tm = grid.mesh(self.spec.T)
        a = Coefficients(self.spec)("a", X, Tm)
        return np.stack([w_t + a * w_x, w_t - a * w_x])


def pde_operator(w: Node, a: Node, a1: Node, a2: Node, a3: Node) -> Node:
    """``w_tt - a^2 w_xx + a1 w_t + a2 w_x + a3 w`` as a tree."""
    d = expr.differentiate
    w_t, w_x = d(w, "t"), d(w, "x")
    terms = [
        d(w_t, "t"),
        expr.neg(expr.mul(expr.mul(a, a), d(w_x, "x"))),
        expr.mul(a1, w_t),
        expr.mul(a2, w_x),
        expr.mul(a3, w),
    ]
    out = terms[0]
    for term in terms[1:]:
        out = expr.add(out, term)
    return out


def manufacture(w_star, a="1", a1="0", a2="0", a3="0", T: float = 1.0, k: int = 1, grid: GridSpec | None = None):
    """Right-hand side and Robin data for which ``w_star`` is the solution.

    Arguments may be expression trees or strings.  Raises ``ValueError`` when
    ``w_star`` vanishes at a boundary node or the resulting problem fails
    validation.
    """
    w, a, a1, a2, a3 = (_tree(v, T) for v in (w_star, a, a1, a2, a3))
    grid = grid or GridSpec(65, 64)
    t = grid.t(T)
    for xb in (0.0, 1.0):
        vals = np.broadcast_to(expr.evaluate(_at(w, xb), {"x": xb, "t": t, "eps": 0.0}), t.shape)
        if np.min(np.abs(vals)) <= 1e-12 * max(1.0, float(np.max(np.abs(vals)))):
            raise ValueError(f"w_star vanishes at x = {xb:g}; the Robin quotient is undefined")
    f = pde_operator(w, a, a1, a2, a3)
    w_x = expr.differentiate(w, "x")
    r0 = expr.div(_at(w_x, 0.0), _at(w, 0.0))
    r1 = expr.div(_at(w_x, 1.0), _at(w, 1.0))
    spec = ProblemSpec(a=a, a1=a1, a2=a2, a3=a3, f=f, r0=r0, r1=r1, T=float(T), k=int(k))
    report = validate(spec, grid)
    if not report.passed:
        raise ValueError("manufactured problem fails validation: " + "; ".join(report.violations))
    return ManufacturedProblem(w_star=w, f=f, r0=r0, r1=r1, spec=spec)


# ---------------------------------------------------------------------------
# residuals


def sample(node: Node, spec: ProblemSpec, grid: GridSpec) -> np.ndarray:
    X, Tm = grid.mesh(spec.T)
    out = expr.evaluate(node, {"x": X, "t": Tm, "eps": spec.eps})
    return np.broadcast_to(out, X.shape).astype(float)


def fd_weights(offsets, order: int) -> np.ndarray:
    """Finite-difference weights for the ``order``-th derivative on unit-spaced ``offsets``."""
    s = np.asarray(offsets, dtype=float)
    V = np.vander(s, increasing=True).T
    rhs = np.zeros(s.size)
    rhs[order] = math.factorial(order)
    return np.linalg.solve(V, rhs)


def x_derivative_matrix(n: int, h: float, order: int) -> np.ndarray:
    """Fourth-order accurate derivative matrix on ``n`` nodes, one-sided near the ends."""
    width = 5 if order == 1 else 6
    D = np.zeros((n, n))
    for i in range(n):
        if order == 2 and 2 <= i <= n - 3:
            idx = np.arange(i - 2, i + 3)
        else:
            lo = min(max(i - width // 2, 0), n - width)
            idx = np.arange(lo, lo + width)
        D[i, idx] = fd_weights(idx - i, order) / h**order
    return D


def t_derivative(values: np.ndarray, dt: float, order: int, axis: int = -1) -> np.ndarray:
    """Fourth-order periodic central difference in time."""
    r = lambda s: np.roll(values, s, axis=axis)
    if order == 1:
        return (-r(-2) + 8 * r(-1) - 8 * r(1) + r(2)) / (12.0 * dt)
    return (-r(-2) + 16 * r(-1) - 30 * values + 16 * r(1) - r(2)) / (12.0 * dt**2)


def _derivatives(w, spec: ProblemSpec, grid: GridSpec):
    """``(w, w_t, w_tt, w_x, w_xx)`` on the grid, symbolic when possible."""
    if isinstance(w, GridFunction):
        grid, w = w.grid, w.values
    if isinstance(w, np.ndarray):
        dt = grid.dt(spec.T)
        Dx = x_derivative_matrix(grid.nx, grid.h, 1)
        Dxx = x_derivative_matrix(grid.nx, grid.h, 2)
        return w, t_derivative(w, dt, 1), t_derivative(w, dt, 2), Dx @ w, Dxx @ w
    d = expr.differentiate
    nodes = (w, d(w, "t"), d(d(w, "t"), "t"), d(w, "x"), d(d(w, "x"), "x"))
    return tuple(sample(n, spec, grid) for n in nodes)


def residual_pde(w, spec: ProblemSpec, grid: GridSpec | None = None) -> float:
    """Sup over interior nodes of the equation residual of ``w``.

    ``w`` is a tree (differentiated symbolically, sampled on ``grid``) or
    samples (differentiated with fourth-order differences).
    """
    if isinstance(w, GridFunction):
        grid = w.grid
    grid = grid or GridSpec(65, 64)
    w0, w_t, w_tt, w_x, w_xx = _derivatives(w, spec, grid)
    X, Tm = grid.mesh(spec.T)
    c = Coefficients(spec)
    a = c("a", X, Tm)
    res = w_tt - a**2 * w_xx + c("a1", X, Tm) * w_t + c("a2", X, Tm) * w_x + c("a3", X, Tm) * w0 - c("f", X, Tm)
    return float(np.max(np.abs(res[1:-1])))


def residual_boundary(w, spec: ProblemSpec, grid: GridSpec | None = None) -> tuple[float, float]:
    """Sup over t of ``|w_x(i, t) - r_i(t) w(i, t)|`` for ``i = 0, 1``."""
    if isinstance(w, GridFunction):
        grid = w.grid
    grid = grid or GridSpec(65, 64)
    c = Coefficients(spec)
    t = grid.t(spec.T)
    if isinstance(w, (GridFunction, np.ndarray)):
        vals = w.values if isinstance(w, GridFunction) else w
        D = x_derivative_matrix(grid.nx, grid.h, 1)
        w_x = D[[0, -1]] @ vals
        w_b = vals[[0, -1]]
    else:
        w_x = sample(expr.differentiate(w, "x"), spec, grid)[[0, -1]]
        w_b = sample(w, spec, grid)[[0, -1]]
    out = []
    for row, (name, xb) in enumerate((("r0", 0.0), ("r1", 1.0))):
        out.append(float(np.max(np.abs(w_x[row] - c(name, xb, t) * w_b[row]))))
    return out[0], out[1]


# ---------------------------------------------------------------------------
# kernel dimension


def kernel_dimension(matrix: np.ndarray, rel_threshold: float = 1e-8) -> tuple[int, np.ndarray]:
    """Number of singular values below ``rel_threshold * sigma_max`` and the 10 smallest."""
    matrix = np.asarray(matrix, dtype=float)
    if max(matrix.shape) > DENSE_LIMIT:
        raise SizeGuardError(f"matrix of size {matrix.shape} exceeds the limit {DENSE_LIMIT}")
    s = np.linalg.svd(matrix, compute_uv=False)
    dim = int(np.sum(s < rel_threshold * s[0]))
    return dim, np.sort(s)[:10]


# ---------------------------------------------------------------------------
# convergence


@dataclass
class ConvergenceStudy:
    grids: list[GridSpec]
    errors: list[float]
    relative_errors: list[float]
    orders: list[float]
    iterations: list[int]
    monotone: bool

    @property
    def converging(self) -> bool:
        return self.monotone and all(o > 0 for o in self.orders)

    def to_dict(self) -> dict:
        return {
            "grids": [f"{g.nx}x{g.nt}" for g in self.grids],
            "errors": list(self.errors),
            "relative_errors": list(self.relative_errors),
            "orders": list(self.orders),
            "iterations": list(self.iterations),
            "monotone": self.monotone,
            "converging": self.converging,
        }


def convergence_study(mproblem: ManufacturedProblem, grids, opts: SolveOptions | None = None) -> ConvergenceStudy:
    """Sup errors against ``w*`` and observed orders ``log2(e_h / e_{h/2})``."""
    grids = list(grids)
    if len(grids) < 3:
        raise ValueError("a convergence study needs at least three grids")
    errors, rel, iters = [], [], []
    for g in grids:
        result = solve(mproblem.spec, g, opts)
        exact = mproblem.exact(g)
        err = float(np.max(np.abs(result.w.values - exact)))
        errors.append(err)
        rel.append(err / float(np.max(np.abs(exact))))
        iters.append(result.iterations)
    orders = [math.log2(e0 / e1) if e1 > 0 else math.inf for e0, e1 in zip(errors, errors[1:])]
    monotone = all(e1 < e0 for e0, e1 in zip(errors, errors[1:]))
    return ConvergenceStudy(grids, errors, rel, orders, iters, monotone)


# ---------------------------------------------------------------------------
# regularity


def _row_slope(row: np.ndarray, floor: float):
    # upper half of the spectrum is aliasing-dominated for algebraic decay
    coef = np.abs(np.fft.rfft(row))[1 : row.size // 4 + 1]
    top = float(np.max(coef)) if coef.size else 0.0
    k = np.arange(1, coef.size + 1)
    keep = coef > floor * max(top, float(np.abs(np.mean(row))), 1e-300)
    if keep.sum() < 3:
        return ENTIRE
    return float(np.polyfit(np.log(k[keep]), np.log(coef[keep]), 1)[0])


def smoothness_indicator(w, floor: float = 1e-11) -> list:
    """Decay exponent of the time spectrum for every x-row.

    Fourier coefficients ``|c_k|``, ``1 <= k <= nt/4``, above ``floor`` times the
    largest one form the resolved band; the least-squares slope of
    ``log|c_k|`` against ``log k`` is returned.  Rows with fewer than three
    resolved modes are reported as ``"entire"``.  For pairs the slower decay
    of the two components is reported.
    """
    values = w.values if isinstance(w, GridFunction) else np.asarray(w, dtype=float)
    if values.ndim == 1:
        values = values[None]
    nt = values.shape[-1]
    if nt & (nt - 1):
        raise ValueError("the number of time nodes must be a power of 2")
    if values.ndim == 3:
        first = smoothness_indicator(values[0], floor)
        second = smoothness_indicator(values[1], floor)
        out = []
        for s1, s2 in zip(first, second):
            if s1 == ENTIRE:
                out.append(s2)
            elif s2 == ENTIRE:
                out.append(s1)
            else:
                out.append(max(s1, s2))
        return out
    return [_row_slope(row, floor) for row in values]


# ---------------------------------------------------------------------------
# eps sweeps


@dataclass(frozen=True)
class EpsFamily:
    spec: ProblemSpec
    eps: tuple[float, ...]

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps)
        if len(eps) < 2:
            raise ValueError("a sweep needs at least two eps values")
        if any(not 0 <= e < 1 for e in eps):
            raise ValueError("eps values must lie in [0, 1)")
        if list(eps) != sorted(set(eps)):
            raise ValueError("eps values must be sorted and distinct")
        object.__setattr__(self, "eps", eps)


@dataclass
class SweepResult:
    eps: list[float]
    w: list[np.ndarray]
    sup_err: list[float]
    deriv_est: list[float]
    deriv_est_t: list[float]
    deriv_est_x: list[float]
    max_pairwise_diff: float
    richardson_rel_diff: float | None
    richardson_rel_diff_t: float | None
    richardson_rel_diff_x: float | None
    notes: list[str] = field(default_factory=list)

    @property
    def richardson_consistent(self) -> bool:
        return self.richardson_rel_diff is not None and self.richardson_rel_diff <= 0.05

    def rows(self):
        return list(zip(self.eps, self.sup_err, self.deriv_est))

    def to_dict(self) -> dict:
        return {
            "eps": list(self.eps),
            "sup_err": list(self.sup_err),
            "deriv_est": list(self.deriv_est),
            "deriv_est_t": list(self.deriv_est_t),
            "max_pairwise_diff": self.max_pairwise_diff,
            "richardson_rel_diff": self.richardson_rel_diff,
            "richardson_rel_diff_t": self.richardson_rel_diff_t,
            "deriv_est_x": list(self.deriv_est_x),
            "richardson_rel_diff_x": self.richardson_rel_diff_x,
            "richardson_consistent": self.richardson_consistent,
            "notes": list(self.notes),
        }


def sweep_epsilon(family: EpsFamily, grid: GridSpec, opts: SolveOptions | None = None) -> SweepResult:
    """Solve every member of the family and estimate ``dw/d eps`` at the first value.

    ``sup_err`` is the sup distance to the first solution and ``deriv_est``
    the sup norm of the difference quotient ``(w_i - w_0)/(eps_i - eps_0)``;
    ``deriv_est_t`` and ``deriv_est_x`` are the same for ``w_t`` and ``w_x``.  The two smallest steps give the
    Richardson check: their difference quotients must agree within 5 % in
    sup norm when the dependence is smooth.
    """
    sols = []
    for e in family.eps:
        spec = family.spec.with_eps(e)
        report = analyze(spec, grid)
        if not report.any_condition:
            raise ResonanceError(f"eps = {e:g}: non-resonance conditions fail ({', '.join(report.failed_conditions())})")
        sols.append(solve(spec, grid, opts).w.values)
    dt = grid.dt(family.spec.T)
    e0, w0 = family.eps[0], sols[0]
    sup_err = [float(np.max(np.abs(w - w0))) for w in sols]
    quotients = [None] + [(w - w0) / (e - e0) for e, w in zip(family.eps[1:], sols[1:])]
    deriv = [math.nan] + [float(np.max(np.abs(q))) for q in quotients[1:]]
    deriv_t = [math.nan] + [float(np.max(np.abs(t_derivative(q, dt, 1)))) for q in quotients[1:]]
    Dx = x_derivative_matrix(grid.nx, grid.h, 1)
    deriv_x = [math.nan] + [float(np.max(np.abs(Dx @ q))) for q in quotients[1:]]
    pairwise = max(float(np.max(np.abs(a - b))) for i, a in enumerate(sols) for b in sols[i + 1 :])
    rich = rich_t = rich_x = None
    if len(sols) >= 3:
        rich, rich_t, rich_x = (_rel_step_change(d) for d in (deriv, deriv_t, deriv_x))
    notes = []
    if not family.spec.depends_on_eps():
        notes.append("no coefficient depends on eps")
    return SweepResult(
        list(family.eps), sols, sup_err, deriv, deriv_t, deriv_x, pairwise, rich, rich_t, rich_x, notes
    )


def _rel_step_change(d):
    return abs(d[1] - d[2]) / d[1] if d[1] > 0 else None
