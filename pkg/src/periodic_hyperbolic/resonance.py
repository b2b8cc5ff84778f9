"""Non-resonance conditions and contraction quantities.

Everything here is built on two closed characteristic loops:

* the *right loop* starts at ``(1, t)``, follows the 1-characteristic to
  ``x = 0`` and returns along the 2-characteristic to ``x = 1``; its weight
  is ``q_l(t) = c_1^l(0, 1, t) c_2^l(1, 0, tau_1(0, 1, t))``;
* the *left loop* starts at ``(0, t)``, goes right along the
  2-characteristic and back along the 1-characteristic; its weight is
  ``p_l(t) = c_2^l(1, 0, t) c_1^l(0, 1, tau_2(1, 0, t))``.

``log q_0`` and ``log p_0`` are the integrals whose non-vanishing rules out
resonance.  Conditions are sampled on the time grid plus midpoints.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import minimize_scalar
from scipy.signal import resample

from .characteristics import trace
from .kernels import weight_from_integrals
from .problem import Coefficients, GridSpec, ProblemSpec

STRICT_TOL = 1e-6
NEAR_RESONANCE_TOL = 1e-3
STATIONARY_TOL = 1e-12


def sample_times(grid: GridSpec, T: float) -> np.ndarray:
    """Grid times and midpoints (2 nt samples)."""
    return np.arange(2 * grid.nt) * (T / (2 * grid.nt))


@dataclass(frozen=True)
class LoopData:
    t: np.ndarray
    q: dict  # l -> right-loop weights q_l(t)
    p: dict  # l -> left-loop weights p_l(t)
    log_q0: np.ndarray
    log_p0: np.ndarray


def loop_products(spec: ProblemSpec, grid: GridSpec, t=None, levels=(0,), coeffs=None) -> LoopData:
    coeffs = coeffs or Coefficients(spec)
    if t is None:
        t = sample_times(grid, spec.T)
    t = np.asarray(t, dtype=float)

    # right loop: 1-curve from (1, t) to x = 0, then 2-curve from (0, s) to x = 1
    out1 = trace(1, 1.0, t, grid, coeffs, weights=True, inverse=False)
    s = out1.tau[0]
    back2 = trace(2, 0.0, s, grid, coeffs, weights=True, inverse=False)
    # left loop: 2-curve from (0, t) to x = 1, then 1-curve from (1, s) to x = 0
    out2 = trace(2, 0.0, t, grid, coeffs, weights=True, inverse=False)
    s2 = out2.tau[-1]
    back1 = trace(1, 1.0, s2, grid, coeffs, weights=True, inverse=False)

    q, p = {}, {}
    for l in levels:
        q[l] = weight_from_integrals(1, l, out1.Ib[0], out1.Iat[0]) * weight_from_integrals(
            2, l, back2.Ib[-1], back2.Iat[-1]
        )
        p[l] = weight_from_integrals(2, l, out2.Ib[-1], out2.Iat[-1]) * weight_from_integrals(
            1, l, back1.Ib[0], back1.Iat[0]
        )
    log_q0 = -out1.Ib[0] + back2.Ib[-1]
    log_p0 = out2.Ib[-1] - back1.Ib[0]
    return LoopData(t=t, q=q, p=p, log_q0=log_q0, log_p0=log_p0)


UPSAMPLE = 16


def _dense(values: np.ndarray) -> np.ndarray:
    """Trigonometric interpolant of periodic samples on a 16x finer grid."""
    return resample(values, UPSAMPLE * values.size)


def _trig_eval(coef: np.ndarray, n: int, s: float) -> float:
    k = np.arange(coef.size)
    weight = np.where((k == 0) | (2 * k == n), 1.0, 2.0)
    return float(np.sum(weight * (coef * np.exp(2j * np.pi * k * s)).real) / n)


def _extremum(values: np.ndarray, sign: float) -> float:
    """Extremum of the trigonometric interpolant of periodic samples.

    Located on the upsampled grid, then polished by a bounded scalar search,
    so the result does not carry the O(dt^2) error of a sample maximum.
    """
    values = np.asarray(values, dtype=float)
    n = values.size
    fine = sign * _dense(values)
    m = int(np.argmax(fine))
    h = 1.0 / fine.size
    coef = np.fft.rfft(values)
    res = minimize_scalar(
        lambda s: -sign * _trig_eval(coef, n, s),
        bounds=(m * h - h, m * h + h),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return sign * max(float(-res.fun), float(fine[m]))


def _max(values) -> float:
    return _extremum(values, 1.0)


def _min(values) -> float:
    return _extremum(values, -1.0)


def _periodic_derivative(values: np.ndarray, spacing: float) -> np.ndarray:
    """Fourth-order central difference on periodic samples."""
    r = np.roll
    return (-r(values, -2) + 8 * r(values, -1) - 8 * r(values, 1) + r(values, 2)) / (12.0 * spacing)


def _nonvanishing(integral: np.ndarray) -> bool:
    return bool(np.min(np.abs(integral)) > STRICT_TOL and (np.all(integral > 0) or np.all(integral < 0)))


def check_small(spec: ProblemSpec, grid: GridSpec, coeffs=None) -> dict:
    """Sampled loop integrals and verdicts for both conditions.

    Returns ``{"small": (min |integral|, verdict, samples), "small+": ...}``.
    """
    loops = loop_products(spec, grid, coeffs=coeffs)
    return {
        "small": (float(np.min(np.abs(loops.log_q0))), _nonvanishing(loops.log_q0), loops.log_q0),
        "small+": (float(np.min(np.abs(loops.log_p0))), _nonvanishing(loops.log_p0), loops.log_p0),
    }


def compute_ql(spec: ProblemSpec, grid: GridSpec, l: int, coeffs=None) -> tuple[float, float]:
    """``(q_l, q_l')``: sup of the right-loop weight and of its time derivative."""
    loops = loop_products(spec, grid, levels=(l,), coeffs=coeffs)
    spacing = spec.T / loops.t.size
    qt = loops.q[l]
    return _max(np.abs(qt)), float(np.max(np.abs(_periodic_derivative(qt, spacing))))


def _level_verdicts(loops: LoopData, k: int) -> dict:
    levels = range(k + 1)
    return {
        "small1": all(_max(loops.q[l]) < 1 - STRICT_TOL for l in levels),
        "small11": all(_min(loops.q[l]) > 1 + STRICT_TOL for l in levels),
        "small111": all(_max(loops.p[l]) < 1 - STRICT_TOL for l in levels),
        "small1111": all(_min(loops.p[l]) > 1 + STRICT_TOL for l in levels),
    }


def check_small_l(spec: ProblemSpec, grid: GridSpec, k: int | None = None, coeffs=None) -> dict:
    """Verdicts of the four level-wise conditions for ``l = 0..k``."""
    k = spec.k if k is None else k
    loops = loop_products(spec, grid, levels=tuple(range(k + 1)), coeffs=coeffs)
    return _level_verdicts(loops, k)


def stationary_simplification(spec: ProblemSpec, grid: GridSpec, coeffs=None) -> float:
    """Loop integral for time-independent ``a``, ``a1``, ``a2``.

    Then ``b11 + b22 = a1`` at every point and the loop integral reduces to
    ``int_0^1 a1 / a``, integrated with Simpson's rule on the x-grid.  (The
    form ``int (a a1 + a a') / a^2`` is what one gets from a sign-flipped
    ``b22``; it disagrees with the loop weights whenever ``a' != 0``.)
    """
    coeffs = coeffs or Coefficients(spec)
    X, Tm = grid.mesh(spec.T)
    if np.max(np.abs(coeffs("a_t", X, Tm))) > STATIONARY_TOL:
        raise ValueError("a depends on t; the stationary formula does not apply")
    for name in ("a1", "a2"):
        vals = coeffs(name, X, Tm)
        if np.max(np.abs(vals - vals[:, :1])) > STATIONARY_TOL * (1 + np.max(np.abs(vals))):
            raise ValueError(f"{name} depends on t; the stationary formula does not apply")
    x = grid.x
    a = coeffs("a", x, 0.0)
    integrand = coeffs("a1", x, 0.0) / a
    return float(simpson(integrand, x=x))


@dataclass
class ResonanceReport:
    k: int
    t: np.ndarray
    integral_small: np.ndarray
    integral_small_plus: np.ndarray
    q: list[float]
    q_prime: list[float]
    p: list[float]
    verdicts: dict[str, bool]
    margins: dict[str, float]
    stationary_value: float | None = None
    near_resonance: bool = False
    caveats: list[str] = field(default_factory=list)

    @property
    def any_condition(self) -> bool:
        return self.verdicts["small"] or self.verdicts["small+"]

    def failed_conditions(self) -> list[str]:
        return [name for name, ok in self.verdicts.items() if not ok]

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "q": list(self.q),
            "q_prime": list(self.q_prime),
            "p": list(self.p),
            "verdicts": dict(self.verdicts),
            "margins": dict(self.margins),
            "stationary_value": self.stationary_value,
            "near_resonance": self.near_resonance,
            "integral_small_min_abs": float(np.min(np.abs(self.integral_small))),
            "integral_small_plus_min_abs": float(np.min(np.abs(self.integral_small_plus))),
            "caveats": list(self.caveats),
        }

    def table(self) -> str:
        lines = [f"{'l':>3} {'q_l':>22} {'q_l prime':>22} {'p_l':>22}"]
        for l in range(self.k + 1):
            lines.append(f"{l:>3} {self.q[l]:>22.17g} {self.q_prime[l]:>22.17g} {self.p[l]:>22.17g}")
        lines.append("")
        for name, ok in self.verdicts.items():
            lines.append(f"{name:>10}: {'holds' if ok else 'fails'} (margin {self.margins[name]:.6g})")
        if self.stationary_value is not None:
            lines.append(f"stationary loop integral: {self.stationary_value:.17g}")
        if self.near_resonance:
            lines.append("warning: near resonance (|q_l - 1| < 1e-3); dense solver path will be used")
        return "\n".join(lines)


def analyze(spec: ProblemSpec, grid: GridSpec, coeffs=None) -> ResonanceReport:
    coeffs = coeffs or Coefficients(spec)
    k = spec.k
    loops = loop_products(spec, grid, levels=tuple(range(k + 1)), coeffs=coeffs)
    spacing = spec.T / loops.t.size
    q = [_max(np.abs(loops.q[l])) for l in range(k + 1)]
    q_prime = [float(np.max(np.abs(_periodic_derivative(loops.q[l], spacing)))) for l in range(k + 1)]
    p = [_max(np.abs(loops.p[l])) for l in range(k + 1)]
    verdicts = {"small": _nonvanishing(loops.log_q0), "small+": _nonvanishing(loops.log_p0)}
    verdicts.update(_level_verdicts(loops, k))
    qmax = max(_max(loops.q[l]) for l in range(k + 1))
    qmin = min(_min(loops.q[l]) for l in range(k + 1))
    pmax = max(_max(loops.p[l]) for l in range(k + 1))
    pmin = min(_min(loops.p[l]) for l in range(k + 1))
    margins = {
        "small": float(np.min(np.abs(loops.log_q0))) - STRICT_TOL,
        "small+": float(np.min(np.abs(loops.log_p0))) - STRICT_TOL,
        "small1": 1.0 - qmax,
        "small11": qmin - 1.0,
        "small111": 1.0 - pmax,
        "small1111": pmin - 1.0,
    }
    near = any(
        np.min(np.abs(loops.q[l] - 1.0)) < NEAR_RESONANCE_TOL for l in range(k + 1)
    )
    stationary = None
    try:
        stationary = stationary_simplification(spec, grid, coeffs)
    except ValueError:
        pass
    return ResonanceReport(
        k=k,
        t=loops.t,
        integral_small=loops.log_q0,
        integral_small_plus=loops.log_p0,
        q=q,
        q_prime=q_prime,
        p=p,
        verdicts=verdicts,
        margins=margins,
        stationary_value=stationary,
        near_resonance=bool(near),
        caveats=["conditions for all t are checked on 2 nt samples per period; extrema use the trigonometric interpolant"],
    )


def contraction_factor(q_samples: np.ndarray) -> tuple[float, str] | None:
    """Contraction factor and direction for a loop-weight sample set.

    Forward iteration contracts with ``max q`` when ``q < 1``; the reversed
    iteration contracts with ``1 / min q`` when ``q > 1``.
    """
    qmax, qmin = float(np.max(q_samples)), float(np.min(q_samples))
    if qmax < 1.0:
        return qmax, "forward"
    if qmin > 1.0:
        return 1.0 / qmin, "backward"
    return None
