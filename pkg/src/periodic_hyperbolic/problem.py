"""Problem instances, grids and the standing-assumption checks."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from . import expr
from .expr import Node

COEFFICIENT_NAMES = ("a", "a1", "a2", "a3", "f", "r0", "r1")
PERIODICITY_RTOL = 1e-10
NONDEGENERACY_RTOL = 1e-8


@dataclass(frozen=True)
class ProblemSpec:
    """Coefficients of the periodic-Robin problem as expression trees.

    ``eps`` is the value bound to the expression variable ``eps`` when the
    coefficients are evaluated; it is 0 unless the instance belongs to a
    perturbation family.
    """

    a: Node
    a1: Node
    a2: Node
    a3: Node
    f: Node
    r0: Node
    r1: Node
    T: float = 1.0
    k: int = 1
    eps: float = 0.0

    def __post_init__(self):
        for name in ("r0", "r1"):
            if "x" in expr.variables(getattr(self, name)):
                raise ValueError(f"{name} must not depend on x")
        if self.k < 0:
            raise ValueError("k must be non-negative")

    @classmethod
    def from_strings(
        cls,
        a: str = "1",
        a1: str = "0",
        a2: str = "0",
        a3: str = "0",
        f: str = "0",
        r0: str = "1",
        r1: str = "1",
        T: float = 1.0,
        k: int = 1,
        eps: float = 0.0,
    ) -> "ProblemSpec":
        consts = {"T": float(T)}
        trees = {
            name: expr.parse(text, consts)
            for name, text in zip(COEFFICIENT_NAMES, (a, a1, a2, a3, f, r0, r1))
        }
        return cls(**trees, T=float(T), k=int(k), eps=float(eps))

    def coefficient(self, name: str) -> Node:
        return getattr(self, name)

    def with_eps(self, eps: float) -> "ProblemSpec":
        return replace(self, eps=float(eps))

    def depends_on_eps(self) -> bool:
        return any("eps" in expr.variables(getattr(self, n)) for n in COEFFICIENT_NAMES)

    def mirrored(self) -> "ProblemSpec":
        """Relabel x -> 1 - x.

        The mirrored problem has ``a2 -> -a2`` and Robin data
        ``(r0, r1) -> (-r1, -r0)``; use it when the nondegeneracy integral
        vanishes at x = 0 but not at x = 1.
        """
        flip = {"x": expr.BinOp("-", expr.Num(1.0), expr.Var("x"))}

        def sub(node):
            return expr.substitute(node, flip)

        return replace(
            self,
            a=sub(self.a),
            a1=sub(self.a1),
            a2=expr.neg(sub(self.a2)),
            a3=sub(self.a3),
            f=sub(self.f),
            r0=expr.neg(self.r1),
            r1=expr.neg(self.r0),
        )

    def to_dict(self) -> dict:
        out = {name: expr.to_string(getattr(self, name)) for name in COEFFICIENT_NAMES}
        out.update(T=self.T, k=self.k, eps=self.eps)
        return out


@dataclass(frozen=True)
class GridSpec:
    """Uniform tensor grid: ``nx`` nodes on [0, 1] with both ends, ``nt``
    periodic nodes on [0, T)."""

    nx: int
    nt: int

    def __post_init__(self):
        if self.nx < 9:
            raise ValueError(f"nx must be >= 9, got {self.nx}")
        if self.nt < 8 or self.nt % 2:
            raise ValueError(f"nt must be even and >= 8, got {self.nt}")

    @property
    def h(self) -> float:
        return 1.0 / (self.nx - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.nx)

    def dt(self, T: float) -> float:
        return T / self.nt

    def t(self, T: float) -> np.ndarray:
        return np.arange(self.nt) * (T / self.nt)

    def mesh(self, T: float) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.t(T), indexing="ij")

    @property
    def size(self) -> int:
        return self.nx * self.nt

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        """Parse ``"NXxNT"``."""
        try:
            nx, nt = (int(p) for p in text.lower().split("x"))
        except ValueError:
            raise ValueError(f"grid must look like 64x64, got {text!r}") from None
        return cls(nx, nt)


@dataclass(frozen=True)
class GridFunction:
    """Samples of a T-periodic function on a :class:`GridSpec`.

    ``values`` has shape ``(nx, nt)`` for scalars or ``(2, nx, nt)`` for
    pairs; time indices wrap modulo ``nt``.
    """

    values: np.ndarray
    grid: GridSpec
    T: float

    def __post_init__(self):
        shape = self.values.shape
        if shape[-2:] != (self.grid.nx, self.grid.nt) or len(shape) not in (2, 3):
            raise ValueError(f"values of shape {shape} do not match {self.grid}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid function has non-finite entries")
        self.values.setflags(write=False)

    @property
    def is_pair(self) -> bool:
        return self.values.ndim == 3

    def at(self, i: int, n: int):
        return self.values[..., i, n % self.grid.nt]

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


class Coefficients:
    """Compiled coefficient evaluators.

    Time arguments are reduced modulo ``T`` before evaluation, so callers may
    pass unwrapped times.  The derivatives of ``a`` are symbolic.
    """

    def __init__(self, spec: ProblemSpec):
        self.spec = spec
        self.T = spec.T
        self._eps = spec.eps
        a_x = expr.differentiate(spec.a, "x")
        a_t = expr.differentiate(spec.a, "t")
        self.trees = {name: getattr(spec, name) for name in COEFFICIENT_NAMES}
        self.trees["a_x"] = a_x
        self.trees["a_t"] = a_t
        self._fns = {name: expr.compile_expr(tree) for name, tree in self.trees.items()}
        self.stationary_a = "t" not in expr.variables(spec.a)

    def __call__(self, name: str, x, t):
        tt = np.mod(t, self.T)
        env = {"x": x, "t": tt, "eps": self._eps}
        with np.errstate(over="ignore"):
            out = self._fns[name](env)
        return np.broadcast_to(out, np.broadcast(np.asarray(x), tt).shape).astype(float)

    def a(self, x, t):
        return self("a", x, t)


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    passed: bool
    min_a: float
    C: float
    C_threshold: float
    periodicity_defect: dict[str, float]
    k: int
    violations: list[str] = field(default_factory=list)
    caveats: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "min_a": self.min_a,
            "C": self.C,
            "C_threshold": self.C_threshold,
            "periodicity_defect": dict(self.periodicity_defect),
            "k": self.k,
            "violations": list(self.violations),
            "caveats": list(self.caveats),
        }


def compute_C(spec: ProblemSpec, grid: GridSpec) -> float:
    """Periodic trapezoid value of the integral of a(0, t) r0(t) over a period."""
    coeffs = Coefficients(spec)
    t = grid.t(spec.T)
    vals = coeffs("a", 0.0, t) * coeffs("r0", 0.0, t)
    return float(np.sum(vals) * grid.dt(spec.T))


def validate(spec: ProblemSpec, grid: GridSpec) -> ValidationReport:
    """Check positivity of ``a``, the nondegeneracy integral and periodicity.

    Failures are listed in the report; nothing is raised for violated
    assumptions.
    """
    violations = []
    caveats = [
        "assumptions are checked on grid nodes only",
        f"data smoothness is not machine-checked; declared k = {spec.k}",
    ]
    if not spec.T > 0 or not math.isfinite(spec.T):
        violations.append("period: T must be positive")
        return ValidationReport(False, math.nan, math.nan, math.nan, {}, spec.k, violations, caveats)

    X, Tm = grid.mesh(spec.T)
    coeffs = Coefficients(spec)
    env = {"x": X, "t": Tm, "eps": spec.eps}
    env_shift = {"x": X, "t": Tm + spec.T, "eps": spec.eps}
    defects = {}
    samples = {}
    for name in COEFFICIENT_NAMES:
        fn = coeffs._fns[name]
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                g = np.broadcast_to(fn(env), X.shape).astype(float)
                g_shift = np.broadcast_to(fn(env_shift), X.shape).astype(float)
        except expr.DomainError as err:
            violations.append(f"evaluation: {name}: {err}")
            continue
        samples[name] = g
        if not np.all(np.isfinite(g)):
            violations.append(f"evaluation: {name} is not finite on the grid")
            continue
        defect = np.abs(g - g_shift) / (1.0 + np.abs(g))
        defects[name] = float(np.max(defect))
        if defects[name] > PERIODICITY_RTOL:
            violations.append(f"periodicity: {name} is not T-periodic (defect {defects[name]:.3g})")

    min_a = float(np.min(samples["a"])) if "a" in samples else math.nan
    if "a" in samples and not min_a > 0:
        violations.append(f"positivity: a must be positive (min {min_a:.6g})")

    C = math.nan
    threshold = math.nan
    if "a" in samples and "r0" in samples:
        prod = samples["a"][0] * samples["r0"][0]
        C = float(np.sum(prod) * grid.dt(spec.T))
        threshold = NONDEGENERACY_RTOL * spec.T * float(np.max(np.abs(prod)))
        if not abs(C) > threshold:
            violations.append(f"ar: integral of a(0,t) r0(t) over a period vanishes (C = {C:.6g})")

    return ValidationReport(
        passed=not violations,
        min_a=min_a,
        C=C,
        C_threshold=threshold,
        periodicity_defect=defects,
        k=spec.k,
        violations=violations,
        caveats=caveats,
    )


def report_json(report) -> str:
    """Deterministic JSON with 17 significant digits for floats."""
    return json.dumps(_round_floats(report.to_dict()), indent=2, sort_keys=True, allow_nan=True)


def _round_floats(obj):
    if isinstance(obj, float):
        if math.isfinite(obj):
            return float(f"{obj:.17g}")
        return obj
    if isinstance(obj, Mapping):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    if isinstance(obj, np.generic):
        return _round_floats(obj.item())
    return obj
