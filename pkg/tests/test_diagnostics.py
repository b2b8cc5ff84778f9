import math

import numpy as np
import pytest

from periodic_hyperbolic import expr
from periodic_hyperbolic.diagnostics import (
    ENTIRE,
    EpsFamily,
    convergence_study,
    fd_weights,
    kernel_dimension,
    manufacture,
    pde_operator,
    residual_boundary,
    residual_pde,
    sample,
    smoothness_indicator,
    sweep_epsilon,
    x_derivative_matrix,
)
from periodic_hyperbolic.problem import GridFunction, GridSpec, ProblemSpec
from periodic_hyperbolic.solver import (
    DiscreteOperators,
    ResonanceError,
    SizeGuardError,
    SolveOptions,
    assemble_dense,
    solve,
)

from conftest import M1_F, M1_W, sup

G = GridSpec(33, 32)


@pytest.fixture(scope="module")
def m1():
    return manufacture(M1_W, a="1", a1="-1")


# ---------------------------------------------------------------------------
# manufacture


def test_m1_data(m1):
    g = GridSpec(9, 16)
    np.testing.assert_allclose(sample(m1.r0, m1.spec, g), 1.0, atol=1e-14)
    np.testing.assert_allclose(sample(m1.r1, m1.spec, g), 1.0, atol=1e-14)
    f_ref = expr.parse(M1_F)
    np.testing.assert_allclose(sample(m1.f, m1.spec, g), sample(f_ref, m1.spec, g), rtol=1e-13, atol=1e-12)


def test_zero_robin_data_rejected():
    with pytest.raises(ValueError, match="ar"):
        manufacture("1", a="0*x+1", a3="1")


def test_boundary_zero_rejected():
    with pytest.raises(ValueError, match="vanishes"):
        manufacture("x*(2+sin(2*pi*t))")


def test_t_independent_closure():
    m = manufacture("exp(x)", a="1", a1="-1")
    # w = e^x: w_tt = w_t = 0, so f = -e^x
    g = GridSpec(17, 8)
    X, _ = g.mesh(1.0)
    np.testing.assert_allclose(sample(m.f, m.spec, g), -np.exp(X), atol=1e-12)
    assert residual_pde(m.w_star, m.spec, g) <= 1e-12


def test_closure_variable_coefficients():
    m = manufacture("(2+cos(x)*sin(2*pi*t))*(1+x)", a="1+0.5*x*x", a1="1+0.2*x", a2="-0.4", a3="x")
    assert residual_pde(m.w_star, m.spec) <= 1e-10
    assert max(residual_boundary(m.w_star, m.spec)) <= 1e-12


# ---------------------------------------------------------------------------
# residuals


def test_residual_pde_symbolic(m1):
    assert residual_pde(m1.w_star, m1.spec, GridSpec(65, 64)) <= 1e-10


def test_residual_pde_perturbation(m1):
    g = GridSpec(129, 128)
    pert = expr.parse("0.01*sin(2*pi*t)")
    image = pde_operator(pert, *(expr.parse(s) for s in ("1", "-1", "0", "0")))
    expected = sup(sample(image, m1.spec, g)[1:-1])
    got = residual_pde(expr.add(m1.w_star, pert), m1.spec, g)
    assert got == pytest.approx(expected, rel=1e-10)
    # 0.01 (4 pi^2 sin - 2 pi cos): sup = 0.01 * 2 pi sqrt(4 pi^2 + 1)
    assert expected == pytest.approx(0.02 * math.pi * math.sqrt(4 * math.pi**2 + 1), rel=1e-3)


def test_residual_pde_sampled(m1):
    errs = []
    for n in (32, 64):
        g = GridSpec(n + 1, n)
        errs.append(residual_pde(GridFunction(m1.exact(g), g, 1.0), m1.spec))
    assert errs[1] < errs[0] / 12  # fourth order
    assert errs[1] <= 1e-3


def test_residual_pde_zero(m1):
    g = GridSpec(17, 16)
    assert residual_pde(np.zeros((17, 16)), m1.spec, g) == pytest.approx(sup(sample(m1.f, m1.spec, g)[1:-1]))


def test_residual_boundary_m1(m1):
    g = GridSpec(257, 32)
    r0, r1 = residual_boundary(GridFunction(m1.exact(g), g, 1.0), m1.spec)
    assert r0 <= 1e-8 and r1 <= 1e-8


def test_residual_boundary_trivial():
    spec = ProblemSpec.from_strings(r0="1", r1="1")
    g = GridSpec(65, 16)
    r0, _ = residual_boundary(np.ones((65, 16)), spec, g)
    assert r0 == pytest.approx(1.0, abs=1e-12)
    X, _ = g.mesh(1.0)
    assert max(residual_boundary(np.exp(X), spec, g)) <= 1e-7


def test_fd_weights():
    np.testing.assert_allclose(fd_weights([-1, 0, 1], 2), [1, -2, 1], atol=1e-12)
    D = x_derivative_matrix(33, 1 / 32, 2)
    x = np.linspace(0, 1, 33)
    np.testing.assert_allclose(D @ x**5, 20 * x**3, atol=1e-9)


# ---------------------------------------------------------------------------
# kernel dimension


def test_kernel_identity():
    dim, tail = kernel_dimension(np.eye(40))
    assert dim == 0
    np.testing.assert_array_equal(tail, np.ones(10))


def test_kernel_telegraph_vs_resonant():
    non = DiscreteOperators(ProblemSpec.from_strings(a="1", a1="-1"), G)
    res = DiscreteOperators(ProblemSpec.from_strings(a="1", r0="1", r1="1"), G)
    ratios = []
    for ops in (non, res):
        M = assemble_dense(ops)
        dim, tail = kernel_dimension(M)
        ratios.append(tail[0] / np.linalg.norm(M, 2))
        if ops is non:
            assert dim == 0
    assert ratios[0] > 1e-3
    assert ratios[1] <= 1e-3 * ratios[0]


def test_kernel_size_guard():
    with pytest.raises(SizeGuardError):
        kernel_dimension(np.zeros((3, 100_000)))


# ---------------------------------------------------------------------------
# convergence


def test_convergence_study(m1):
    study = convergence_study(m1, [GridSpec(n + 1, n) for n in (16, 32, 64)])
    assert study.monotone and study.converging
    assert study.errors[0] > study.errors[-1]
    assert study.orders[-1] >= 1.7
    assert set(study.to_dict()) >= {"errors", "orders", "converging"}


def test_convergence_study_needs_three_grids(m1):
    with pytest.raises(ValueError):
        convergence_study(m1, [GridSpec(17, 16), GridSpec(33, 32)])


def test_exact_initial_guess_is_fixed_point(m1):
    g = GridSpec(33, 32)
    first = solve(m1.spec, g)
    again = solve(m1.spec, g, u0=np.array(first.u.values))
    # no update beyond tol
    assert again.iterations <= 2
    assert sup(again.u.values - first.u.values) <= SolveOptions().tol_abs


# ---------------------------------------------------------------------------
# smoothness


def test_smoothness_band_limited():
    t = np.arange(64) / 64
    assert smoothness_indicator(np.sin(2 * np.pi * t)) == [ENTIRE]


def test_smoothness_triangle():
    t = np.arange(4096) / 4096
    tri = 1 - 4 * np.abs(t - 0.5)
    (slope,) = smoothness_indicator(tri)
    assert slope == pytest.approx(-2.0, abs=0.1)


def test_smoothness_fixture():
    spec = ProblemSpec.from_strings(a="1", a1="-1", f="exp(x)/(2+sin(2*pi*t))")
    res = solve(spec, GridSpec(33, 64))
    slopes = [s for s in smoothness_indicator(res.u) if s != ENTIRE]
    assert slopes and max(slopes) < -4


def test_smoothness_needs_power_of_two():
    with pytest.raises(ValueError):
        smoothness_indicator(np.zeros((3, 48)))


# ---------------------------------------------------------------------------
# eps sweeps


def test_eps_family_validation(telegraph):
    for bad in ((0.0,), (0.0, 1.0), (0.02, 0.01), (0.0, 0.0)):
        with pytest.raises(ValueError):
            EpsFamily(telegraph, bad)


def test_sweep_eps_independent(telegraph):
    opts = SolveOptions()
    out = sweep_epsilon(EpsFamily(telegraph, (0.0, 0.01, 0.02)), G, opts)
    assert out.max_pairwise_diff <= 10 * opts.tol_abs
    assert out.notes


def test_sweep_lower_order():
    spec = ProblemSpec.from_strings(a="1", a1="-1+eps", f="exp(x)*sin(2*pi*t)")
    out = sweep_epsilon(EpsFamily(spec, (0.0, 0.01, 0.02)), G)
    assert out.richardson_consistent
    assert out.richardson_rel_diff_t <= 0.05
    # Lipschitz constant stable across grids
    fine = sweep_epsilon(EpsFamily(spec, (0.0, 0.02)), GridSpec(65, 64))
    assert fine.deriv_est[1] == pytest.approx(out.deriv_est[2], rel=0.05)


def test_sweep_principal_coefficient_recorded():
    # qualitative only: both quotients are reported
    spec = ProblemSpec.from_strings(a="1+eps*x", a1="-1", f="exp(x)*sin(2*pi*t)")
    out = sweep_epsilon(EpsFamily(spec, (0.0, 0.01, 0.02)), G)
    assert out.richardson_rel_diff is not None and out.richardson_rel_diff_x is not None
    assert math.isnan(out.deriv_est[0])


def test_sweep_aborts_on_resonance():
    spec = ProblemSpec.from_strings(a="1", a1="-0.01+eps", f="1")
    with pytest.raises(ResonanceError, match="eps = 0.01"):
        sweep_epsilon(EpsFamily(spec, (0.0, 0.01)), G)
