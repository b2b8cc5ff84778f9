import math

import numpy as np
import pytest

from periodic_hyperbolic.characteristics import CharField, trace
from periodic_hyperbolic.kernels import KernelField, compute_c, compute_d
from periodic_hyperbolic.problem import Coefficients, GridSpec, ProblemSpec

G = GridSpec(33, 16)


def setup(**kw):
    spec = ProblemSpec.from_strings(**kw)
    return spec, Coefficients(spec)


def test_zero_exponent():
    _, c = setup(a="1")
    for j in (1, 2):
        xi = 0.0 if j == 1 else 1.0
        np.testing.assert_allclose(compute_c(j, 0, xi, 0.5, G.t(1.0), G, c), 1.0, atol=1e-15)


def test_constant_coefficient_value():
    _, c = setup(a="1", a1="1")
    assert float(compute_c(1, 0, 0.0, 1.0, 0.3, G, c)) == pytest.approx(math.exp(0.5), rel=1e-13)
    assert float(compute_d(1, 0.0, 1.0, 0.3, G, c)) == pytest.approx(-math.exp(0.5), rel=1e-13)


def test_d_signs_and_scale():
    _, c = setup(a="1")
    assert float(compute_d(1, 0.0, 1.0, 0.0, G, c)) == pytest.approx(-1.0, abs=1e-15)
    assert float(compute_d(2, 1.0, 0.0, 0.0, G, c)) == pytest.approx(1.0, abs=1e-15)
    _, c = setup(a="2")
    assert float(compute_d(1, 0.0, 1.0, 0.0, G, c)) == pytest.approx(-0.5, abs=1e-15)


def test_stationary_a_levels_coincide():
    _, c = setup(a="1+x", a1="0.7")
    t = G.t(1.0)
    base = compute_c(1, 0, 0.0, 0.8, t, G, c)
    for l in (1, 2, 3):
        assert np.max(np.abs(compute_c(1, l, 0.0, 0.8, t, G, c) - base)) <= 1e-14


def test_negative_level_rejected():
    _, c = setup()
    with pytest.raises(ValueError):
        compute_c(1, -1, 0.0, 1.0, 0.0, G, c)


@pytest.mark.parametrize("a1, a2", [("1", "0"), ("-1", "0.4"), ("0.3", "-0.7")])
def test_constant_coefficient_closed_form(a1, a2):
    g = GridSpec(256, 8)
    _, c = setup(a="1", a1=a1, a2=a2)
    b11 = float(a1) / 2 + float(a2) / 2
    b22 = float(a1) / 2 - float(a2) / 2
    t = g.t(1.0)
    for x in (0.0, 0.5, 1.0):
        for xi in (0.0, g.x[77], 1.0):
            for j, bjj in ((1, b11), (2, b22)):
                expected = math.exp((-1) ** j * bjj * (xi - x))
                got = compute_c(j, 0, float(xi), x, t, g, c)
                assert np.max(np.abs(got / expected - 1)) <= 1e-10


@pytest.mark.parametrize(
    "kw",
    [
        dict(a="1+0.3*x+0.2*cos(2*pi*(t-x))", a1="0.5", a2="0.2"),
        dict(a="1+0.1*sin(2*pi*t)", a1="-1+x*cos(2*pi*t)"),
    ],
)
def test_cocycle(kw):
    g = GridSpec(129, 8)
    _, c = setup(**kw)
    t = g.t(1.0)
    for j in (1, 2):
        x = 1.0 if j == 1 else 0.0
        xi1, xi2 = (0.5, 0.25) if j == 1 else (0.5, 0.75)
        tr = trace(j, x, t, g, c)
        c1 = compute_c(j, 0, xi1, x, t, g, c)
        c2 = compute_c(j, 0, xi2, x, t, g, c)
        tau1 = tr.at(xi1)
        inner = np.array([float(compute_c(j, 0, xi2, xi1, s, g, c)) for s in tau1])
        assert np.max(np.abs(inner * c1 / c2 - 1)) <= 1e-8


def test_kernel_field_invariants():
    spec, c = setup(a="1+0.3*x+0.2*cos(2*pi*(t-x))", a1="0.5", a2="0.2")
    spec = ProblemSpec(**{**spec.__dict__, "k": 3})
    field = CharField.build(spec, G, c)
    kf = KernelField.build(field, c, spec.k)
    assert len(kf.foot_c[1]) == 4
    for j in (1, 2):
        for level in kf.foot_c[j]:
            assert np.all(level > 0)
    np.testing.assert_array_equal(kf.foot_c[1][0][0], 1.0)
    np.testing.assert_array_equal(kf.foot_c[2][2][-1], 1.0)
    assert np.all(kf.step_d[1][1:] < 0) and np.all(kf.step_d[2][:-1] > 0)
