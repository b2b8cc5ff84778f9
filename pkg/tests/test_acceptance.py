"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines inline;
they are also collected in the terminal summary.
"""
import math
import time

import numpy as np
import pytest

from periodic_hyperbolic.characteristics import tau_at, tau_partials, trace
from periodic_hyperbolic.diagnostics import (
    EpsFamily,
    convergence_study,
    kernel_dimension,
    manufacture,
    sweep_epsilon,
)
from periodic_hyperbolic.kernels import compute_c
from periodic_hyperbolic.problem import Coefficients, GridSpec, ProblemSpec
from periodic_hyperbolic.resonance import analyze
from periodic_hyperbolic.solver import DiscreteOperators, SolveOptions, assemble_dense, solve

from conftest import M1_W, sup

LINES = []


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    LINES.append(line)
    print(line)
    assert ok, line


def coeffs(**kw):
    return Coefficients(ProblemSpec.from_strings(**kw))


def test_criterion_1_manufactured_m1():
    m = manufacture(M1_W, a="1", a1="-1")
    start = time.perf_counter()
    study = convergence_study(m, [GridSpec(n + 1, n) for n in (64, 128, 256)])
    elapsed = time.perf_counter() - start
    rel128 = study.relative_errors[1]
    ok = rel128 <= 1e-3 and all(1.7 <= o <= 2.3 for o in study.orders) and elapsed <= 60
    orders = ", ".join(f"{o:.3f}" for o in study.orders)
    report(1, ok, f"rel err 128^2 = {rel128:.2e}, orders [{orders}], {elapsed:.1f} s")


def test_criterion_2_characteristics():
    g = GridSpec(256, 16)
    closed = 0.0
    for a, speed in (("1", 1.0), ("2", 2.0), ("0.5", 0.5)):
        c = coeffs(a=a)
        for j in (1, 2):
            x = 1.0 if j == 1 else 0.0
            tr = trace(j, x, np.array([0.0, 0.3]), g, c)
            expected = np.array([0.0, 0.3])[None] + (-1) ** j * (g.x - x)[:, None] / speed
            closed = max(closed, sup(tr.tau - expected))
    log2 = abs(tau_at(1, 0.0, 1.0, 0.0, g, coeffs(a="1+x")) - math.log(2))
    defect = 0.0
    for a in ("1+x", "1+0.3*x+0.2*cos(2*pi*(t-x))"):
        c = coeffs(a=a)
        for j in (1, 2):
            for x in (0.0, float(g.x[100]), 1.0):
                tr = trace(j, x, 0.4, g, c, weights=False, inverse=False)
                for m in (0, 91, 255):
                    xi = float(g.x[m])
                    defect = max(defect, abs(tau_at(j, x, xi, float(tr.tau[m]), g, c) - 0.4))
    ok = closed <= 1e-12 and log2 <= 1e-8 and defect <= 1e-9
    report(2, ok, f"closed form {closed:.1e}, ln 2 defect {log2:.1e}, round trip {defect:.1e}")


SUITE = ["1", "2", "1+x", "1+0.1*sin(2*pi*t)", "1+0.3*x+0.2*cos(2*pi*(t-x))"]


def test_criterion_3_derivative_formulas():
    g = GridSpec(129, 16)
    h = 1e-5
    worst = 0.0
    for a in SUITE:
        c = coeffs(a=a)
        for j, xi, x in ((1, 0.0, 0.5), (2, 1.0, 0.5), (1, 0.25, 0.75), (2, 0.875, 0.25)):

            def tau(xx, tt):
                return float(trace(j, xx, tt, g, c, weights=False, inverse=False).at(xi))

            fd = np.array([(tau(x + h, 0.3) - tau(x - h, 0.3)) / (2 * h), (tau(x, 0.3 + h) - tau(x, 0.3 - h)) / (2 * h)])
            got = np.array(tau_partials(j, xi, x, 0.3, g, c), dtype=float)
            worst = max(worst, float(np.max(np.abs(got - fd) / np.abs(fd))))
    report(3, worst <= 1e-4, f"max relative deviation {worst:.1e} over {len(SUITE)} speeds")


def test_criterion_4_kernel_cocycle():
    g = GridSpec(256, 8)
    t = g.t(1.0)
    closed = 0.0
    for a1, a2 in (("1", "0"), ("-1", "0.5"), ("0.3", "-0.7")):
        c = coeffs(a="1", a1=a1, a2=a2)
        b = {1: (float(a1) + float(a2)) / 2, 2: (float(a1) - float(a2)) / 2}
        for j in (1, 2):
            for x in (0.0, 0.5, 1.0):
                for xi in (0.0, float(g.x[77]), 1.0):
                    expected = math.exp((-1) ** j * b[j] * (xi - x))
                    closed = max(closed, float(np.max(np.abs(compute_c(j, 0, xi, x, t, g, c) / expected - 1))))
    g = GridSpec(129, 8)
    t = g.t(1.0)
    cocycle = 0.0
    for kw in (dict(a="1+0.3*x+0.2*cos(2*pi*(t-x))", a1="0.5", a2="0.2"), dict(a="1+0.1*sin(2*pi*t)", a1="-1+x*cos(2*pi*t)")):
        c = coeffs(**kw)
        for j in (1, 2):
            x = 1.0 if j == 1 else 0.0
            xi1, xi2 = (0.5, 0.25) if j == 1 else (0.5, 0.75)
            tau1 = trace(j, x, t, g, c).at(xi1)
            inner = np.array([float(compute_c(j, 0, xi2, xi1, s, g, c)) for s in tau1])
            ratio = inner * compute_c(j, 0, xi1, x, t, g, c) / compute_c(j, 0, xi2, x, t, g, c)
            cocycle = max(cocycle, float(np.max(np.abs(ratio - 1))))
    report(4, cocycle <= 1e-8 and closed <= 1e-10, f"cocycle {cocycle:.1e}, closed form {closed:.1e}")


def test_criterion_5_resonance():
    g = GridSpec(65, 32)

    def run(a1):
        return analyze(ProblemSpec.from_strings(a="1", a1=a1, k=3), g)

    damped, anti, free = run("-1"), run("1"), run("0")
    err_damped = max(abs(q - math.exp(-1)) for q in damped.q[:4])
    err_anti = max(abs(q - math.e) for q in anti.q[:4])
    ok = (
        err_damped <= 1e-6
        and err_anti <= 1e-6
        and damped.verdicts["small1"]
        and anti.verdicts["small11"]
        and not any(free.verdicts.values())
    )
    report(5, ok, f"|q_l - 1/e| {err_damped:.1e}, |q_l - e| {err_anti:.1e}, a1=0 verdicts {sorted(free.verdicts.values())}")


def test_criterion_6_invert_ImB_ratios():
    g = GridSpec(33, 32)
    X, T = g.mesh(1.0)
    rhs = np.stack([np.sin(2 * np.pi * T) + X, np.cos(2 * np.pi * T) * X])
    worst, seen = 0.0, set()
    for a1, a2 in (("-1", "0"), ("1", "0"), ("-2", "0.5"), ("0.5", "-1")):
        spec = ProblemSpec.from_strings(a="1", a1=a1, a2=a2)
        q0 = analyze(spec, g).q[0]
        _, info = DiscreteOperators(spec, g).invert_ImB(rhs, return_info=True)
        seen.add(info.direction)
        # reversed mode contracts with 1/q0
        factor = min(q0, 1 / q0)
        ratios = np.asarray(info.update_ratios)
        worst = max(worst, float(np.max(np.abs(ratios / factor - 1))))
    ok = worst <= 0.1 and seen == {"forward", "backward"}
    report(6, ok, f"max |ratio/q0 - 1| = {worst:.2e}, modes {sorted(seen)}")


G33 = GridSpec(33, 32)


def test_criterion_7_dense_vs_picard_and_svd(telegraph):
    ops = DiscreteOperators(telegraph, G33)
    picard = solve(telegraph, G33, SolveOptions(strategy="picard"), ops=ops)
    dense = solve(telegraph, G33, SolveOptions(strategy="dense"), ops=ops)
    diff = sup(picard.w.values - dense.w.values)
    M = assemble_dense(ops)
    dim, tail = kernel_dimension(M)
    ratio = tail[0] / np.linalg.norm(M, 2)
    resonant = DiscreteOperators(ProblemSpec.from_strings(a="1", r0="1", r1="1"), G33)
    Mr = assemble_dense(resonant)
    ratio_r = kernel_dimension(Mr)[1][0] / np.linalg.norm(Mr, 2)
    ok = picard.converged and diff <= 1e-7 and dim == 0 and ratio > 1e-3 and ratio_r <= 1e-3 * ratio
    report(7, ok, f"dense-picard {diff:.1e}, dim {dim}, sigma ratio {ratio:.2e} vs resonant {ratio_r:.1e}")


def test_criterion_8_linearity(telegraph):
    opts = SolveOptions()
    base = dict(a="1", a1="-1")
    zero = sup(solve(ProblemSpec.from_strings(**base), G33, opts).w.values)
    w1 = solve(ProblemSpec.from_strings(**base, f="exp(x)*sin(2*pi*t)"), G33, opts).w.values
    w2 = solve(ProblemSpec.from_strings(**base, f="x*cos(2*pi*t)"), G33, opts).w.values
    w12 = solve(ProblemSpec.from_strings(**base, f="exp(x)*sin(2*pi*t)+x*cos(2*pi*t)"), G33, opts).w.values
    sup_defect = sup(w12 - w1 - w2)
    ok = zero <= 10 * opts.tol_abs and sup_defect <= 10 * opts.tol_abs
    report(8, ok, f"|w| for f=0: {zero:.1e}, superposition defect {sup_defect:.1e}")


def test_criterion_9_eps_sweep(telegraph):
    opts = SolveOptions()
    flat = sweep_epsilon(EpsFamily(telegraph, (0.0, 0.1, 0.2)), G33, opts)
    spec = ProblemSpec.from_strings(a="1", a1="-1+eps", f="exp(x)*sin(2*pi*t)")
    damped = sweep_epsilon(EpsFamily(spec, (0.0, 0.01, 0.02)), G33, opts)
    ok = flat.max_pairwise_diff <= 10 * opts.tol_abs and damped.richardson_consistent
    report(
        9, ok, f"eps-free pairwise {flat.max_pairwise_diff:.1e}, Richardson step change {damped.richardson_rel_diff:.2e}"
    )


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
