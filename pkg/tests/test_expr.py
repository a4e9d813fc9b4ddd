import math

import numpy as np
import pytest

from tsgeom import expr
from tsgeom.expr import (
    Binary, Const, Coord, Evaluator, EvalDomainError, ParseError, Unary,
    UnknownIdentifier, eval_fd, eval_jet, parse, render_named,
)


def central_diff_grad(f, p, h=1e-5):
    p = np.asarray(p, dtype=float)
    g = np.zeros_like(p)
    for i in range(p.size):
        dp = np.zeros_like(p)
        dp[i] = h
        g[i] = (f(p + dp) - f(p - dp)) / (2 * h)
    return g


def central_diff_hess(f, p, h=1e-5):
    p = np.asarray(p, dtype=float)
    d = p.size
    H = np.zeros((d, d))
    for i in range(d):
        for j in range(d):
            dpi = np.zeros(d); dpi[i] = h
            dpj = np.zeros(d); dpj[j] = h
            H[i, j] = (f(p + dpi + dpj) - f(p + dpi - dpj)
                       - f(p - dpi + dpj) + f(p - dpi - dpj)) / (4 * h * h)
    return H


class TestParse:
    def test_power_plus_coord(self):
        ast = parse("x^2 + y", ["x", "y", "z"])
        assert ast == Binary("+", Binary("^", Coord(0), Const(2.0)), Coord(1))

    def test_exp_of_product(self):
        ast = parse("exp(2*t)", ["t", "x", "y"])
        assert ast == Unary("exp", Binary("*", Const(2.0), Coord(0)))

    def test_malformed_input_position(self):
        with pytest.raises(ParseError) as err:
            parse("x +* y", ["x", "y"])
        assert err.value.position == 3

    def test_unknown_identifier(self):
        with pytest.raises(UnknownIdentifier) as err:
            parse("x + w", ["x", "y"])
        assert err.value.name == "w"

    def test_unknown_function(self):
        with pytest.raises(UnknownIdentifier):
            parse("tan(x)", ["x"])

    def test_unbalanced_paren(self):
        with pytest.raises(ParseError):
            parse("(x + y", ["x", "y"])

    def test_empty(self):
        with pytest.raises(ParseError):
            parse("   ", ["x"])

    def test_unary_minus(self):
        ast = parse("-y", ["x", "y"])
        assert ast == Unary("neg", Coord(1))

    def test_non_constant_exponent_rejected(self):
        with pytest.raises(ParseError):
            parse("x^y", ["x", "y"])

    def test_negative_exponent_folds(self):
        ast = parse("x^-2", ["x"])
        assert ast == Binary("^", Coord(0), Const(-2.0))

    def test_roundtrip_stability(self):
        names = ["x", "y", "z"]
        sources = [
            "x^2 + y",
            "exp(2*x)",
            "x*y + sin(x)",
            "0.5*(z - y*x)",
            "sqrt(x*x + 1) / (2 + cos(y))",
            "neg(z) - x^3",
            "-1.5*y + x^0.5",
        ]
        for s in sources:
            ast = parse(s, names)
            assert parse(render_named(ast, names), names) == ast


class TestEvalJet:
    def test_square(self):
        j = eval_jet(parse("x^2", ["x"]), [3.0])
        assert j.value == pytest.approx(9.0)
        assert j.grad == pytest.approx([6.0])
        assert j.hess == pytest.approx(np.array([[2.0]]))

    def test_exp_chain(self):
        j = eval_jet(parse("exp(2*t)", ["t"]), [0.0])
        assert j.value == pytest.approx(1.0)
        assert j.grad == pytest.approx([2.0])
        assert j.hess == pytest.approx(np.array([[4.0]]))

    def test_product_plus_sin_vs_central_differences(self):
        # oracle: plain second-order central differences, step 1e-5
        e = parse("x*y + sin(x)", ["x", "y"])
        p = np.array([0.0, 5.0])

        def f(q):
            return q[0] * q[1] + math.sin(q[0])

        j = eval_jet(e, p)
        assert j.value == pytest.approx(f(p))
        assert j.grad == pytest.approx(central_diff_grad(f, p), abs=1e-8)
        assert j.hess == pytest.approx(central_diff_hess(f, p), abs=1e-8)
        assert j.grad == pytest.approx([6.0, 0.0])
        assert j.hess == pytest.approx(np.array([[0.0, 1.0], [1.0, 0.0]]))

    def test_division_and_sqrt(self):
        e = parse("sqrt(x) / y", ["x", "y"])
        p = np.array([4.0, 2.0])
        j = eval_jet(e, p)

        def f(q):
            return math.sqrt(q[0]) / q[1]

        assert j.value == pytest.approx(1.0)
        assert j.grad == pytest.approx(central_diff_grad(f, p), abs=1e-7)
        assert j.hess == pytest.approx(central_diff_hess(f, p), abs=1e-6)

    def test_real_exponent(self):
        e = parse("x^2.5", ["x"])
        p = np.array([1.7])
        j = eval_jet(e, p)
        assert j.value == pytest.approx(1.7 ** 2.5)
        assert j.grad[0] == pytest.approx(2.5 * 1.7 ** 1.5)
        assert j.hess[0, 0] == pytest.approx(2.5 * 1.5 * 1.7 ** 0.5)

    def test_large_integer_exponent(self):
        e = parse("x^9", ["x"])  # > repeated-multiplication limit, exp/log path
        j = eval_jet(e, np.array([1.3]))
        assert j.value == pytest.approx(1.3 ** 9, rel=1e-12)
        assert j.grad[0] == pytest.approx(9 * 1.3 ** 8, rel=1e-10)

    def test_domain_errors(self):
        with pytest.raises(EvalDomainError):
            eval_jet(parse("log(x)", ["x"]), [-1.0])
        with pytest.raises(EvalDomainError):
            eval_jet(parse("sqrt(x)", ["x"]), [-0.5])
        with pytest.raises(EvalDomainError):
            eval_jet(parse("1/x", ["x"]), [0.0])

    def test_reevaluation_bit_identical(self):
        e = parse("x*y + sin(x)*exp(y) - 0.25*x^3", ["x", "y"])
        p = np.array([0.37, -0.81])
        j1 = eval_jet(e, p)
        j2 = eval_jet(e, p)
        assert np.array_equal(j1.value, j2.value)
        assert np.array_equal(j1.grad, j2.grad)
        assert np.array_equal(j1.hess, j2.hess)

    def test_hessian_exactly_symmetric(self):
        e = parse("sin(x*y)*exp(x - 0.5*z) + x/(2 + y^2)", ["x", "y", "z"])
        rng = np.random.default_rng(3)
        for _ in range(20):
            p = rng.uniform(-1, 1, size=3)
            h = eval_jet(e, p).hess
            assert np.array_equal(h, h.T)

    def test_batched_matches_pointwise(self):
        e = parse("x*exp(y) + y^2", ["x", "y"])
        pts = np.random.default_rng(5).uniform(-1, 1, size=(7, 2))
        batch = expr.eval_jet_batch(e, pts)
        for i, p in enumerate(pts):
            single = eval_jet(e, p)
            assert batch.value[i] == pytest.approx(single.value)
            assert batch.grad[i] == pytest.approx(single.grad)
            assert batch.hess[i] == pytest.approx(single.hess)


class TestFdOracle:
    # property from the module contract: jet gradient/Hessian agree with
    # Richardson 4th-order central differences (step 1e-3) within 1e-7 relative
    SOURCES = [
        "x^2 + y",
        "exp(2*x)",
        "x*y + sin(x)",
        "0.5*(z - y*x)",
        "sqrt(x + 2) / (2 + cos(y))",
        "exp(x)*sin(y) - z^3 + x/(y + 3)",
    ]

    @pytest.mark.parametrize("src", SOURCES)
    def test_jet_vs_richardson_fd(self, src):
        names = ["x", "y", "z"]
        e = parse(src, names)
        rng = np.random.default_rng(11)
        for _ in range(10):
            p = rng.uniform(-1, 1, size=3)
            jj = eval_jet(e, p)
            jf = eval_fd(e, p, step=1e-3)
            scale_g = 1.0 + np.abs(jj.grad)
            scale_h = 1.0 + np.abs(jj.hess)
            assert np.all(np.abs(jj.grad - jf.grad) / scale_g < 1e-7)
            assert np.all(np.abs(jj.hess - jf.hess) / scale_h < 1e-7)

    def test_evaluator_modes(self):
        e = parse("exp(x)*y", ["x", "y"])
        p = np.array([0.2, 0.4])
        jjet = Evaluator("jet").jet(e, p)
        jfd = Evaluator("fd", 1e-3).jet(e, p)
        assert jfd.value == pytest.approx(jjet.value)
        assert jfd.grad == pytest.approx(jjet.grad, abs=1e-9)
        assert jfd.hess == pytest.approx(jjet.hess, abs=1e-8)


class TestBuilders:
    def test_smart_constructors_fold(self):
        x = expr.coord(0)
        assert expr.add(expr.const(0), x) == x
        assert expr.mul(expr.const(0), x) == expr.ZERO
        assert expr.mul(expr.const(1), x) == x
        assert expr.neg(expr.const(2)).value == -2.0

    def test_coords_under_exp(self):
        e = parse("exp(2*t) + x", ["t", "x", "y"])
        assert expr.coords_under_exp(e) == {0}
        assert expr.free_coords(e) == {0, 1}
