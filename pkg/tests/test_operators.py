import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from conftest import random_step, step_pointwise
from maxkant import signals as S
from maxkant.kernels import KernelConditionError, bspline, fejer
from maxkant.operators import (BaselineUnavailable, ContractViolation, MaxProductOperator,
                               OperatorGuardError, difference_image, error_image,
                               interval_threshold, kantorovich_mean, shifted_error_image)
from maxkant.orlicz import Domain, modular, power, sup_inequality_gap, zygmund

REAL = Domain.real_line()
UNIT = Domain.interval(0, 1)
KERNELS = [bspline(2), fejer()]


def brute_means(f, n, ks):
    out = []
    for k in ks:
        a, b = k / n, (k + 1) / n
        pts = [p for p in (f.breakpoints or ()) if a < p < b]
        out.append(n * integrate.quad(lambda t: float(f(np.array([t]))[0]), a, b, points=pts or None,
                                      epsabs=1e-14, limit=200)[0])
    return np.array(out)


def brute_K(kernel, n, f, x, ks):
    """Direct finite-window evaluation of the max-product ratio."""
    ks = np.asarray(ks)
    m = brute_means(f, n, ks)
    out = []
    for xx in np.atleast_1d(x):
        w = kernel(n * xx - ks)
        out.append(np.max(w * m) / np.max(w))
    return np.array(out)


class TestMeans:
    def test_examples(self):
        assert kantorovich_mean(S.linear(), 0, 2) == pytest.approx(0.25)
        assert kantorovich_mean(S.constant(1.0), 5, 7) == pytest.approx(1.0)
        assert kantorovich_mean(S.indicator(0, 0.5), 0, 1) == pytest.approx(0.5)

    def test_fallback_without_breakpoints(self):
        from dataclasses import replace
        f = replace(S.indicator(0, 0.3), primitive=None, breakpoints=None)
        vals, flagged = f.means_flagged(np.array([0.0]), np.array([1.0]))
        assert flagged and vals[0] == pytest.approx(0.3, abs=1 / 64)


class TestMaxProduct:
    @pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.name)
    def test_reproduces_constants(self, kernel):
        op = MaxProductOperator(kernel, 9, REAL)
        x = np.linspace(-5, 5, 101)
        assert np.max(np.abs(op.apply(S.constant(1.0), x) - 1.0)) < 1e-14

    def test_reproduces_constants_on_interval(self):
        op = MaxProductOperator(fejer(), 9, UNIT)
        x = np.linspace(0, 1, 101)
        assert np.max(np.abs(op.apply(S.constant(1.0), x) - 1.0)) < 1e-14

    def test_indicator_example(self):
        op = MaxProductOperator(bspline(2), 1, REAL)
        assert op.apply(S.indicator(0, 1), 0.5) == pytest.approx(1.0)

    @pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.name)
    @pytest.mark.parametrize("n", [1, 3, 16])
    def test_matches_brute_force(self, kernel, n):
        f = S.sin_squared()
        x = np.linspace(-1.5, 2.5, 37)
        ks = np.arange(-n * 40, n * 40)
        assert np.allclose(MaxProductOperator(kernel, n, REAL).apply(f, x),
                           brute_K(kernel, n, f, x, ks), atol=1e-12)

    def test_matches_brute_force_on_interval(self):
        n = 12
        f = S.hat()
        x = np.linspace(0, 1, 25)
        assert np.allclose(MaxProductOperator(fejer(), n, UNIT).apply(f, x),
                           brute_K(fejer(), n, f, x, np.arange(0, n)), atol=1e-13)

    @pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.name)
    def test_sup_bound(self, kernel, rng):
        op = MaxProductOperator(kernel, 7, REAL)
        bound = kernel.moment(0.0) / kernel.a_chi()
        for _ in range(20):
            f = random_step(rng)
            x = rng.uniform(-3, 3, 50)
            assert np.all(np.abs(op.apply(f, x)) <= bound * f.sup_abs + 1e-12)

    def test_rejects_negative_signal(self):
        with pytest.raises(ContractViolation):
            MaxProductOperator(fejer(), 4, UNIT).apply(S.sine(), 0.3)

    def test_rejects_points_outside_interval(self):
        with pytest.raises(ValueError):
            MaxProductOperator(fejer(), 4, UNIT).apply(S.hat(), 1.5)
        with pytest.raises(ValueError):
            MaxProductOperator(fejer(), 4, REAL).apply(S.hat(), np.nan)


class TestGuards:
    def test_compact_flavor_needs_chi2(self):
        with pytest.raises(KernelConditionError):
            MaxProductOperator(bspline(2), 8, UNIT)

    def test_empty_index_set(self):
        with pytest.raises(OperatorGuardError):
            MaxProductOperator(fejer(), 1, Domain.interval(0, 0.5))
        assert interval_threshold(fejer(), 0, 0.5) == 2
        MaxProductOperator(fejer(), 2, Domain.interval(0, 0.5))

    def test_denominator_guard(self):
        op = MaxProductOperator(fejer(), 4, REAL)
        with pytest.raises(OperatorGuardError, match="chi2"):
            op._guard(np.array([0.5, 0.1]), np.array([0.0, 1.0]))

    def test_bad_n(self):
        with pytest.raises(ValueError):
            MaxProductOperator(fejer(), 0, REAL)

    @pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.name)
    def test_denominator_lower_bound_random(self, kernel, rng):
        op_cache = {}
        a = kernel.a_chi()
        for _ in range(1000):
            n = int(rng.integers(1, 257))
            x = rng.uniform(-50, 50)
            op = op_cache.setdefault(n, MaxProductOperator(kernel, n, REAL))
            assert op._denominator(np.array([n * x]))[0] >= a - 1e-8


class TestAuxiliary:
    @pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.name)
    def test_constants_and_linear(self, kernel):
        op = MaxProductOperator(kernel, 7, REAL)
        x = np.linspace(0, 3, 31)
        assert np.allclose(op.auxiliary(S.constant(1.0), x), 1.0, atol=1e-14)
        assert np.allclose(op.auxiliary(S.linear(), x), x + 1 / 14, atol=1e-13)

    def test_frozen_signal(self):
        op = MaxProductOperator(fejer(), 5, REAL)
        x = 0.37
        fx = float(S.hat()(np.array([x]))[0])
        assert op.auxiliary(S.constant(fx), x) == pytest.approx(fx)

    def test_negative_means_meet_the_zero_limit(self):
        # sup over k of m * chi(nx - k) with m < 0 approaches 0 from the far terms
        op = MaxProductOperator(bspline(2), 4, REAL)
        assert op.auxiliary(S.linear(), -2.0) == 0.0

    def test_interval_rejected(self):
        with pytest.raises(ValueError):
            MaxProductOperator(fejer(), 4, UNIT).auxiliary(S.hat(), 0.5)

    @pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.name)
    def test_triangle_through_operator(self, kernel, rng):
        n = 6
        op = MaxProductOperator(kernel, n, REAL)
        f = S.hat()
        ks = np.arange(-40, 41)
        for x in rng.uniform(-1.5, 1.5, 8):
            lhs = abs(op.apply(f, x) - op.auxiliary(f, x))
            terms = []
            for k in ks:
                a, b = k / n, (k + 1) / n
                g = lambda t: abs(float(f(np.array([t]))[0]) - float(f(np.array([t + x - k / n]))[0]))
                pts = sorted({p for p in (-1, 0, 1, -1 - x + k / n, -x + k / n, 1 - x + k / n)
                              if a < p < b})
                terms.append(kernel(n * x - k) * n * integrate.quad(g, a, b, points=pts or None,
                                                                   epsabs=1e-13)[0])
            rhs = max(terms) / np.max(kernel(n * x - ks))
            assert lhs <= rhs + 1e-10


class TestShifted:
    def test_constant(self):
        op = MaxProductOperator(fejer(), 8, REAL)
        assert op.shifted_apply(S.constant(-0.7), 0.3, -0.7) == pytest.approx(-0.7)

    def test_zero_shift_is_identity(self):
        op = MaxProductOperator(fejer(), 8, REAL)
        x = np.linspace(-2, 2, 41)
        assert np.array_equal(op.shifted_apply(S.hat(), x, 0.0), op.apply(S.hat(), x))

    def test_sine_brute_force(self):
        n = 16
        op = MaxProductOperator(fejer(), n, UNIT)
        x = np.linspace(0, 1, 17)
        lifted = S.sine().minus_const(-1.0)
        ref = brute_K(fejer(), n, lifted, x, np.arange(0, n)) - 1.0
        assert np.allclose(op.shifted_apply(S.sine(), x, -1.0), ref, atol=1e-13)

    def test_contract_violation(self):
        op = MaxProductOperator(fejer(), 8, UNIT)
        with pytest.raises(ContractViolation):
            op.shifted_apply(S.sine(), 0.5, -0.5)


class TestLinearBaseline:
    def test_constants(self):
        for kernel in KERNELS:
            op = MaxProductOperator(kernel, 5, REAL)
            assert np.allclose(op.linear_apply(S.constant(1.0), np.linspace(-1, 1, 11)), 1.0,
                               atol=1e-12)

    def test_hat_partition_of_unity(self):
        op = MaxProductOperator(bspline(2), 3, REAL)
        x = np.linspace(-2, 2, 101)
        den = sum(bspline(2)(3 * x - k) for k in range(-20, 21))
        assert np.max(np.abs(den - 1.0)) < 1e-14
        # indicator of [0, 1] at x = 0.5 with n = 1: M2(0.5)*1 + M2(-0.5)*0 over a unit sum
        assert MaxProductOperator(bspline(2), 1, REAL).linear_apply(S.indicator(0, 1), 0.5) == \
            pytest.approx(0.5)
        assert op.linear_truncation_bound() == 0.0

    def test_fejer_truncation_reported(self):
        op = MaxProductOperator(fejer(), 3, REAL)
        assert 0 < op.linear_truncation_bound() < 1e-3

    def test_unavailable(self):
        from maxkant.kernels import Kernel
        # chi(0) + chi(1) + chi(-1) = 1 - 0.5 - 0.5 = 0
        odd = Kernel("odd", lambda x: np.select([np.abs(x) <= 0.5, (np.abs(x) > 0.75) & (np.abs(x) <= 1)],
                                                [1.0, -0.5], 0.0), support=(-1.0, 1.0))
        op = MaxProductOperator(odd, 1, REAL)
        with pytest.raises(BaselineUnavailable):
            op.linear_apply(S.hat(), 0.0)


class TestImages:
    def _oracle(self, kernel, n, f, phi, lo, hi):
        ks = np.arange(math.floor(n * lo) - 60, math.ceil(n * hi) + 60)
        grid_pts = sorted(set(np.arange(math.floor(n * lo), math.ceil(n * hi) + 1) / n)
                          | {p for p in f.breakpoints if lo < p < hi} | {lo, hi})
        m = brute_means(f, n, ks)

        def resid(t):
            w = kernel(n * t - ks)
            return phi.scalar(abs(np.max(w * m) / np.max(w) - float(f(np.array([t]))[0])))
        total = 0.0
        for a, b in zip(grid_pts[:-1], grid_pts[1:]):
            total += integrate.quad(resid, a, b, epsabs=1e-13, limit=200)[0]
        return total

    def test_compact_residual_against_oracle(self):
        n, f, phi = 8, S.hat(), power(2)
        img = error_image(MaxProductOperator(bspline(2), n, REAL), f)
        assert img.tail(phi, 1.0) == 0.0
        ref = self._oracle(bspline(2), n, f, phi, img.lo, img.hi)
        rep = img.modular(phi, 1.0)
        assert abs(rep.value - ref) <= rep.error
        assert rep.error < 1e-4 * ref

    def test_fejer_residual_against_oracle(self):
        n, f, phi = 8, S.hat(), power(1)
        img = error_image(MaxProductOperator(fejer(), n, REAL), f)
        inner = self._oracle(fejer(), n, f, phi, img.lo, img.hi)
        rep = img.modular(phi, 1.0)
        assert inner <= rep.value
        assert abs(rep.value - rep.tail_bound - inner) <= rep.error
        # the reported tail must dominate the residual integrated just outside the window
        outside = self._oracle(fejer(), n, f, phi, img.hi, img.hi + 16) \
            + self._oracle(fejer(), n, f, phi, img.lo - 16, img.lo)
        assert outside <= rep.tail_bound < 0.05 * rep.value

    def test_shifted_image_with_zero_shift(self):
        op = MaxProductOperator(fejer(), 16, REAL)
        a = error_image(op, S.hat()).modular(power(2), 1.0).value
        b = shifted_error_image(op, S.hat(), 0.0).modular(power(2), 1.0).value
        assert a == b


@st.composite
def operator_case(draw):
    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = np.random.default_rng(seed)
    kernel = KERNELS[draw(st.integers(0, 1))]
    n = draw(st.integers(1, 64))
    lam = draw(st.floats(0, 10))
    return kernel, n, lam, random_step(rng), random_step(rng), rng.uniform(-3, 3, 16)


@settings(max_examples=60, deadline=None)
@given(operator_case())
def test_algebraic_properties(case):
    kernel, n, lam, f, g, x = case
    op = MaxProductOperator(kernel, n, REAL)
    Kf, Kg = op.apply(f, x), op.apply(g, x)
    upper = step_pointwise(f, g, np.maximum)
    assert np.all(Kf <= op.apply(upper, x) + 1e-8)
    assert np.all(op.apply(f.plus(g), x) <= Kf + Kg + 1e-8)
    assert np.all(np.abs(Kf - Kg) <= op.apply(step_pointwise(f, g, lambda a, b: np.abs(a - b)), x)
                  + 1e-8)
    assert np.allclose(op.apply(f.scaled(lam), x), lam * Kf, atol=1e-8)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1e3), min_size=1, max_size=30))
def test_sup_below_sum(values):
    assert max(values) <= sum(values)
    for phi in (power(1.5), zygmund(1, 1)):
        assert sup_inequality_gap(phi, values) >= 0


@settings(max_examples=12, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([power(1), power(2), zygmund(1, 1)]),
       st.sampled_from([2, 5, 17]))
def test_modular_inequality(seed, phi, n):
    rng = np.random.default_rng(seed)
    f, g = random_step(rng), random_step(rng)
    for kernel in KERNELS:
        op = MaxProductOperator(kernel, n, REAL)
        lam = 0.5
        lhs = difference_image(op, f, g).modular(phi, lam).value
        m0, a = kernel.moment(0.0), kernel.a_chi()
        rhs = kernel.l1_norm / m0 * modular(phi, f.minus(g), m0 / a * 2 * lam, REAL).value
        assert lhs <= rhs + 1e-8
