import math

import numpy as np
import pytest
from scipy import integrate, optimize

from maxkant.kernels import (COMPACT, REAL_LINE, KernelConditionError, bspline, box, compute_norms,
                             default_chi4_grid, discrete_moment_of_indicator, eval_kernel, fejer,
                             generalized_moment, get_kernel, infimum_on_window, load_kernel_csv,
                             tabulated, verify_chi4)

FEJER_A = 0.5 * (math.sin(math.pi / 4) / (math.pi / 4)) ** 2


def fejer_m1_oracle():
    # maximize sin(t)^2/(pi t) with u = 2t/pi: stationary point solves tan t = 2t
    t = optimize.brentq(lambda t: math.tan(t) - 2 * t, 0.9, 1.5)
    return math.sin(t) ** 2 / (math.pi * t)


def brute_moment(kernel, beta, step=1e-4, K=400):
    x = np.arange(0.0, 1.0 + step, step)
    k = np.arange(-K, K + 1)
    u = x[:, None] - k[None, :]
    return float(np.max(np.abs(kernel(u)) * np.abs(u) ** beta))


class TestEvaluation:
    def test_point_values(self):
        assert eval_kernel(fejer(), 0.0) == pytest.approx(0.5)
        assert eval_kernel(bspline(2), 0.5) == pytest.approx(0.5)
        assert eval_kernel(bspline(2), 3.0) == 0.0

    def test_non_finite_argument_rejected(self):
        with pytest.raises(ValueError):
            eval_kernel(fejer(), float("nan"))

    def test_bspline_partition_of_unity(self):
        x = np.linspace(-3, 3, 1001)
        for order in (2, 3, 4):
            k = bspline(order)
            total = sum(k(x - j) for j in range(-10, 11))
            assert np.max(np.abs(total - 1.0)) < 1e-12

    def test_registry(self):
        assert get_kernel("bspline:2").name == "bspline:2"
        assert get_kernel("box:1").sup_norm == pytest.approx(1.0)
        with pytest.raises(KeyError):
            get_kernel("nope")


class TestNorms:
    def test_hat(self):
        n = compute_norms(bspline(2))
        assert n.sup_norm == pytest.approx(1.0, rel=1e-9)
        assert n.l1_norm == pytest.approx(1.0, rel=1e-9)

    def test_fejer_against_quadrature_oracle(self):
        n = compute_norms(fejer())
        assert n.sup_norm == pytest.approx(0.5, rel=1e-9)
        # oracle: scipy over |x| <= 1e4 in unit panels plus the 1/(pi^2 x^2) mean tail
        f = fejer()
        body = sum(integrate.quad(f, a, a + 1.0, epsabs=1e-14)[0] for a in range(0, 10000))
        oracle = 2 * (body + 1.0 / (math.pi ** 2 * 1e4))
        assert n.l1_norm == pytest.approx(oracle, rel=1e-8)
        assert n.l1_norm == pytest.approx(1.0, rel=1e-8)

    def test_box(self):
        n = compute_norms(box(1.0))
        assert (n.sup_norm, n.l1_norm) == (pytest.approx(1.0), pytest.approx(2.0))

    def test_divergent_tail_rejected(self):
        from maxkant.kernels import Kernel
        k = Kernel("flat", lambda x: np.ones_like(x))
        with pytest.raises(KernelConditionError):
            compute_norms(k)


class TestInfimum:
    def test_hat(self):
        assert infimum_on_window(bspline(2), REAL_LINE) == pytest.approx(0.5, abs=1e-12)
        assert infimum_on_window(bspline(2), COMPACT) == pytest.approx(0.0, abs=1e-12)
        assert not bspline(2).passes_chi2(COMPACT)
        with pytest.raises(KernelConditionError):
            bspline(2).a_chi(COMPACT)

    def test_fejer(self):
        assert infimum_on_window(fejer(), REAL_LINE) == pytest.approx(FEJER_A, rel=1e-10)
        grid = np.arange(-1.5, 1.5 + 1e-5, 1e-5)
        assert fejer().a_chi(COMPACT) == pytest.approx(fejer()(grid).min(), rel=1e-8)


class TestMoments:
    def test_hat_moments(self):
        assert generalized_moment(bspline(2), 0.0) == pytest.approx(1.0)
        assert generalized_moment(bspline(2), 1.0) == pytest.approx(0.25, rel=1e-9)

    def test_fejer_moments(self):
        assert fejer().moment(0.0) == pytest.approx(0.5, rel=1e-9)
        assert fejer().moment(1.0) == pytest.approx(fejer_m1_oracle(), rel=1e-7)

    @pytest.mark.parametrize("spec", ["bspline:2", "bspline:3", "bspline:4", "fejer", "box:1"])
    def test_m0_below_sup_norm(self, spec):
        k = get_kernel(spec)
        assert k.moment(0.0) <= k.sup_norm + 1e-12

    @pytest.mark.parametrize("beta", [0.0, 0.5, 1.0, 1.5])
    def test_fejer_matches_brute_force(self, beta):
        k = fejer()
        assert k.moment(beta) == pytest.approx(brute_moment(k, beta), rel=1e-6)

    def test_truncation_stable_under_grid_refinement(self):
        k = fejer()
        coarse = generalized_moment(k, 1.0, grid_step=2e-3)
        fine = generalized_moment(k, 1.0, grid_step=5e-4)
        assert abs(coarse - fine) < 1e-9

    def test_beyond_decay_warns(self):
        with pytest.warns(RuntimeWarning):
            assert math.isinf(generalized_moment(fejer(), 2.5))


class TestChi4:
    def test_compact_kernel_has_zero_tails(self):
        r = verify_chi4(bspline(2), 0.5, default_chi4_grid())
        assert r.compact and r.M == 0.0 and math.isinf(r.gamma)
        assert all(t == 0.0 for _, t in r.samples)

    def test_fejer_gamma(self):
        r = verify_chi4(fejer(), 0.5, default_chi4_grid())
        assert abs(r.gamma - 0.5) < 0.1
        assert r.gamma_consistent
        for n, t in r.samples:
            assert t <= r.bound(n) * (1 + 1e-12)
        tails = [t for _, t in r.samples]
        assert all(b <= a for a, b in zip(tails, tails[1:]))

    def test_tail_values_match_quadrature(self):
        k = fejer()
        r = verify_chi4(k, 0.5, [16, 64])
        for n, t in r.samples:
            s = n ** 0.5
            ref = 2 * sum(integrate.quad(k, s + j, s + j + 1, epsabs=1e-14)[0] for j in range(20000))
            ref += 2 / (math.pi ** 2 * (s + 20000))
            assert t == pytest.approx(ref, rel=1e-6)

    def test_bad_alpha(self):
        with pytest.raises(ValueError):
            verify_chi4(fejer(), 1.0, [4, 8])


def test_discrete_moment_of_indicator():
    assert discrete_moment_of_indicator() == 2.0
    assert discrete_moment_of_indicator(closed=False) == 1.0


def test_tabulated_kernel_roundtrip(tmp_path):
    p = tmp_path / "k.csv"
    xs = np.linspace(-1, 1, 21)
    p.write_text("x,value\n" + "".join(f"{x},{max(1 - abs(x), 0)}\n" for x in xs))
    k = load_kernel_csv(p)
    assert k.compact
    assert k(np.array([0.25]))[0] == pytest.approx(0.75)
    assert k.l1_norm == pytest.approx(1.0, rel=1e-9)
    assert tabulated(xs, np.maximum(1 - np.abs(xs), 0)).a_chi(REAL_LINE) == pytest.approx(0.5)


def test_report_is_json_ready():
    import json
    rep = bspline(2).report()
    json.dumps(rep)
    assert set(["name", "sup_norm", "l1_norm", "a_chi", "moments", "chi4"]) <= set(rep)
    assert rep["chi4"]["gamma"] == "inf"
