import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from charnbreak import (
    CharnSpec,
    ConfigError,
    DomainError,
    GaussianNoise,
    MeanShiftParams,
    PowerEvaluator,
    Segmentation,
    TimeSeries,
    estimate_beta,
    estimated_power,
    power_surface,
    simulate,
    theoretical_power,
    z_alpha,
)
from charnbreak.montecarlo import mix_seed
from charnbreak.power import grid_candidates


class TestTheoreticalPower:
    @pytest.mark.parametrize(
        "varpi, expected, tol",
        [(0.0, 0.05, 1e-15), (z_alpha(0.05), 0.5, 1e-15), (2.5715, 0.8228, 2e-4)],
    )
    def test_values(self, varpi, expected, tol):
        assert theoretical_power(varpi, 0.05) == pytest.approx(expected, abs=tol)

    @pytest.mark.parametrize("varpi", [0.3, 1.0, 2.5715, 4.2])
    def test_against_normal_sf(self, varpi):
        from scipy.stats import norm

        assert theoretical_power(varpi, 0.05) == pytest.approx(norm.sf(norm.isf(0.05) - varpi), rel=1e-12)

    def test_negative(self):
        with pytest.raises(DomainError):
            theoretical_power(-0.1)

    @given(st.floats(0, 8), st.floats(1e-6, 2))
    def test_increasing(self, v, dv):
        assert theoretical_power(v + dv) >= theoretical_power(v)


class TestEstimateBeta:
    def test_identical_segments(self):
        x = TimeSeries(np.full(40, 3.0))
        assert estimate_beta(x, Segmentation(40, (20,))).tolist() == [0.0, 0.0]

    def test_scaled_difference(self):
        x = TimeSeries(np.r_[np.zeros(49), np.full(51, 0.5)])
        assert estimate_beta(x, Segmentation(100, (50,))) == pytest.approx([0.0, 5.0], abs=1e-12)

    def test_user_reference(self):
        x = TimeSeries(np.r_[np.zeros(49), np.full(51, 0.5)])
        got = estimate_beta(x, Segmentation(100, (50,)), gamma0_hat=[0.0, 0.25])
        assert got == pytest.approx([0.0, 2.5])

    def test_ar_consistency(self, ar1_spec, gauss):
        seg = Segmentation(200, (100,))
        shift = MeanShiftParams([0.0, 0.0], [0.0, 5.0])
        b2 = [estimate_beta(simulate(ar1_spec, seg, shift, gauss, seed=mix_seed(1, i)), seg, spec=ar1_spec)[1]
              for i in range(2000)]
        assert np.mean(b2) == pytest.approx(5.0, abs=0.5)


class TestEstimatedPower:
    def test_constant_series(self, iid_spec, gauss):
        out = estimated_power(TimeSeries(np.full(50, 2.0)), iid_spec, Segmentation(50, (25,)), gauss, 0.05)
        assert out.power == pytest.approx(0.05, abs=1e-15)

    def test_true_break_beats_wrong_candidate(self, iid_spec, gauss):
        seg = Segmentation(200, (120,))
        at_truth, at_60 = [], []
        for i in range(300):
            x = simulate(iid_spec, seg, MeanShiftParams([0, 0], [0, 5]), gauss, seed=mix_seed(2, i))
            at_truth.append(estimated_power(x, iid_spec, seg, gauss).power)
            at_60.append(estimated_power(x, iid_spec, Segmentation(200, (60,)), gauss).power)
        assert np.mean(at_truth) > 0.05 + 0.3
        assert np.mean(at_truth) > np.mean(at_60)

    @pytest.mark.xfail(
        strict=True,
        reason="root-n scaled magnitude estimates keep varpi_hat of order one without a change, "
        "so the null power curve sits well above alpha",
    )
    def test_null_curve_flat(self, iid_spec, gauss):
        x = simulate(iid_spec, Segmentation(200), MeanShiftParams([0.0]), gauss, seed=12)
        power, _, _ = PowerEvaluator(x, iid_spec, gauss).evaluate(np.arange(30, 171))
        assert power.min() >= 0.05 and power.max() <= 0.06

    @pytest.mark.parametrize("spec_name", ["iid_spec", "ar1_spec", "expar_spec"])
    def test_evaluator_matches_reference(self, spec_name, request, gauss):
        spec = request.getfixturevalue(spec_name)
        seg = Segmentation(150, (50, 100))
        x = simulate(spec, seg, MeanShiftParams([0, 0, 0], [0, 3, -2]), gauss, seed=4)
        ev = PowerEvaluator(x, spec, gauss)
        cands = np.array([[40, 90], [50, 100], [61, 140]])
        power, varpi, beta = ev.evaluate(cands)
        for row, p, v, b in zip(cands, power, varpi, beta):
            ref = estimated_power(x, spec, Segmentation(150, tuple(row)), gauss)
            assert p == pytest.approx(ref.power, rel=1e-10)
            assert v == pytest.approx(ref.varpi_hat, rel=1e-10)
            assert np.allclose(b, ref.beta_hat, rtol=1e-10, atol=1e-10)

    def test_window_equals_subseries(self, iid_spec, gauss):
        x = simulate(iid_spec, Segmentation(120), MeanShiftParams([0.0]), gauss, seed=6)
        sub = TimeSeries(x.values[29:90])
        got = PowerEvaluator(x, iid_spec, gauss).evaluate(np.array([50, 70]), lo=30, hi=90)
        ref = PowerEvaluator(sub, iid_spec, gauss).evaluate(np.array([21, 41]))
        for a, b in zip(got, ref):
            assert np.allclose(a, b, rtol=1e-12)

    def test_rotation_equals_rolled_series(self, iid_spec, gauss):
        x = simulate(iid_spec, Segmentation(100), MeanShiftParams([0.0]), gauss, seed=7)
        got = PowerEvaluator(x, iid_spec, gauss).rotated(15).evaluate(np.array([60]))
        ref = PowerEvaluator(TimeSeries(np.roll(x.values, -15)), iid_spec, gauss).evaluate(np.array([60]))
        assert np.allclose(got[0], ref[0], rtol=1e-12)

    def test_first_reference(self, iid_spec, gauss):
        x = TimeSeries(np.r_[np.zeros(30), np.ones(30), np.full(40, 3.0)])
        _, _, beta = PowerEvaluator(x, iid_spec, gauss, reference="first").evaluate(np.array([[31, 61]]))
        assert beta[0] == pytest.approx([0.0, 10.0, 30.0])

    def test_bad_candidates(self, iid_spec, gauss):
        ev = PowerEvaluator(TimeSeries(np.arange(30.0)), iid_spec, gauss)
        with pytest.raises(ConfigError):
            ev.evaluate(np.array([[20, 10]]))


class TestPowerSurface:
    def test_singleton(self, iid_spec, gauss):
        x = simulate(iid_spec, Segmentation(80), MeanShiftParams([0.0]), gauss, seed=1)
        surf = power_surface(x, iid_spec, [Segmentation(80, (40,))], gauss)
        ref = estimated_power(x, iid_spec, Segmentation(80, (40,)), gauss)
        assert list(surf) == [(40,)]
        assert surf[(40,)].power == pytest.approx(ref.power, rel=1e-12)

    def test_cardinality_and_order(self, iid_spec, gauss):
        x = simulate(iid_spec, Segmentation(200), MeanShiftParams([0.0]), gauss, seed=1)
        cands = grid_candidates(range(40, 61), range(130, 151))
        surf = power_surface(x, iid_spec, cands[::-1], gauss)
        assert len(surf) == 21 * 21
        assert list(surf) == sorted(surf)

    def test_partial_failures(self, iid_spec, gauss):
        x = simulate(iid_spec, Segmentation(50), MeanShiftParams([0.0]), gauss, seed=1)
        surf = power_surface(x, iid_spec, [(20,), (60,), (1,)], gauss)
        assert list(surf) == [(20,)]
        assert set(surf.errors) == {(60,), (1,)}

    def test_argmax_ties_lexicographic(self, iid_spec, gauss):
        surf = power_surface(TimeSeries(np.ones(40)), iid_spec, [(30,), (10,), (20,)], gauss)
        assert surf.argmax() == (10,)

    @pytest.mark.xfail(
        strict=True,
        reason="plug-in magnitude noise n2 (1/n1 + 1/n2) grows for short first segments, "
        "so the argmax over a wide grid drifts toward its left edge",
    )
    def test_argmax_near_true_break(self, iid_spec, gauss):
        seg = Segmentation(200, (120,))
        hits = []
        for i in range(200):
            x = simulate(iid_spec, seg, MeanShiftParams([0, 0], [0, 5]), gauss, seed=mix_seed(3, i))
            hits.append(power_surface(x, iid_spec, [(t,) for t in range(30, 171)], gauss).argmax()[0])
        assert abs(np.mean(hits) - 120) <= 2

    @settings(max_examples=15, deadline=None)
    @given(st.floats(0.1, 100))
    def test_argmax_scale_invariant(self, c):
        spec, g = CharnSpec(), GaussianNoise()
        x = simulate(spec, Segmentation(100, (60,)), MeanShiftParams([0, 0], [0, 8]), g, seed=2)
        cands = [(t,) for t in range(20, 90)]
        a = power_surface(x, spec, cands, g).argmax()
        b = power_surface(TimeSeries(c * x.values), spec, cands, g).argmax()
        assert a == b
