import numpy as np
import pytest

from charnbreak import (
    CharnSpec,
    ConfigError,
    MeanShiftParams,
    Segmentation,
    TimeSeries,
    fit_gamma0,
    fit_psi,
    neg_loglik,
    simulate,
    simulate_with_init,
)
from charnbreak.montecarlo import mix_seed


class TestFitGamma0:
    def test_single_segment_mean(self, iid_spec):
        assert fit_gamma0(TimeSeries([1.0, 2.0, 3.0]), Segmentation(3, min_seg_len=1), iid_spec).tolist() == [2.0]

    def test_constant_segments(self, iid_spec):
        x = TimeSeries(np.r_[np.full(20, 1.5), np.full(30, -4.0)])
        assert fit_gamma0(x, Segmentation(50, (21,)), iid_spec).tolist() == [1.5, -4.0]

    def test_matches_segment_means(self, iid_spec, rng):
        x = TimeSeries(rng.normal(3.0, 2.0, 300))
        seg = Segmentation(300, (77, 150, 222))
        got = fit_gamma0(x, seg, iid_spec)
        ref = [x.values[a:b].mean() for a, b in zip(seg.starts, seg.ends)]
        assert np.max(np.abs(got - ref)) <= 1e-12

    def test_nonconstant_volatility_grid_oracle(self, gauss):
        spec = CharnSpec(vol="exparch", theta=(0.3, 0.5, 0.2))
        seg = Segmentation(150, (70,))
        x, z0 = simulate_with_init(spec, seg, MeanShiftParams([0.5, 1.0]), gauss, seed=3)
        got = fit_gamma0(x, seg, spec, init=z0)
        grid = np.linspace(-1, 3, 4001)
        for j in range(2):
            def crit(g):
                gam = got.copy()
                gam[j] = g
                return neg_loglik(x, spec, gam, seg, init=z0)

            best = grid[np.argmin([crit(g) for g in grid])]
            assert abs(best - got[j]) <= grid[1] - grid[0]

    def test_psi_override(self, ar1_spec, gauss):
        seg = Segmentation(100)
        x = simulate(ar1_spec, seg, MeanShiftParams([1.0]), gauss, seed=2)
        a = fit_gamma0(x, seg, ar1_spec, psi=[0.0, 1.0])
        assert a == pytest.approx([x.values[1:].mean()])


class TestFitPsi:
    def test_ar1_consistency(self, ar1_spec, gauss):
        seg = Segmentation(2000)
        x = simulate(ar1_spec, seg, MeanShiftParams([0.0]), gauss, seed=21)
        fit = fit_psi(x, CharnSpec(trend="linear_ar", rho=(0.1,)), seg, gamma_init=[0.0])
        v = x.values
        ls = v[1:] @ v[:-1] / (v[:-1] @ v[:-1])
        assert 0.45 <= fit.psi_hat[0] <= 0.55
        assert fit.psi_hat[0] == pytest.approx(ls, abs=1e-3)
        assert fit.psi_hat[1] == pytest.approx(1.0, abs=0.06)

    def test_repeatable(self, gauss):
        spec = CharnSpec(trend="expar", rho=(0.5, 0.2, 50.0), vol="exparch", theta=(0.1, 0.0025, 1.0))
        seg = Segmentation(300)
        x = simulate(spec, seg, MeanShiftParams([0.0]), gauss, seed=5)
        a = fit_psi(x, spec, seg, seed=4)
        b = fit_psi(x, spec, seg, seed=4)
        assert np.array_equal(a.psi_hat, b.psi_hat) and a.neg_loglik == b.neg_loglik

    def test_never_worse_than_truth(self, gauss):
        truth = CharnSpec(trend="linear_ar", rho=(0.4,), theta=(1.5,))
        seg = Segmentation(400, (200,))
        for i in range(5):
            x = simulate(truth, seg, MeanShiftParams([0, 0], [0, 2]), gauss, seed=mix_seed(9, i))
            gamma = fit_gamma0(x, seg, truth)
            fit = fit_psi(x, truth, seg, gamma_init=gamma)
            assert fit.neg_loglik <= neg_loglik(x, truth, gamma, seg) + 1e-6

    def test_bounds_respected(self, gauss):
        spec = CharnSpec(vol="exparch", theta=(0.5, 0.1, 0.1))
        seg = Segmentation(300)
        x = simulate(spec, seg, MeanShiftParams([0.0]), gauss, seed=6)
        fit = fit_psi(x, spec, seg)
        assert fit.psi_hat[0] > 0 and fit.psi_hat[1] >= 0 and fit.psi_hat[2] >= 0

    def test_constant_series_degenerate(self, ar1_spec):
        fit = fit_psi(TimeSeries(np.full(50, 2.0)), ar1_spec, Segmentation(50))
        assert fit.degenerate and not fit.converged

    def test_gamma_init_length(self, ar1_spec, rng):
        with pytest.raises(ConfigError):
            fit_psi(TimeSeries(rng.normal(size=60)), ar1_spec, Segmentation(60, (30,)), gamma_init=[0.0])

    def test_too_short(self, ar1_spec):
        with pytest.raises(ConfigError):
            fit_psi(TimeSeries(np.arange(10.0)), ar1_spec, Segmentation(10))

    @pytest.mark.slow
    def test_error_shrinks_with_n(self, ar1_spec, gauss):
        medians = []
        for n in (500, 1000, 2000):
            seg = Segmentation(n)
            errs = []
            for i in range(200):
                x = simulate(ar1_spec, seg, MeanShiftParams([0.0]), gauss, seed=mix_seed(n, i))
                fit = fit_psi(x, ar1_spec, seg, gamma_init=[0.0], restarts=1)
                errs.append(np.abs(fit.psi_hat - ar1_spec.psi).max())
            medians.append(np.median(errs))
        assert medians[0] >= medians[1] >= medians[2]
