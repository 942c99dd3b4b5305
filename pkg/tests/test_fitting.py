import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from zenodecay.exceptions import ValidationError
from zenodecay.fitting import (
    ExponentialDecayRegressor,
    LorentzianRegressor,
    default_window,
    fit_exponential,
    fit_lorentzian,
    lorentzian,
)
from zenodecay.stochastic import SurvivalCurve


class TestExponential:
    def test_exact_exponential(self):
        t = np.linspace(0, 10, 50)
        fit = fit_exponential(np.column_stack([t, np.exp(-0.5 * t)]), window=(0, 10))
        assert abs(fit.rate - 0.5) < 1e-9
        assert fit.rms_log_residual < 1e-12
        assert abs(fit.tau - 2.0) < 1e-8
        assert fit.n_points == 50

    def test_constant_curve(self):
        t = np.linspace(0, 5, 20)
        fit = fit_exponential(np.column_stack([t, np.ones_like(t)]))
        assert fit.rate == 0.0
        assert fit.tau == math.inf

    def test_default_window_skips_first_five_percent(self):
        assert default_window(10.0) == (0.5, 10.0)
        t = np.linspace(0, 10, 101)
        y = np.exp(-0.3 * t)
        y[:5] = 0.0  # would break the log fit if included
        fit = fit_exponential(SurvivalCurve(t, y, np.zeros_like(y)))
        assert abs(fit.rate - 0.3) < 1e-12
        assert fit.window == (0.5, 10.0)

    def test_window_needs_three_points(self):
        t = np.linspace(0, 1, 11)
        with pytest.raises(ValidationError, match="need >= 3"):
            fit_exponential(np.column_stack([t, np.exp(-t)]), window=(0.0, 0.15))

    def test_non_positive_in_window(self):
        t = np.linspace(0, 1, 11)
        y = np.exp(-t)
        y[5] = 0.0
        with pytest.raises(ValidationError, match="positive"):
            fit_exponential(np.column_stack([t, y]), window=(0, 1))

    def test_degenerate_window(self):
        with pytest.raises(ValidationError):
            ExponentialDecayRegressor(window=(1.0, 1.0)).fit(np.arange(5.0), np.ones(5))

    @settings(max_examples=40, deadline=None)
    @given(rate=st.floats(0.0, 5.0), amp=st.floats(0.1, 2.0))
    def test_recovers_any_rate(self, rate, amp):
        t = np.linspace(0, 3, 30)
        est = ExponentialDecayRegressor().fit(t, amp * np.exp(-rate * t))
        assert abs(est.rate_ - rate) < 1e-9
        assert abs(est.intercept_ - math.log(amp)) < 1e-9

    def test_sklearn_protocol(self):
        est = ExponentialDecayRegressor(window=(0.0, 2.0))
        assert est.get_params() == {"window": (0.0, 2.0)}
        twin = clone(est)
        assert twin is not est and twin.window == est.window
        t = np.linspace(0, 2, 21)
        y = np.exp(-t)
        est.fit(t.reshape(-1, 1), y)
        assert est.score(t.reshape(-1, 1), y) > 1 - 1e-12
        np.testing.assert_allclose(est.predict(t), y, rtol=1e-12)

    def test_predict_before_fit(self):
        from sklearn.exceptions import NotFittedError

        with pytest.raises(NotFittedError):
            ExponentialDecayRegressor().predict([1.0])


class TestLorentzian:
    def test_exact_recovery(self):
        e = np.linspace(-1, 1, 201) + 0.013
        fit = fit_lorentzian(np.column_stack([e, lorentzian(e, 2.0, 0.0, 0.1)]))
        assert abs(fit.center) < 1e-8
        assert abs(fit.fwhm - 0.1) < 1e-8
        assert abs(fit.amplitude - 2.0) < 1e-8
        assert fit.rms_residual < 1e-10

    def test_symmetric_input_center(self):
        e = np.linspace(-1, 1, 101)
        # symmetric but not Lorentzian, so the fit has nonzero residual
        y = np.exp(-(e / 0.2) ** 2)
        est = LorentzianRegressor().fit(e, y)
        assert abs(est.center_) < 1e-10
        assert est.rms_residual_ > 1e-4

    def test_unsorted_input(self):
        rng = np.random.default_rng(3)
        e = rng.permutation(np.linspace(-2, 2, 81))
        est = LorentzianRegressor().fit(e, lorentzian(e, 1.0, 0.3, 0.4))
        assert abs(est.center_ - 0.3) < 1e-8
        assert abs(est.fwhm_ - 0.4) < 1e-8

    @settings(max_examples=30, deadline=None)
    @given(center=st.floats(-0.3, 0.3), fwhm=st.floats(0.05, 0.5), amp=st.floats(0.1, 10.0))
    def test_recovers_parameters(self, center, fwhm, amp):
        e = np.linspace(-1, 1, 161)
        est = LorentzianRegressor().fit(e, lorentzian(e, amp, center, fwhm))
        assert abs(est.center_ - center) < 1e-7
        assert abs(est.fwhm_ - fwhm) < 1e-7 * max(1.0, fwhm)
        assert abs(est.amplitude_ - amp) < 1e-7 * amp

    def test_too_few_points(self):
        with pytest.raises(ValidationError, match="5 points"):
            fit_lorentzian([[0, 1], [1, 2], [2, 1], [3, 0.5]])

    def test_flat_input(self):
        e = np.linspace(0, 1, 10)
        with pytest.raises(ValidationError, match="flat"):
            LorentzianRegressor().fit(e, np.full(10, 0.3))
        with pytest.raises(ValidationError):
            LorentzianRegressor().fit(e, -np.ones(10) - e)

    def test_bad_point_shape(self):
        with pytest.raises(ValidationError):
            fit_lorentzian(np.ones((6, 3)))

    def test_sklearn_protocol(self):
        est = LorentzianRegressor(max_iter=50)
        params = est.get_params()
        assert params == {"max_iter": 50, "tol": 1e-10, "damping": 1e-3}
        assert clone(est).get_params() == params
        e = np.linspace(-1, 1, 41)
        y = lorentzian(e, 1.0, 0.0, 0.2)
        est.fit(e, y)
        np.testing.assert_allclose(est.predict(e), y, atol=1e-12)
