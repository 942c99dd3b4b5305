"""Curve fits for survival curves and line shapes, as scikit-learn style regressors.

``ExponentialDecayRegressor`` fits ``log y = c - rate * t`` by ordinary least
squares.  ``LorentzianRegressor`` fits ``A (w/2)^2 / ((E - E0)^2 + (w/2)^2)``
with a damped Gauss-Newton (Levenberg) iteration.  Both take a 1-d feature
(``X`` of shape ``(n,)`` or ``(n, 1)``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import ConvergenceError, ValidationError

__all__ = [
    "ExponentialDecayRegressor",
    "LorentzianRegressor",
    "ExponentialFit",
    "LorentzianFit",
    "fit_exponential",
    "fit_lorentzian",
    "lorentzian",
    "default_window",
]


def _check_1d(X, y=None):
    x = np.asarray(X, dtype=float)
    if x.ndim == 2 and x.shape[1] == 1:
        x = x[:, 0]
    if x.ndim != 1:
        raise ValidationError(f"expected a single feature, got shape {np.shape(X)}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("input contains non-finite values")
    if y is None:
        return x
    y = np.asarray(y, dtype=float).ravel()
    if y.shape != x.shape:
        raise ValidationError(f"X and y lengths differ: {x.shape[0]} vs {y.shape[0]}")
    if not np.all(np.isfinite(y)):
        raise ValidationError("target contains non-finite values")
    return x, y


class ExponentialDecayRegressor(RegressorMixin, BaseEstimator):
    """Log-linear least squares fit of an exponentially decaying curve.

    Parameters
    ----------
    window : tuple of float, optional
        ``(t_min, t_max)``; only samples inside the closed window are used.
        ``None`` uses every sample.

    Attributes
    ----------
    rate_ : float
        Decay rate, minus the fitted slope of ``log y``.
    tau_ : float
        ``1 / rate_``; ``inf`` when the rate is zero.
    intercept_ : float
        Fitted ``log y`` at ``t = 0`` (zero for a pure exponential).
    rms_log_residual_ : float
    window_ : tuple of float
    n_points_ : int
    """

    def __init__(self, window=None):
        self.window = window

    def fit(self, X, y):
        t, y = _check_1d(X, y)
        if self.window is None:
            sel = np.ones(t.shape, bool)
            window = (float(t.min()), float(t.max())) if t.size else (0.0, 0.0)
        else:
            lo, hi = self.window
            if not lo < hi:
                raise ValidationError(f"degenerate fit window {self.window}")
            sel = (t >= lo) & (t <= hi)
            window = (float(lo), float(hi))
        if sel.sum() < 3:
            raise ValidationError(f"fit window {window} contains {int(sel.sum())} points, need >= 3")
        tw, yw = t[sel], y[sel]
        if np.any(yw <= 0):
            raise ValidationError("survival must be positive inside the fit window")
        logy = np.log(yw)
        design = np.column_stack([np.ones_like(tw), tw])
        (c, slope), *_ = np.linalg.lstsq(design, logy, rcond=None)
        resid = logy - (c + slope * tw)
        # exact-zero slope for a constant curve keeps tau_ at the infinite sentinel
        if np.ptp(logy) == 0:
            slope = 0.0
        self.rate_ = float(-slope)
        self.tau_ = math.inf if slope == 0 else float(-1.0 / slope)
        self.intercept_ = float(c)
        self.rms_log_residual_ = float(np.sqrt(np.mean(resid**2)))
        self.window_ = window
        self.n_points_ = int(sel.sum())
        return self

    def predict(self, X):
        check_is_fitted(self, "rate_")
        t = _check_1d(X)
        return np.exp(self.intercept_ - self.rate_ * t)


def lorentzian(e, amplitude, center, fwhm):
    hw2 = (0.5 * fwhm) ** 2
    return amplitude * hw2 / ((np.asarray(e) - center) ** 2 + hw2)


def _lorentzian_jacobian(e, amplitude, center, fwhm):
    hw = 0.5 * fwhm
    d = e - center
    den = d * d + hw * hw
    shape = hw * hw / den
    d_amp = shape
    d_center = amplitude * hw * hw * 2 * d / den**2
    # d/dfwhm of hw^2/den with hw = fwhm/2
    d_fwhm = amplitude * hw * d * d / den**2
    return np.column_stack([d_amp, d_center, d_fwhm])


def _initial_guess(e, y):
    k = int(np.argmax(y))
    amp = y[k]
    half = 0.5 * amp
    left = k
    while left > 0 and y[left] > half:
        left -= 1
    right = k
    while right < len(y) - 1 and y[right] > half:
        right += 1

    def cross(i, j):
        # linear interpolation of the half-maximum crossing between samples i and j
        if y[i] == y[j]:
            return e[i]
        return e[i] + (half - y[i]) * (e[j] - e[i]) / (y[j] - y[i])

    e_left = cross(left, left + 1) if y[left] <= half else e[0]
    e_right = cross(right - 1, right) if y[right] <= half else e[-1]
    width = e_right - e_left
    if not width > 0:
        width = np.min(np.diff(e)) if len(e) > 1 else 1.0
    return np.array([amp, e[k], width])


class LorentzianRegressor(RegressorMixin, BaseEstimator):
    """Least-squares Lorentzian peak fit (Gauss-Newton with Levenberg damping).

    Starts from the sample maximum and the half-maximum crossings, and stops
    when an accepted step changes the parameters by less than ``tol``
    relative to their size.

    Attributes
    ----------
    amplitude_, center_, fwhm_ : float
    rms_residual_ : float
    n_iter_ : int
    """

    def __init__(self, max_iter=200, tol=1e-10, damping=1e-3):
        self.max_iter = max_iter
        self.tol = tol
        self.damping = damping

    def fit(self, X, y):
        e, y = _check_1d(X, y)
        if e.size < 5:
            raise ValidationError("a Lorentzian fit needs at least 5 points")
        order = np.argsort(e, kind="stable")
        e, y = e[order], y[order]
        if not np.max(y) > 0 or np.ptp(y) == 0:
            raise ValidationError("input has no positive peak (flat or non-positive data)")

        p = _initial_guess(e, y)
        r = y - lorentzian(e, *p)
        cost = float(r @ r)
        mu = self.damping
        converged = False
        for it in range(1, self.max_iter + 1):
            J = _lorentzian_jacobian(e, *p)
            A = J.T @ J
            g = J.T @ r
            while True:
                step = np.linalg.solve(A + mu * np.diag(np.diag(A)), g)
                trial = p + step
                if trial[2] > 0:
                    r_trial = y - lorentzian(e, *trial)
                    c_trial = float(r_trial @ r_trial)
                    if c_trial <= cost:
                        break
                mu *= 10.0
                if mu > 1e16:
                    break
            if mu > 1e16:
                # no descent direction left: already at the minimum to machine precision
                converged = True
                break
            rel = np.linalg.norm(step) / max(np.linalg.norm(trial), np.finfo(float).tiny)
            p, r, cost = trial, r_trial, c_trial
            mu = max(mu / 10.0, 1e-12)
            if rel < self.tol or cost == 0.0:
                converged = True
                break
        if not converged:
            raise ConvergenceError(f"Lorentzian fit did not converge in {self.max_iter} iterations")
        self.amplitude_, self.center_, self.fwhm_ = (float(v) for v in p)
        self.rms_residual_ = float(np.sqrt(cost / e.size))
        self.n_iter_ = it
        return self

    def predict(self, X):
        check_is_fitted(self, "fwhm_")
        return lorentzian(_check_1d(X), self.amplitude_, self.center_, self.fwhm_)


@dataclass(frozen=True)
class ExponentialFit:
    tau: float
    rate: float
    rms_log_residual: float
    window: tuple
    intercept: float = 0.0
    n_points: int = 0


@dataclass(frozen=True)
class LorentzianFit:
    center: float
    fwhm: float
    amplitude: float
    rms_residual: float
    n_iter: int = 0


def default_window(t_max, skip_fraction=0.05):
    """Fit window skipping the first ``skip_fraction`` of the total time."""
    return (skip_fraction * t_max, t_max)


def _curve_arrays(curve):
    if hasattr(curve, "t") and hasattr(curve, "mean"):
        return np.asarray(curve.t, float), np.asarray(curve.mean, float)
    arr = np.asarray(curve, dtype=float)
    return arr[:, 0], arr[:, 1]


def fit_exponential(curve, window=None) -> ExponentialFit:
    """Fit ``exp(-rate t)`` to a survival curve on ``window`` (default: skip first 5%)."""
    t, y = _curve_arrays(curve)
    if window is None:
        window = default_window(float(np.max(t)))
    est = ExponentialDecayRegressor(window=window).fit(t, y)
    return ExponentialFit(
        tau=est.tau_,
        rate=est.rate_,
        rms_log_residual=est.rms_log_residual_,
        window=est.window_,
        intercept=est.intercept_,
        n_points=est.n_points_,
    )


def fit_lorentzian(points, max_iter=200) -> LorentzianFit:
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValidationError("points must be a sequence of (E, population) pairs")
    est = LorentzianRegressor(max_iter=max_iter).fit(arr[:, 0], arr[:, 1])
    return LorentzianFit(est.center_, est.fwhm_, est.amplitude_, est.rms_residual_, est.n_iter_)
