"""Fringe analysis of binned screen histograms.

Model for the expected counts in a bin centered at ``y`` (bin width ``b``)::

    I(y) = E(y) [c0 + c1 sinc(b/L) cos(2 pi y/L) + c2 sinc(b/L) sin(2 pi y/L)] + B(y)

where ``E`` is a sinc^2 single-slit envelope, ``B`` a clamped cubic spline and
``sinc(b/L)`` undoes the averaging of the fringe over one bin.  For fixed
period ``L`` and envelope the model is linear, so only ``L``, the envelope
center and (optionally) its width are fitted nonlinearly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import BSpline
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted, column_or_1d

from .geometry import OpticalLayout

MIN_TOTAL_COUNTS = 1e4
MIN_BINS_PER_PERIOD = 10
MIN_PERIODS = 5
PERIOD_OK_TOLERANCE = 0.02


class FringeFitError(RuntimeError):
    """Fit did not converge; ``diagnostics`` carries the spectrum-peak data."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class FringeAnalysis:
    period: float
    visibility: float
    phase: float
    fringe_fraction: float
    fit_residual: float
    converged: bool = True
    raw_visibility: float = float("nan")
    diagnostics: dict = field(default_factory=dict, compare=False)

    def as_record(self) -> dict:
        return {"period_m": self.period, "visibility": self.visibility, "phase_rad": self.phase,
                "fringe_fraction": self.fringe_fraction, "fit_residual": self.fit_residual,
                "converged": self.converged, "raw_visibility": self.raw_visibility}


def _spline_basis(x, lo, hi, n_knots):
    if n_knots < 2:
        return np.empty((len(x), 0))
    knots = np.linspace(lo, hi, n_knots)
    t = np.concatenate([[lo] * 4, knots[1:-1], [hi] * 4])
    return BSpline.design_matrix(np.clip(x, lo, hi), t, 3).toarray()


def spectrum_peak(x, counts, min_period, max_period):
    """Dominant spatial period of the detrended histogram within a period band.

    Returns ``(period, power)``; the peak is refined by a parabola through the
    three highest spectral samples.
    """
    n = len(counts)
    dx = (x[-1] - x[0]) / (n - 1)
    k = max(3, int(round(max_period / dx)) | 1)
    trend = np.convolve(counts, np.ones(k) / k, mode="same")
    spec = np.abs(np.fft.rfft((counts - trend) * np.hanning(n))) ** 2
    freqs = np.fft.rfftfreq(n, dx)
    band = (freqs >= 1 / max_period) & (freqs <= 1 / min_period)
    if not band.any():
        return float("nan"), 0.0
    i = np.flatnonzero(band)[np.argmax(spec[band])]
    f = freqs[i]
    if 0 < i < len(spec) - 1:
        a, b, c = spec[i - 1], spec[i], spec[i + 1]
        denom = a - 2 * b + c
        if denom < 0:
            f += 0.5 * (a - c) / denom * (freqs[1] - freqs[0])
    return 1.0 / f, float(spec[i])


def raw_visibility(x, counts, period) -> float:
    """(Imax - Imin)/(Imax + Imin) over the brightest fringe; diagnostic only,
    biased upward by Poisson noise."""
    counts = np.asarray(counts, dtype=float)
    peak = x[np.argmax(counts)]
    near = np.abs(x - peak) <= period
    hi, lo = counts[near].max(), counts[near].min()
    return float((hi - lo) / (hi + lo)) if hi + lo > 0 else 0.0


class FringeFitter(BaseEstimator):
    """Least-squares fringe fit with a fixed-shape single-slit envelope.

    Parameters
    ----------
    period_hint : float or None
        Expected fringe period.  The fitted period is confined to a factor 2
        around it.  ``None`` uses the spectrum peak as the hint.
    envelope_halfwidth : float or None
        Offset of the first envelope zero (``lambda D / a``).  ``None`` fits it.
    n_knots : int
        Knots of the smooth non-fringed spline component (0 disables it).
    reference_visibility : float
        Visibility of a pure double-slit component; the fringe fraction is the
        fitted visibility divided by this.
    max_nfev : int
        Function-evaluation budget of the nonlinear refinement.
    """

    def __init__(self, period_hint=None, envelope_halfwidth=None, n_knots=3,
                 reference_visibility=1.0, max_nfev=200):
        self.period_hint = period_hint
        self.envelope_halfwidth = envelope_halfwidth
        self.n_knots = n_knots
        self.reference_visibility = reference_visibility
        self.max_nfev = max_nfev

    # -- model pieces

    def _design(self, x, period, center, width):
        env = np.sinc((x - center) / width) ** 2
        k = 2 * np.pi / period
        smear = np.sinc(self._bin_width / period)
        cols = [env, env * smear * np.cos(k * x), env * smear * np.sin(k * x)]
        return np.column_stack(cols + [self._spline]), env

    def _solve(self, theta):
        period, center, width = self._unpack(theta)
        M, env = self._design(self._x, period, center, width)
        coef, *_ = np.linalg.lstsq(M * self._w[:, None], self._y * self._w, rcond=None)
        return coef, M, env

    def _unpack(self, theta):
        width = self.envelope_halfwidth if self.envelope_halfwidth is not None else theta[2]
        return theta[0], theta[1], width

    def _residuals(self, theta):
        coef, M, _ = self._solve(theta)
        return (self._y - M @ coef) * self._w

    # -- estimator API

    def fit(self, X, y):
        x = column_or_1d(np.asarray(X, dtype=float)).astype(float)
        counts = column_or_1d(np.asarray(y, dtype=float)).astype(float)
        if len(x) != len(counts):
            raise ValueError("X and y have different lengths")
        order = np.argsort(x)
        x, counts = x[order], counts[order]
        if len(x) < MIN_BINS_PER_PERIOD * MIN_PERIODS:
            raise ValueError(f"need at least {MIN_BINS_PER_PERIOD * MIN_PERIODS} bins")
        self._bin_width = float(np.median(np.diff(x)))
        span = x[-1] - x[0] + self._bin_width
        hint = self.period_hint

        if np.ptp(counts) == 0:
            self._set_flat(x, counts, hint)
            return self
        if counts.sum() < MIN_TOTAL_COUNTS:
            raise ValueError(f"histogram holds {counts.sum():g} counts; need >= {MIN_TOTAL_COUNTS:g}")
        if hint is not None:
            if hint < MIN_BINS_PER_PERIOD * self._bin_width or span < MIN_PERIODS * hint:
                raise ValueError(
                    f"need >= {MIN_BINS_PER_PERIOD} bins per period over >= {MIN_PERIODS} periods")
            band = (hint / 2, 2 * hint)
        else:
            band = (MIN_BINS_PER_PERIOD * self._bin_width, span / MIN_PERIODS)
        peak, power = spectrum_peak(x, counts, *band)
        self.spectrum_peak_period_, self.spectrum_peak_power_ = peak, power
        if hint is None:
            if not np.isfinite(peak):
                raise FringeFitError("no spectral peak in the admissible band",
                                     self._diagnostics())
            hint = peak
        start = peak if np.isfinite(peak) and hint / 2 <= peak <= 2 * hint else hint
        lo_p, hi_p = hint / 2, 2 * hint

        self._x, self._y = x, counts
        self._w = 1 / np.sqrt(np.maximum(counts, 0.01 * counts.mean()))
        self._spline = _spline_basis(x, x[0], x[-1], self.n_knots)
        weights = np.clip(counts, 0, None)
        center0 = float(np.sum(x * weights) / weights.sum())
        theta0 = [start, center0]
        lower, upper = [lo_p, x[0]], [hi_p, x[-1]]
        if self.envelope_halfwidth is None:
            theta0.append(span / 4)
            lower.append(2 * self._bin_width)
            upper.append(20 * span)

        # the cost is oscillatory in the period; scan a narrow band before refining
        trial = np.clip(start * (1 + np.linspace(-0.03, 0.03, 121)), lo_p, hi_p)
        costs = [np.sum(self._residuals([p] + theta0[1:]) ** 2) for p in trial]
        theta0[0] = trial[int(np.argmin(costs))]

        try:
            sol = optimize.least_squares(self._residuals, theta0, bounds=(lower, upper),
                                         x_scale=np.abs(theta0) + self._bin_width,
                                         max_nfev=self.max_nfev, xtol=1e-12, ftol=1e-12)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise FringeFitError(f"fringe fit failed: {exc}", self._diagnostics()) from exc
        period = sol.x[0]
        at_bound = min(period - lo_p, hi_p - period) <= 1e-9 * hint
        self.converged_ = bool(sol.status > 0 and np.all(np.isfinite(sol.x)) and not at_bound)
        self._store(sol.x)
        return self

    def _store(self, theta):
        coef, M, env = self._solve(theta)
        period, center, width = self._unpack(theta)
        c0, c1, c2 = coef[:3]
        smooth = c0 * env + self._spline @ coef[3:]
        amp = math.hypot(c1, c2)
        total_smooth = smooth.sum()
        vis = amp * env.sum() / total_smooth if total_smooth > 0 else 0.0
        phase = math.atan2(-c2, c1)
        self.period_ = float(period)
        self.visibility_ = float(np.clip(vis, 0, 1))
        self.phase_ = float(math.pi if phase == -math.pi else phase)
        self.envelope_center_ = float(center)
        self.envelope_halfwidth_ = float(width)
        self.coef_ = coef
        self.theta_ = np.asarray(theta, dtype=float)
        model = M @ coef
        self.fit_residual_ = float(np.sqrt(np.sum((self._y - model) ** 2) / np.sum(self._y ** 2)))
        self.fringe_fraction_ = float(np.clip(self.visibility_ / self.reference_visibility, 0, 1))
        self.raw_visibility_ = raw_visibility(self._x, self._y, period)

    def _set_flat(self, x, counts, hint):
        self.period_ = float(hint) if hint is not None else float("nan")
        self.visibility_ = 0.0
        self.phase_ = 0.0
        self.fringe_fraction_ = 0.0
        self.fit_residual_ = 0.0
        self.raw_visibility_ = 0.0
        self.converged_ = True
        self.spectrum_peak_period_, self.spectrum_peak_power_ = float("nan"), 0.0
        self.coef_ = None
        self._flat_level = float(counts[0])

    def _diagnostics(self):
        return {"spectrum_peak_period": getattr(self, "spectrum_peak_period_", float("nan")),
                "spectrum_peak_power": getattr(self, "spectrum_peak_power_", 0.0),
                "period_hint": self.period_hint}

    def predict(self, X):
        """Expected bin counts at bin centers ``X``."""
        check_is_fitted(self, "visibility_")
        x = column_or_1d(np.asarray(X, dtype=float)).astype(float)
        if self.coef_ is None:
            return np.full(len(x), self._flat_level)
        period, center, width = self._unpack(self.theta_)
        spline = _spline_basis(x, self._x[0], self._x[-1], self.n_knots)
        saved, self._spline = self._spline, spline
        try:
            M, _ = self._design(x, period, center, width)
        finally:
            self._spline = saved
        return M @ self.coef_

    @property
    def analysis_(self) -> FringeAnalysis:
        check_is_fitted(self, "visibility_")
        return FringeAnalysis(self.period_, self.visibility_, self.phase_, self.fringe_fraction_,
                              self.fit_residual_, self.converged_, self.raw_visibility_,
                              self._diagnostics())


def fit_fringes(positions, counts, expected_period_hint, **params) -> FringeAnalysis:
    """Fit one histogram; non-convergence comes back as ``converged=False``."""
    fitter = FringeFitter(period_hint=expected_period_hint, **params)
    try:
        fitter.fit(positions, counts)
    except FringeFitError as exc:
        return FringeAnalysis(expected_period_hint, 0.0, 0.0, 0.0, float("nan"),
                              converged=False, diagnostics=exc.diagnostics)
    return fitter.analysis_


def fringe_period_check(analysis: FringeAnalysis, layout: OpticalLayout) -> float:
    """Relative deviation of the fitted period from lambda D / s."""
    ref = layout.fringe_period
    return (analysis.period - ref) / ref


def both_component_visibility(layout: OpticalLayout) -> float:
    """Visibility of the fringes from both-access emitters alone.

    Emitters at transverse offset ``y`` shift the fringes by ``s y / d``; the
    both-access band at depth ``z`` is ``|y| <= w/2 - z s/2d``.  Averaging the
    fringe phasor over that region gives the washout.
    """
    k = 2 * np.pi * layout.slit_separation / (layout.wavelength * layout.slit_distance)
    w, x, tilt = layout.source_width, layout.crystal_thickness, layout.separation_angle / 2

    def half(z):
        return max(w / 2 - tilt * z, 0.0)

    if x == 0:
        return abs(float(np.sinc(k * w / (2 * np.pi))))
    num = integrate.quad(lambda z: 2 * math.sin(k * half(z)) / k, 0, x, limit=200)[0]
    den = integrate.quad(lambda z: 2 * half(z), 0, x, limit=200)[0]
    return abs(num / den)


def double_slit_fraction_estimate(positions, counts, layout: OpticalLayout) -> float:
    """Share of the histogram's counts that came from fringed (two-slit) emitters."""
    analysis = fit_fringes(positions, counts, layout.fringe_period,
                           envelope_halfwidth=layout.envelope_halfwidth,
                           reference_visibility=both_component_visibility(layout))
    if not analysis.converged:
        raise FringeFitError("fringe fit did not converge", analysis.diagnostics)
    return analysis.fringe_fraction
