"""Statistical battery for interval slices: stationarity, ARIMA, ANOVA, dispersion, peaks.

The unit-root test uses the constant-only regression

    dx_t = alpha + gamma * x_{t-1} + sum_i beta_i * dx_{t-i} + e_t

with the lag count fixed by the Schwert rule ``floor(12 * (T/100)^0.25)`` and
the decision made against fixed large-sample critical values rather than an
interpolated p-value surface. ARIMA coefficients are estimated by minimizing
the conditional sum of squares with a derivative-free simplex, and orders are
picked by AIC over a small (p, q) grid; the differencing order is the
smallest d in {0, 1, 2} whose differenced series the unit-root test accepts
as stationary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter
from scipy.special import betainc

from .errors import NumericalError, ValidationError

ADF_CRITICAL_VALUES = {"1%": -3.43, "5%": -2.86, "10%": -2.57}


@dataclass(frozen=True)
class AdfResult:
    statistic: float
    lags_used: int
    reject_at_5pct: bool
    critical_values: dict[str, float]

    @property
    def significance_bracket(self) -> str:
        """Most demanding tabulated level at which the unit root is rejected."""
        for level in ("1%", "5%", "10%"):
            if self.statistic < self.critical_values[level]:
                return level
        return "none"


@dataclass(frozen=True)
class ArimaModel:
    p: int
    d: int
    q: int
    ar_coeffs: tuple[float, ...]
    ma_coeffs: tuple[float, ...]
    intercept: float
    sigma2: float
    aic: float = float("nan")

    def __post_init__(self) -> None:
        if len(self.ar_coeffs) != self.p or len(self.ma_coeffs) != self.q:
            raise ValidationError("coefficient lengths must match declared orders")
        if self.p and not _ar_stationary(np.asarray(self.ar_coeffs)):
            raise ValidationError("fitted AR polynomial must have roots outside the unit circle")


@dataclass(frozen=True)
class AnovaResult:
    f_statistic: float
    df_between: int
    df_within: int
    p_value: float


@dataclass(frozen=True)
class BoxplotSummary:
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float
    outliers: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        ordered = (self.minimum, self.q1, self.median, self.q3, self.maximum)
        if any(b < a for a, b in zip(ordered, ordered[1:])):
            raise ValidationError(f"five-number summary out of order: {ordered}")


def difference_series(x: Sequence[float], d: int) -> np.ndarray:
    """d-th order difference; output is shorter by d."""
    if d < 0:
        raise ValidationError(f"difference order must be >= 0, got {d}")
    x = np.asarray(x, dtype=np.float64)
    if x.size <= d:
        raise ValidationError(f"series of length {x.size} too short for d={d}")
    return np.diff(x, n=d) if d else x.copy()


def schwert_lag(n: int) -> int:
    return int(math.floor(12.0 * (n / 100.0) ** 0.25))


def adf_test(x: Sequence[float]) -> AdfResult:
    """Augmented Dickey-Fuller unit-root test, constant-only regression.

    ``reject_at_5pct`` True means the series looks stationary.
    """
    x = np.asarray(x, dtype=np.float64)
    T = x.size
    if T < 20:
        raise ValidationError(f"need at least 20 observations, got {T}")
    k = schwert_lag(T)
    dx = np.diff(x)
    n = dx.size - k
    p = k + 2  # constant + level + k difference lags
    if n <= p:
        raise NumericalError(f"only {n} usable rows for {p} regressors; series too short")
    y = dx[k:]
    columns = [np.ones(n), x[k:-1]]
    columns += [dx[k - i : dx.size - i] for i in range(1, k + 1)]
    design = np.column_stack(columns)
    beta, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < p:
        # redundant lag columns: keep the minimum-norm solution
        beta = np.linalg.pinv(design) @ y
        gram_inv = np.linalg.pinv(design.T @ design)
    else:
        gram_inv = np.linalg.inv(design.T @ design)
    residuals = y - design @ beta
    sigma2 = float(residuals @ residuals) / (n - p)
    se_gamma = math.sqrt(max(sigma2 * gram_inv[1, 1], 0.0))
    if se_gamma == 0.0 or not math.isfinite(se_gamma):
        cond = float(np.linalg.cond(design))
        raise NumericalError(
            f"level coefficient unidentified in unit-root regression "
            f"(rank {rank} of {p}, condition {cond:.3e})"
        )
    statistic = float(beta[1] / se_gamma)
    return AdfResult(
        statistic=statistic,
        lags_used=k,
        reject_at_5pct=statistic < ADF_CRITICAL_VALUES["5%"],
        critical_values=dict(ADF_CRITICAL_VALUES),
    )


def _ar_stationary(phi: np.ndarray) -> bool:
    if phi.size == 0:
        return True
    roots = np.roots(np.r_[1.0, -phi][::-1])
    return bool(np.all(np.abs(roots) > 1.0 + 1e-9)) if roots.size else True


def _ma_invertible(theta: np.ndarray) -> bool:
    if theta.size == 0:
        return True
    roots = np.roots(np.r_[1.0, theta][::-1])
    return bool(np.all(np.abs(roots) > 1.0 + 1e-9)) if roots.size else True


def _css_residuals(
    w: np.ndarray, c: float, phi: np.ndarray, theta: np.ndarray, start: int | None = None
) -> np.ndarray:
    """Conditional residuals from index ``start`` on; pre-sample shocks are zero."""
    p = phi.size
    if start is None:
        start = p
    u = w[start:] - c
    for i in range(1, p + 1):
        u = u - phi[i - 1] * w[start - i : w.size - i]
    return lfilter([1.0], np.r_[1.0, theta], u)


def _css(w: np.ndarray, params: np.ndarray, p: int, q: int, start: int) -> float:
    c = params[0]
    phi = params[1 : 1 + p]
    theta = params[1 + p :]
    if not (_ar_stationary(phi) and _ma_invertible(theta)):
        overshoot = float(np.sum(np.abs(phi)) + np.sum(np.abs(theta)))
        return 1e12 * (1.0 + overshoot)
    eps = _css_residuals(w, c, phi, theta, start)
    return float(eps @ eps)


def _shrink_into_region(params: np.ndarray, p: int, q: int) -> np.ndarray:
    """Pull an initial guess inside the stationary/invertible region."""
    params = params.copy()
    for _ in range(40):
        phi = params[1 : 1 + p]
        theta = params[1 + p :]
        if _ar_stationary(phi) and _ma_invertible(theta):
            return params
        params[1:] *= 0.9
    params[1:] = 0.0
    return params


def _initial_guess(w: np.ndarray, p: int, q: int, start: int) -> np.ndarray:
    """Hannan-Rissanen style starting point: long-AR residuals feed an OLS fit."""
    init = np.zeros(1 + p + q)
    init[0] = float(w.mean())
    if p == 0 and q == 0:
        return init
    if q == 0:
        return _shrink_into_region(_ols_ar(w, p, start), p, q)
    long_order = min(max(8, 2 * (p + q)), (w.size - 1) // 3)
    long_params = _ols_ar(w, long_order, long_order)
    eps = np.zeros(w.size)
    eps[long_order:] = _css_residuals(
        w, long_params[0], long_params[1:], np.empty(0), long_order
    )
    t0 = max(start, long_order, p, q)
    rows = w.size - t0
    design = np.empty((rows, 1 + p + q))
    design[:, 0] = 1.0
    for i in range(1, p + 1):
        design[:, i] = w[t0 - i : w.size - i]
    for j in range(1, q + 1):
        design[:, p + j] = eps[t0 - j : w.size - j]
    beta, _, _, _ = np.linalg.lstsq(design, w[t0:], rcond=None)
    return _shrink_into_region(beta, p, q)


def _ols_ar(w: np.ndarray, p: int, start: int) -> np.ndarray:
    """Exact CSS minimizer for a pure AR(p) with intercept, conditioning at ``start``."""
    rows = w.size - start
    design = np.empty((rows, 1 + p))
    design[:, 0] = 1.0
    for i in range(1, p + 1):
        design[:, i] = w[start - i : w.size - i]
    beta, _, _, _ = np.linalg.lstsq(design, w[start:], rcond=None)
    return beta


def fit_arima(x: Sequence[float], max_p: int = 3, max_q: int = 3) -> ArimaModel:
    """Order selection by AIC over a (p, q) grid, coefficients by CSS.

    Every grid cell conditions on the same ``max_p`` pre-sample values so the
    sums of squares are comparable. Pure AR cells are solved exactly by least
    squares; mixed cells start from a Hannan-Rissanen guess and are polished
    by Nelder-Mead. d is the smallest order in {0, 1, 2} whose differenced
    series the unit-root test calls stationary (capped at 2 if none does).
    A constant series short-circuits to a pure-intercept model with zero
    residual variance.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size < 30:
        raise ValidationError(f"need at least 30 observations, got {x.size}")
    d = 2
    for candidate in (0, 1, 2):
        w = difference_series(x, candidate)
        if np.ptp(w) == 0.0 or adf_test(w).reject_at_5pct:
            d = candidate
            break
    w = difference_series(x, d)
    if np.ptp(w) == 0.0:
        return ArimaModel(
            p=0, d=d, q=0, ar_coeffs=(), ma_coeffs=(), intercept=float(w[0]), sigma2=0.0,
            aic=float("-inf"),
        )
    start = max_p
    n_css = w.size - start
    best: ArimaModel | None = None
    best_failed: ArimaModel | None = None
    for p in range(max_p + 1):
        for q in range(max_q + 1):
            init = _initial_guess(w, p, q, start)
            converged = True
            if p == 0 and q == 0:
                params = init
                css = _css(w, params, p, q, start)
            elif q == 0:
                params = init  # closed-form least squares already minimizes the CSS
                css = _css(w, params, p, q, start)
                if css >= 1e12:  # non-stationary exact solution: polish with the barrier
                    params, css, converged = _polish(w, init, p, q, start)
            else:
                params, css, converged = _polish(w, init, p, q, start)
            css = max(css, 1e-300)
            aic = n_css * math.log(css / n_css) + 2.0 * (p + q + 1)
            phi = tuple(float(v) for v in params[1 : 1 + p])
            theta = tuple(float(v) for v in params[1 + p :])
            if not (_ar_stationary(np.asarray(phi)) and _ma_invertible(np.asarray(theta))):
                continue
            model = ArimaModel(
                p=p, d=d, q=q, ar_coeffs=phi, ma_coeffs=theta,
                intercept=float(params[0]), sigma2=css / n_css, aic=aic,
            )
            if not converged:
                if best_failed is None or aic < best_failed.aic:
                    best_failed = model
                continue
            if best is None or aic < best.aic:
                best = model
    if best is None:
        err = NumericalError("no (p, q) grid cell converged")
        err.best_partial_fit = best_failed
        raise err
    return best


def _polish(
    w: np.ndarray, init: np.ndarray, p: int, q: int, start: int
) -> tuple[np.ndarray, float, bool]:
    result = minimize(
        lambda params: _css(w, params, p, q, start),
        init,
        method="Nelder-Mead",
        options={"xatol": 1e-7, "fatol": 1e-10, "maxiter": 500 * (1 + p + q)},
    )
    return result.x, float(result.fun), bool(result.success)


def forecast_arima(model: ArimaModel, x: Sequence[float], horizon: int) -> np.ndarray:
    """Iterated one-step forecasts, integrated back to the original scale."""
    if horizon < 1:
        raise ValidationError(f"horizon must be >= 1, got {horizon}")
    x = np.asarray(x, dtype=np.float64)
    w = difference_series(x, model.d)
    phi = np.asarray(model.ar_coeffs)
    theta = np.asarray(model.ma_coeffs)
    if w.size < max(model.p, 1):
        raise ValidationError("series too short for the fitted AR order")
    eps = np.zeros(w.size)
    if model.q:
        eps[model.p :] = _css_residuals(w, model.intercept, phi, theta)
    history = list(w)
    residuals = list(eps)
    forecasts_w = []
    for _ in range(horizon):
        value = model.intercept
        for i in range(1, model.p + 1):
            value += phi[i - 1] * history[-i]
        for j in range(1, model.q + 1):
            value += theta[j - 1] * residuals[-j]
        forecasts_w.append(value)
        history.append(value)
        residuals.append(0.0)
    forecast = np.asarray(forecasts_w)
    for level in range(model.d - 1, -1, -1):
        last = difference_series(x, level)[-1]
        forecast = np.cumsum(forecast) + last
    return forecast


def anova_oneway(groups: Sequence[Sequence[float]]) -> AnovaResult:
    """One-way fixed-effects F test; p-value via the regularized incomplete beta."""
    if len(groups) < 2:
        raise ValidationError("need at least 2 groups")
    arrays = [np.asarray(g, dtype=np.float64) for g in groups]
    if any(a.size < 2 for a in arrays):
        raise ValidationError("every group needs at least 2 values")
    all_values = np.concatenate(arrays)
    grand = all_values.mean()
    ss_between = sum(a.size * (a.mean() - grand) ** 2 for a in arrays)
    ss_within = sum(float(((a - a.mean()) ** 2).sum()) for a in arrays)
    df_between = len(arrays) - 1
    df_within = all_values.size - len(arrays)
    if ss_within == 0.0 and ss_between == 0.0:
        raise NumericalError("all groups identical and constant: F undefined")
    if ss_within == 0.0:
        return AnovaResult(
            f_statistic=float("inf"), df_between=df_between, df_within=df_within, p_value=0.0
        )
    f = (ss_between / df_between) / (ss_within / df_within)
    p = float(betainc(df_within / 2.0, df_between / 2.0, df_within / (df_within + df_between * f)))
    return AnovaResult(f_statistic=float(f), df_between=df_between, df_within=df_within, p_value=p)


def boxplot_summary(groups: Sequence[Sequence[float]]) -> list[BoxplotSummary]:
    """Tukey five-number summaries with 1.5 IQR outlier flagging per group."""
    out = []
    for g in groups:
        a = np.asarray(g, dtype=np.float64)
        if a.size == 0:
            raise ValidationError("groups must be non-empty")
        q1, median, q3 = np.percentile(a, [25.0, 50.0, 75.0])
        iqr = q3 - q1
        lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
        outliers = tuple(float(v) for v in np.sort(a[(a < lo) | (a > hi)]))
        out.append(
            BoxplotSummary(
                minimum=float(a.min()),
                q1=float(q1),
                median=float(median),
                q3=float(q3),
                maximum=float(a.max()),
                outliers=outliers,
            )
        )
    return out


def detect_peaks(
    minutes_of_day: Sequence[int],
    values: Sequence[float],
    min_separation_buckets: int = 1,
) -> list[tuple[int, float]]:
    """Interior strict local maxima above the series mean, tallest first.

    Candidates are kept greedily by height subject to the index-separation
    constraint, then reported in time order. Monotone or flat series have no
    interior strict maximum and return an empty list.
    """
    minutes = list(minutes_of_day)
    v = np.asarray(values, dtype=np.float64)
    if len(minutes) != v.size:
        raise ValidationError("minutes_of_day and values must have equal length")
    if min_separation_buckets < 1:
        raise ValidationError("min_separation_buckets must be >= 1")
    if v.size < 3:
        return []
    mean = v.mean()
    candidates = [
        i
        for i in range(1, v.size - 1)
        if v[i] > v[i - 1] and v[i] > v[i + 1] and v[i] > mean
    ]
    kept: list[int] = []
    for i in sorted(candidates, key=lambda i: (-v[i], i)):
        if all(abs(i - j) >= min_separation_buckets for j in kept):
            kept.append(i)
    return [(minutes[i], float(v[i])) for i in sorted(kept)]
