"""Fits and checks used to summarise runs."""
from __future__ import annotations

import numpy as np

__all__ = ["ROUNDOFF_FLOOR", "DRIFT_NOISE", "fit_order", "growth_slope", "drift_sign", "gamma_slope"]

# errors below this are dominated by round-off and excluded from order fits
ROUNDOFF_FLOOR = 1e-12
# entropy increments below this (relative to |eta0|) count as round-off noise
DRIFT_NOISE = 1e-14


def _loglog_slope(x, y):
    x, y = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.polyfit(x, y, 1)[0])


def fit_order(dts, errors, floor=ROUNDOFF_FLOOR):
    """Least-squares slope of ``log error`` against ``log dt``.

    Points with non-finite errors or errors at or below ``floor`` are dropped;
    ``nan`` is returned when fewer than two remain.
    """
    dts, errors = np.asarray(dts, float), np.asarray(errors, float)
    keep = np.isfinite(errors) & (errors > floor)
    if keep.sum() < 2:
        return float("nan")
    return _loglog_slope(dts[keep], errors[keep])


def growth_slope(t, err, tmin, tmax):
    """Log-log slope of the error history restricted to ``tmin <= t <= tmax``."""
    t, err = np.asarray(t, float), np.asarray(err, float)
    m = (t >= tmin) & (t <= tmax) & (err > 0)
    if m.sum() < 2:
        raise ValueError("fewer than two samples in the fit window")
    return _loglog_slope(t[m], err[m])


def drift_sign(eta, noise=DRIFT_NOISE):
    """Sign of a monotone drift in ``eta``: +1, -1, or 0 if none is consistent.

    Increments no larger than ``noise * (1 + |eta_0|)`` are ignored as round-off.
    """
    eta = np.asarray(eta, float)
    inc = np.diff(eta)
    inc = inc[np.abs(inc) > noise * (1.0 + abs(eta[0]))]
    if inc.size == 0:
        return 0
    if np.all(inc > 0):
        return 1
    if np.all(inc < 0):
        return -1
    return 0


def gamma_slope(dts, deviations):
    """Slope of ``log max|gamma - 1|`` against ``log dt``."""
    return fit_order(dts, deviations, floor=0.0)
