"""Horizontal-error measures over travelled distance."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDistance
from .frames import WGS84, EarthModel, local_offset

DEFAULT_THRESHOLD = 20e3


@dataclass
class ErrorSeries:
    """Horizontal error samples ordered by travelled distance."""

    distance: np.ndarray
    herr: np.ndarray
    t: np.ndarray | None = None

    def __post_init__(self):
        self.distance = np.asarray(self.distance, dtype=float)
        self.herr = np.asarray(self.herr, dtype=float)
        if self.distance.shape != self.herr.shape:
            raise ValueError("distance and error arrays differ in length")
        if self.t is not None:
            self.t = np.asarray(self.t, dtype=float)
        if np.any(np.diff(self.distance) < 0):
            raise ValueError("distance must be non-decreasing")

    def past(self, threshold: float = DEFAULT_THRESHOLD, need: int = 1):
        m = self.distance > threshold
        if m.sum() < need:
            raise InsufficientDistance(
                f"{int(m.sum())} samples beyond {threshold:g} m, need {need}")
        return self.distance[m], np.abs(self.herr[m])


@dataclass
class MetricsReport:
    mean20_abs: float
    mean20_rel: float  # per mille
    gra20_abs: float  # m per m
    gra20_rel: float  # per mille per m
    max20: float

    HEADER = ("Mean20 (m)", "Mean20 (‰)", "Gra20 (m/m)", "Gra20 (‰/m)", "Max20 (m)")

    def row(self) -> tuple:
        return (self.mean20_abs, self.mean20_rel, self.gra20_abs, self.gra20_rel, self.max20)

    def table(self) -> str:
        head = " | ".join(f"{h:>13}" for h in self.HEADER)
        vals = " | ".join(f"{v:>13.6g}" for v in self.row())
        return head + "\n" + vals


def horizontal_error(p_est, p_true, earth: EarthModel = WGS84) -> float:
    """North/east distance between two geodetic positions ``[lon, lat, h]``."""
    a = local_offset(np.asarray(p_true, float), np.asarray(p_est, float), earth)
    b = local_offset(np.asarray(p_est, float), np.asarray(p_true, float), earth)
    # average both tangent planes so the measure is exactly symmetric
    return 0.5 * (float(np.hypot(a[0], a[2])) + float(np.hypot(b[0], b[2])))


def mean20(series: ErrorSeries, threshold: float = DEFAULT_THRESHOLD):
    """Mean absolute error (m) and mean relative error (per mille) past the threshold."""
    d, e = series.past(threshold)
    return float(e.mean()), float(np.mean(e / d) * 1e3)


def _slope(x, y) -> float:
    xm = x - x.mean()
    den = float(xm @ xm)
    if den == 0.0:
        raise InsufficientDistance("all samples share one distance; slope undefined")
    return float(xm @ (y - y.mean()) / den)


def gra20(series: ErrorSeries, threshold: float = DEFAULT_THRESHOLD):
    """Least-squares slope of absolute (m/m) and relative (per mille per m)
    error against distance past the threshold."""
    d, e = series.past(threshold, need=2)
    return _slope(d, e), _slope(d, e / d * 1e3)


def max20(series: ErrorSeries, threshold: float = DEFAULT_THRESHOLD) -> float:
    _, e = series.past(threshold)
    return float(e.max())


def report(series: ErrorSeries, threshold: float = DEFAULT_THRESHOLD) -> MetricsReport:
    m_abs, m_rel = mean20(series, threshold)
    g_abs, g_rel = gra20(series, threshold)
    return MetricsReport(m_abs, m_rel, g_abs, g_rel, max20(series, threshold))
