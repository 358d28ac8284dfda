"""Flood thresholds from annual maxima: Gumbel distribution fitted by L-moments."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

RETURN_PERIODS = (1.5, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0)
EULER_GAMMA = 0.5772156649015329
MIN_YEARS = 5
MAX_MISSING_FRACTION = 0.2


def annual_maxima(values, dates, min_years=MIN_YEARS, max_missing=MAX_MISSING_FRACTION):
    """Calendar-year maxima of a daily series.

    ``values`` is ``[D]`` or ``[D, P]``; NaN marks a missing day. Years missing
    more than ``max_missing`` of their days (including days outside the record)
    are dropped. Returns ``(years, maxima)`` with maxima ``[Y]`` or ``[Y, P]``.
    """
    values = np.asarray(values, dtype=float)
    dates = np.asarray(dates, dtype="datetime64[D]")
    years = dates.astype("datetime64[Y]").astype(int) + 1970
    kept_years, maxima = [], []
    for y in np.unique(years):
        sel = years == y
        n_days = 366 if _is_leap(y) else 365
        block = values[sel]
        valid = np.isfinite(block)
        observed = valid.sum(axis=0)
        if np.all(observed < (1.0 - max_missing) * n_days):
            continue
        with np.errstate(all="ignore"):
            m = np.where(valid, block, -np.inf).max(axis=0)
        m = np.where(observed >= (1.0 - max_missing) * n_days, m, np.nan)
        kept_years.append(int(y))
        maxima.append(m)
    if len(kept_years) < min_years:
        raise ValueError(f"insufficient record: {len(kept_years)} complete years, need {min_years}")
    return np.array(kept_years), np.array(maxima)


def _is_leap(y):
    return (y % 4 == 0 and y % 100 != 0) or y % 400 == 0


def lmoments(sample):
    """First two sample L-moments from unbiased probability-weighted moments."""
    x = np.sort(np.asarray(sample, dtype=float))
    n = len(x)
    if n < 2:
        raise ValueError("L-moments need at least two values")
    b0 = x.mean()
    b1 = (x * np.arange(n)).sum() / (n * (n - 1))
    return b0, 2.0 * b1 - b0


def gumbel_fit(maxima):
    """Gumbel location and scale ``(mu, beta)`` from L-moments."""
    l1, l2 = lmoments(maxima)
    if not l2 > 0:
        return float(l1), 0.0
    beta = l2 / np.log(2.0)
    return float(l1 - EULER_GAMMA * beta), float(beta)


def return_level(rp, mu, beta):
    """Discharge exceeded on average once every ``rp`` years."""
    rp = np.asarray(rp, dtype=float)
    if np.any(rp <= 1.0):
        raise ValueError("return period must exceed 1 year")
    return mu - beta * np.log(-np.log(1.0 - 1.0 / rp))


@dataclass
class FloodThresholds:
    point_ids: list
    theta: np.ndarray  # [P, R]
    mu: np.ndarray
    beta: np.ndarray
    n_years: np.ndarray
    return_periods: tuple = RETURN_PERIODS

    def __len__(self):
        return len(self.point_ids)

    def column(self, rp) -> np.ndarray:
        try:
            j = list(self.return_periods).index(float(rp))
        except ValueError:
            raise KeyError(f"return period {rp} not in thresholds") from None
        return self.theta[:, j]

    def subset(self, index) -> "FloodThresholds":
        index = np.asarray(index)
        return FloodThresholds([self.point_ids[i] for i in index], self.theta[index], self.mu[index],
                               self.beta[index], self.n_years[index], self.return_periods)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["point_id", "rp", "theta", "mu", "beta", "n_years"])
        for i, pid in enumerate(self.point_ids):
            for j, rp in enumerate(self.return_periods):
                w.writerow([pid, repr(float(rp)), repr(float(self.theta[i, j])), repr(float(self.mu[i])),
                            repr(float(self.beta[i])), int(self.n_years[i])])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "FloodThresholds":
        rows = list(csv.DictReader(io.StringIO(text)))
        ids: list = []
        per: dict = {}
        rps: list = []
        for r in rows:
            pid = r["point_id"]
            if pid not in per:
                ids.append(pid)
                per[pid] = {"theta": {}, "mu": float(r["mu"]), "beta": float(r["beta"]), "n": int(r["n_years"])}
            rp = float(r["rp"])
            if rp not in rps:
                rps.append(rp)
            per[pid]["theta"][rp] = float(r["theta"])
        rps = sorted(rps)
        theta = np.array([[per[p]["theta"][rp] for rp in rps] for p in ids])
        return cls(ids, theta, np.array([per[p]["mu"] for p in ids]), np.array([per[p]["beta"] for p in ids]),
                   np.array([per[p]["n"] for p in ids]), tuple(rps))


def fit_thresholds(discharge, dates, point_ids, return_periods=RETURN_PERIODS, min_years=MIN_YEARS):
    """Per-point Gumbel thresholds from a daily discharge record ``[D, P]``."""
    _, maxima = annual_maxima(discharge, dates, min_years=min_years)
    n_pts = maxima.shape[1]
    theta = np.zeros((n_pts, len(return_periods)))
    mu = np.zeros(n_pts)
    beta = np.zeros(n_pts)
    n_years = np.zeros(n_pts, dtype=int)
    for p in range(n_pts):
        m = maxima[:, p]
        m = m[np.isfinite(m)]
        if len(m) < min_years:
            raise ValueError(f"insufficient record at point {point_ids[p]}: {len(m)} years")
        mu[p], beta[p] = gumbel_fit(m)
        theta[p] = np.maximum(return_level(return_periods, mu[p], beta[p]), 0.0)
        n_years[p] = len(m)
    return FloodThresholds(list(point_ids), theta, mu, beta, n_years, tuple(float(r) for r in return_periods))


def classify_events(series, threshold):
    """Boolean flood days: discharge at or above ``threshold``."""
    return np.asarray(series, dtype=float) >= np.asarray(threshold, dtype=float)
