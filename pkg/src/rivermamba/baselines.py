"""Reference forecasters: persistence and day-of-year climatology."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

QUANTILE_LEVELS = np.linspace(0.0, 1.0, 11)
N_SLOTS = 366
_CUM_DAYS = np.array([0, 31, 60, 91, 121, 152, 182, 213, 244, 274, 305, 335])


def persistence_forecast(x_prev, n_leads: int):
    """Repeat yesterday's discharge ``x_prev [P]`` at every lead: ``[L, P]``."""
    x_prev = np.asarray(x_prev, dtype=float)
    return np.repeat(x_prev[None, :], n_leads, axis=0)


def day_slot(dates):
    """0-based day-of-year on a 366-slot calendar: Feb 29 is slot 59 in every year."""
    d = np.asarray(dates, dtype="datetime64[D]")
    month = d.astype("datetime64[M]").astype(int) % 12
    day = (d - d.astype("datetime64[M]")).astype(int)
    return _CUM_DAYS[month] + day


@dataclass
class ClimatologyTable:
    point_ids: list
    quantiles: np.ndarray  # [366, 11, P]
    levels: np.ndarray = QUANTILE_LEVELS

    def median(self) -> np.ndarray:
        j = int(np.argmin(np.abs(self.levels - 0.5)))
        return self.quantiles[:, j, :]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["point_id", "doy"] + [f"q{round(100 * q)}" for q in self.levels])
        for p, pid in enumerate(self.point_ids):
            for s in range(N_SLOTS):
                w.writerow([pid, s + 1] + [repr(float(v)) for v in self.quantiles[s, :, p]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ClimatologyTable":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        levels = np.array([int(h[1:]) / 100.0 for h in header[2:]])
        ids = list(dict.fromkeys(r[0] for r in body))
        col = {pid: i for i, pid in enumerate(ids)}
        q = np.full((N_SLOTS, len(levels), len(ids)), np.nan)
        for r in body:
            q[int(r[1]) - 1, :, col[r[0]]] = [float(v) for v in r[2:]]
        return cls(ids, q, levels)


def build_climatology(history, dates, point_ids=None, window: int = 31, min_years: float = 2.0):
    """Quantiles of all values within ``window // 2`` days of each day-of-year.

    ``history`` is ``[D, P]`` with NaN for missing days. The window wraps the
    year boundary, so slot 0 pools slots 351..365 of the 366-slot calendar.
    """
    history = np.asarray(history, dtype=float)
    if history.ndim == 1:
        history = history[:, None]
    if len(history) < min_years * 365:
        raise ValueError(f"insufficient history: {len(history)} days, need {min_years:g} years")
    slots = day_slot(dates)
    half = window // 2
    n_pts = history.shape[1]
    q = np.empty((N_SLOTS, len(QUANTILE_LEVELS), n_pts))
    for s in range(N_SLOTS):
        dist = np.abs(slots - s)
        dist = np.minimum(dist, N_SLOTS - dist)
        pool = history[dist <= half]
        q[s] = np.nanquantile(pool, QUANTILE_LEVELS, axis=0)
    ids = list(point_ids) if point_ids is not None else [str(i) for i in range(n_pts)]
    return ClimatologyTable(ids, q)


def climatology_forecast(issue_date, table: ClimatologyTable, n_leads: int, statistic: str = "median"):
    """Day-of-year statistic at ``t + 1 .. t + L``: ``[L, P]``."""
    t = np.datetime64(issue_date, "D")
    slots = day_slot(t + np.arange(1, n_leads + 1))
    if statistic == "median":
        return table.median()[slots]
    if statistic == "mean":
        return table.quantiles[slots].mean(axis=1)
    raise ValueError(f"unknown climatology statistic {statistic!r}")
