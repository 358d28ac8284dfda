"""Continuous and event-based forecast skill, per point and aggregated."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

F1_RETURN_PERIODS = (1.5, 2.0, 5.0, 10.0, 20.0)
CONTINUOUS = ("MAE", "RMSE", "R", "R2", "KGE")


def continuous_metrics(obs, pred) -> dict:
    """MAE, RMSE, Pearson R, R2 (NSE) and KGE of one series pair.

    Pairs with a NaN on either side are dropped first. Metrics that need
    variance or a nonzero mean in the observations come back as NaN when it
    is missing.
    """
    obs = np.asarray(obs, dtype=float)
    pred = np.asarray(pred, dtype=float)
    if obs.shape != pred.shape:
        raise ValueError("obs and pred must have equal length")
    ok = np.isfinite(obs) & np.isfinite(pred)
    obs, pred = obs[ok], pred[ok]
    if len(obs) < 2:
        raise ValueError("need at least two paired values")
    err = obs - pred
    out = {"MAE": float(np.abs(err).mean()), "RMSE": float(np.sqrt((err * err).mean()))}
    mo, mp = obs.mean(), pred.mean()
    do, dp = obs - mo, pred - mp
    sso, ssp = (do * do).sum(), (dp * dp).sum()
    if sso == 0:
        out.update(R=np.nan, R2=np.nan, KGE=np.nan)
        return out
    r = (do * dp).sum() / np.sqrt(sso * ssp) if ssp > 0 else 0.0
    out["R"] = float(r)
    out["R2"] = float(1.0 - (err * err).sum() / sso)
    if mo == 0 or mp == 0:
        out["KGE"] = np.nan
        return out
    beta = mp / mo
    gamma = (pred.std() / mp) / (obs.std() / mo)
    out["KGE"] = float(1.0 - np.sqrt((r - 1) ** 2 + (beta - 1) ** 2 + (gamma - 1) ** 2))
    return out


def confusion(obs_events, pred_events):
    o = np.asarray(obs_events, dtype=bool)
    p = np.asarray(pred_events, dtype=bool)
    return int((o & p).sum()), int((~o & p).sum()), int((o & ~p).sum())


def event_metrics(obs_events, pred_events) -> dict:
    """Precision, recall and F1 of boolean event series (NaN where undefined)."""
    tp, fp, fn = confusion(obs_events, pred_events)
    return scores_from_counts(tp, fp, fn)


def scores_from_counts(tp, fp, fn) -> dict:
    precision = tp / (tp + fp) if tp + fp > 0 else np.nan
    recall = tp / (tp + fn) if tp + fn > 0 else np.nan
    if tp + fn == 0:
        f1 = np.nan
    elif tp == 0:
        f1 = 0.0
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return {"precision": precision, "recall": recall, "F1": f1, "TP": tp, "FP": fp, "FN": fn}


@dataclass
class MetricReport:
    """Per-point metrics.

    ``continuous[name]`` is ``[L, P]``; ``events[name]`` is ``[L, R, P]`` over
    ``return_periods``.
    """

    point_ids: list
    leads: int
    continuous: dict = field(default_factory=dict)
    events: dict = field(default_factory=dict)
    return_periods: tuple = F1_RETURN_PERIODS

    def rows(self):
        """``(metric, point_id, lead, rp, value)`` for every stored value."""
        for name, arr in self.continuous.items():
            for l in range(self.leads):
                for p, pid in enumerate(self.point_ids):
                    yield name, pid, l + 1, "", arr[l, p]
        for name, arr in self.events.items():
            for l in range(self.leads):
                for j, rp in enumerate(self.return_periods):
                    for p, pid in enumerate(self.point_ids):
                        yield name, pid, l + 1, rp, arr[l, j, p]

    def metric_csv(self, name) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["point_id", "lead", "rp", "value"])
        for m, pid, lead, rp, v in self.rows():
            if m == name:
                w.writerow([pid, lead, rp, _fmt(v)])
        return buf.getvalue()


def _fmt(v):
    return "" if not np.isfinite(v) else repr(float(v))


def evaluate_forecasts(obs, pred, thresholds=None, point_ids=None, return_periods=F1_RETURN_PERIODS):
    """Score forecasts ``pred[N, L, P]`` against ``obs[N, L, P]`` (N issuance dates).

    Each (lead, point) pair is one time series over the N dates. Events use
    ``thresholds`` (a FloodThresholds) for every return period requested.
    """
    obs = np.asarray(obs, dtype=float)
    pred = np.asarray(pred, dtype=float)
    _, n_leads, n_pts = obs.shape
    ids = list(point_ids) if point_ids is not None else [str(i) for i in range(n_pts)]
    rep = MetricReport(ids, n_leads, return_periods=tuple(return_periods))
    cont = {k: np.full((n_leads, n_pts), np.nan) for k in CONTINUOUS}
    for l in range(n_leads):
        for p in range(n_pts):
            m = continuous_metrics(obs[:, l, p], pred[:, l, p])
            for k in CONTINUOUS:
                cont[k][l, p] = m[k]
    rep.continuous = cont
    if thresholds is not None:
        ev = {k: np.full((n_leads, len(return_periods), n_pts), np.nan) for k in ("precision", "recall", "F1")}
        for j, rp in enumerate(return_periods):
            th = thresholds.column(rp)
            oe = obs >= th[None, None, :]
            pe = pred >= th[None, None, :]
            tp = (oe & pe).sum(axis=0)
            fp = (~oe & pe).sum(axis=0)
            fn = (oe & ~pe).sum(axis=0)
            for l in range(n_leads):
                for p in range(n_pts):
                    s = scores_from_counts(tp[l, p], fp[l, p], fn[l, p])
                    for k in ev:
                        ev[k][l, j, p] = s[k]
        rep.events = ev
    return rep


@dataclass
class Summary:
    values: dict  # metric -> {"mean", "median", "n_valid", "n_undefined"}

    def __getitem__(self, k):
        return self.values[k]


def summarize(values) -> dict:
    v = np.asarray(values, dtype=float).ravel()
    ok = v[np.isfinite(v)]
    if len(ok) == 0:
        raise ValueError("no valid points to aggregate")
    return {"mean": float(ok.mean()), "median": float(np.median(ok)),
            "n_valid": int(len(ok)), "n_undefined": int(len(v) - len(ok))}


def aggregate(report: MetricReport, leads=None, return_periods=None) -> Summary:
    """Mean/median over points (and the selected leads); undefined values are excluded.

    F1, precision and recall are additionally pooled over ``return_periods``
    (default: all stored, i.e. 1.5 to 20 years).
    """
    lidx = np.arange(report.leads) if leads is None else np.asarray(leads) - 1
    out = {}
    for k, arr in report.continuous.items():
        out[k] = summarize(arr[lidx])
    if report.events:
        rps = report.return_periods if return_periods is None else return_periods
        ridx = [list(report.return_periods).index(float(r)) for r in rps]
        for k, arr in report.events.items():
            try:
                out[k] = summarize(arr[lidx][:, ridx])
            except ValueError:
                out[k] = {"mean": np.nan, "median": np.nan, "n_valid": 0, "n_undefined": int(arr[lidx][:, ridx].size)}
    return Summary(out)
