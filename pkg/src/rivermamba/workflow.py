"""End-to-end runs: prepare normalised batches, train, forecast and score against baselines."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .baselines import build_climatology, climatology_forecast, persistence_forecast
from .data import CPC_SHIFT, Simulation, chronological_split, input_windows, issuance_range
from .hydrology import FloodThresholds, fit_thresholds
from .metrics import F1_RETURN_PERIODS, aggregate, evaluate_forecasts
from .model import ModelConfig, RiverMamba, build_orders, reconstruct_discharge
from .training import (NormStats, TrainConfig, apply_norm, compute_norm_stats, fill_missing, fit,
                       sample_weights, severity_rank, transform_delta)

SOURCES = ("era5", "glofas", "cpc", "hres")


@dataclass
class Batch:
    era5: np.ndarray
    glofas: np.ndarray
    cpc: np.ndarray
    hres: np.ndarray
    static: np.ndarray
    orders: dict
    target: np.ndarray  # transformed delta [L, P]
    weights: np.ndarray  # [L, P]
    discharge: np.ndarray  # untransformed target [L, P]
    x_prev: np.ndarray
    day: int


def training_period_end(splits, L: int) -> int:
    """First day index not covered by any training sample's inputs or targets."""
    return int(splits["train"][-1]) + L + 1


def threshold_record(sim: Simulation, end_day: int | None = None):
    """Discharge and dates of the climate record plus the sample period up to ``end_day``."""
    end = sim.days if end_day is None else end_day
    q = np.vstack([sim.history, sim.discharge[:end]])
    dates = np.concatenate([sim.history_dates, sim.dates[:end]])
    return q, dates


def fit_run_thresholds(sim: Simulation, end_day: int | None = None) -> FloodThresholds:
    q, dates = threshold_record(sim, end_day)
    return fit_thresholds(q, dates, sim.points.ids)


class Prepared:
    """Normalised sources, static features, orders, thresholds and splits for one run."""

    def __init__(self, sim: Simulation, cfg: ModelConfig, fractions=(0.6, 0.15, 0.25), thresholds=None,
                 norms=None, alpha: float = 0.25):
        self.sim = sim
        self.cfg = cfg
        self.alpha = alpha
        self.points = sim.points
        days = issuance_range(sim.days, cfg.T, cfg.L)
        self.splits = chronological_split(days, fractions, gap=cfg.T + cfg.L + CPC_SHIFT)
        self.train_end = training_period_end(self.splits, cfg.L)
        self.thresholds = fit_run_thresholds(sim, self.train_end) if thresholds is None else thresholds
        if norms is None:
            end = self.train_end
            norms = {name: compute_norm_stats(getattr(sim, name)[:end]) for name in SOURCES}
            norms["static"] = compute_norm_stats(self.points.static_matrix())
        self.norms = norms
        self.sources = {name: fill_missing(apply_norm(getattr(sim, name), norms[name])) for name in SOURCES}
        static = apply_norm(self.points.static_matrix(), norms["static"])
        if cfg.positional:
            xyz = self.points.static_matrix(positional=True)[:, -3:]
            static = np.concatenate([static, xyz], axis=1)
        self.static = static
        self.orders = build_orders(self.points, cfg)

    def batch(self, t: int) -> Batch:
        cfg, s = self.cfg, self.sources
        hind, cpc, tgt = input_windows(int(t), cfg.T, cfg.L)
        q = self.sim.discharge
        discharge = q[tgt[0]:tgt[-1] + 1]
        x_prev = q[t - 1]
        return Batch(s["era5"][hind[0]:hind[-1] + 1], s["glofas"][hind[0]:hind[-1] + 1],
                     s["cpc"][cpc[0]:cpc[-1] + 1], s["hres"][t, :cfg.L], self.static, self.orders,
                     transform_delta(discharge - x_prev[None]),
                     sample_weights(discharge, self.thresholds.theta, self.alpha, self.thresholds.return_periods),
                     discharge, x_prev, int(t))

    def batches(self, split: str):
        return BatchView(self, self.splits[split])


class BatchView:
    """Lazy sequence of batches over issuance days."""

    def __init__(self, prepared: Prepared, days):
        self.prepared = prepared
        self.days = np.asarray(days)

    def __len__(self):
        return len(self.days)

    def __getitem__(self, i):
        return self.prepared.batch(int(self.days[i]))


def train_model(prep: Prepared, train_cfg: TrainConfig, seed: int = 0, progress=None):
    model = RiverMamba(prep.cfg, seed=seed)
    result = fit(model, prep.batches("train"), prep.batches("val"), train_cfg, progress=progress)
    model.params.load_snapshot(result.best_state)
    return model, result


def forecast(model: RiverMamba, prep: Prepared, days) -> np.ndarray:
    """Discharge forecasts ``[N, L, P]`` for the given issuance days."""
    out = []
    for t in days:
        b = prep.batch(int(t))
        y = model.forward(b.era5, b.glofas, b.cpc, b.hres, b.static, b.orders).data
        out.append(reconstruct_discharge(y, b.x_prev))
    return np.array(out)


def observed(prep: Prepared, days) -> np.ndarray:
    q = prep.sim.discharge
    return np.array([q[t + 1:t + prep.cfg.L + 1] for t in days])


def baseline_forecasts(prep: Prepared, days, climatology_statistic="median"):
    q, dates = threshold_record(prep.sim, prep.train_end)
    table = build_climatology(q, dates, prep.points.ids)
    L = prep.cfg.L
    pers = np.array([persistence_forecast(prep.sim.discharge[t - 1], L) for t in days])
    clim = np.array([climatology_forecast(prep.sim.start + int(t), table, L, climatology_statistic) for t in days])
    return {"persistence": pers, "climatology": clim}


def forecast_rows(prep: Prepared, days, fc) -> str:
    """CSV ``point_id, issuance, lead, discharge, severity_rp`` for forecasts ``[N, L, P]``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["point_id", "issuance", "lead", "discharge", "severity_rp"])
    th = prep.thresholds
    ids = prep.points.ids
    for n, t in enumerate(days):
        sev = severity_rank(fc[n], th.theta[None], th.return_periods)
        issue = str(prep.sim.start + int(t))
        for l in range(fc.shape[1]):
            for p, pid in enumerate(ids):
                w.writerow([pid, issue, l + 1, repr(float(fc[n, l, p])), f"{sev[l, p]:g}"])
    return buf.getvalue()


def score(prep: Prepared, forecasts: dict, days):
    """Per-point reports and summaries for each named forecast ``[N, L, P]``."""
    obs = observed(prep, days)
    reports = {name: evaluate_forecasts(obs, fc, prep.thresholds, prep.points.ids, F1_RETURN_PERIODS)
               for name, fc in forecasts.items()}
    return obs, reports


def summary_table(reports: dict, leads: int) -> str:
    """Table layout with R2, KGE and F1 (x100): means over points, all leads and per lead.

    F1 is averaged over the 1.5 to 20 year return periods; ``F1_1.5`` and the
    median KGE are reported alongside.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "lead", "R2", "KGE", "F1", "F1_1.5", "KGE_median", "n_undefined_KGE", "n_undefined_F1"])
    for name, rep in reports.items():
        for lead in ["all"] + list(range(1, leads + 1)):
            sel = None if lead == "all" else [lead]
            s = aggregate(rep, leads=sel)
            s15 = aggregate(rep, leads=sel, return_periods=[1.5])
            w.writerow([name, lead, f"{100 * s['R2']['mean']:.2f}", f"{100 * s['KGE']['mean']:.2f}",
                        f"{100 * s['F1']['mean']:.2f}", f"{100 * s15['F1']['mean']:.2f}",
                        f"{100 * s['KGE']['median']:.2f}", s["KGE"]["n_undefined"], s["F1"]["n_undefined"]])
    return buf.getvalue()


def norms_to_dict(norms: dict) -> dict:
    return {k: v.to_dict() for k, v in norms.items()}


def norms_from_dict(d: dict) -> dict:
    return {k: NormStats.from_dict(v) for k, v in d.items()}
