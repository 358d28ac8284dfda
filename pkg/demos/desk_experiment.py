#!/usr/bin/env python3
"""Train the desk-scale model and compare it with persistence and climatology.

Uses configs/desk.json. Takes roughly 10-15 minutes on one CPU core. Pass a
number of epochs as the first argument for a shorter run.
"""
import sys
from pathlib import Path

from rivermamba import workflow as W
from rivermamba.config import RunConfig
from rivermamba.data import generate_network, simulate
from rivermamba.metrics import aggregate

cfg = RunConfig.load(Path(__file__).resolve().parents[1] / "configs" / "desk.json")
if len(sys.argv) > 1:
    cfg.optimizer["epochs"] = int(sys.argv[1])
d = cfg.data
sim = simulate(generate_network(cfg.seed, d.width, d.height, d.points), d.days, cfg.seed,
               leads=cfg.model.L, history_years=d.history_years, start=d.start)
prep = W.Prepared(sim, cfg.model, tuple(cfg.split.fractions), alpha=cfg.loss.alpha)
print({k: len(v) for k, v in prep.splits.items()})

model, result = W.train_model(prep, cfg.train_config(), seed=cfg.seed, progress=print)
print(f"loss {result.initial_loss:.3f} -> {result.final_loss:.3f}")

days = prep.splits["test"]
forecasts = {"model": W.forecast(model, prep, days), **W.baseline_forecasts(prep, days)}
_, reports = W.score(prep, forecasts, days)
print(W.summary_table(reports, cfg.model.L))
for name, rep in reports.items():
    kge = [aggregate(rep, leads=[l])["KGE"]["median"] for l in range(1, cfg.model.L + 1)]
    print(f"{name:12s} median KGE by lead " + " ".join(f"{v:6.3f}" for v in kge))
