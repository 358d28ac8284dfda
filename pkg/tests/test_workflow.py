import numpy as np
import pytest

from rivermamba import workflow as W
from rivermamba.data import generate_network, simulate
from rivermamba.model import ModelConfig
from rivermamba.training import transform_delta

CFG = ModelConfig(T=2, L=3, K=8, K_hres=4, hindcast_depths=[1, 1], d_state=2, emb_era5=4, emb_glofas=2, emb_cpc=2)


@pytest.fixture(scope="module")
def prep():
    sim = simulate(generate_network(2, 6, 6, 12), 500, seed=2, leads=3, history_years=6)
    return W.Prepared(sim, CFG)


def test_splits_are_gapped_and_training_period_precedes_validation(prep):
    sp = prep.splits
    gap = CFG.T + CFG.L + 2
    assert sp["val"][0] - sp["train"][-1] > gap - 1 and sp["test"][0] - sp["val"][-1] > gap - 1
    assert prep.train_end == sp["train"][-1] + CFG.L + 1
    # the first validation sample reads no day inside the training period's targets
    assert sp["val"][0] - CFG.T - 2 >= prep.train_end


def test_norms_come_from_the_training_period_only(prep):
    sim = prep.sim
    e = sim.era5[:prep.train_end]
    assert np.allclose(prep.norms["era5"].mean, np.nanmean(e, axis=(0, 1)))
    assert not np.isnan(prep.sources["era5"]).any()


def test_batch_alignment(prep):
    t = int(prep.splits["test"][3])
    b = prep.batch(t)
    q = prep.sim.discharge
    assert b.era5.shape == (CFG.T, 12, 6) and b.cpc.shape == (CFG.T, 12, 1) and b.hres.shape == (CFG.L, 12, 3)
    assert np.array_equal(b.discharge, q[t + 1:t + CFG.L + 1])
    assert np.array_equal(b.x_prev, q[t - 1])
    assert np.allclose(transform_delta(b.target, inverse=True) + q[t - 1], b.discharge)
    assert np.array_equal(b.era5, prep.sources["era5"][t - CFG.T - 1:t - 1])
    assert b.static.shape == (12, CFG.static_dim)


def test_thresholds_ignore_data_after_the_training_period(prep):
    sim = prep.sim
    later = sim.discharge.copy()
    later[prep.train_end:] *= 10
    alt = type(sim)(sim.network, sim.start, later, sim.era5, sim.glofas, sim.cpc, sim.hres, sim.history, sim.meta)
    assert np.array_equal(W.fit_run_thresholds(alt, prep.train_end).theta, prep.thresholds.theta)


def test_baselines_and_oracle_scoring(prep):
    days = prep.splits["test"]
    base = W.baseline_forecasts(prep, days)
    assert base["persistence"].shape == (len(days), CFG.L, 12)
    assert np.array_equal(base["persistence"][:, 0], prep.sim.discharge[days - 1])
    obs, reports = W.score(prep, {"oracle": W.observed(prep, days), **base}, days)
    table = W.summary_table(reports, CFG.L)
    assert table.splitlines()[0].startswith("method,lead,R2,KGE,F1")
    assert "oracle,all,100.00,100.00" in table
