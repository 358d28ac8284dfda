import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rivermamba.hydrology import (EULER_GAMMA, RETURN_PERIODS, FloodThresholds, annual_maxima, classify_events,
                                  fit_thresholds, gumbel_fit, lmoments, return_level)


def daily_dates(start, n):
    return np.datetime64(start, "D") + np.arange(n)


def gumbel_draws(rng, n, mu=10.0, beta=2.0):
    return mu - beta * np.log(-np.log(rng.uniform(size=n)))


# annual maxima --------------------------------------------------------------------------

def test_constant_series_and_spike():
    dates = daily_dates("2001-01-01", 365 * 5)
    years, m = annual_maxima(np.full(len(dates), 7.0), dates, min_years=2)
    assert years.tolist() == [2001, 2002, 2003, 2004, 2005] and np.all(m == 7.0)
    v = np.ones(len(dates))
    v[40] = 100.0
    assert annual_maxima(v, dates)[1][0] == 100.0


def test_maxima_match_per_year_loop():
    rng = np.random.default_rng(0)
    dates = daily_dates("1980-01-01", 40 * 365 + 10)
    v = rng.gamma(2.0, 3.0, (len(dates), 3))
    v[rng.random(v.shape) < 0.05] = np.nan
    years, m = annual_maxima(v, dates)
    yr = dates.astype("datetime64[Y]").astype(int) + 1970
    for i, y in enumerate(years):
        for p in range(3):
            block = [x for x, yy in zip(v[:, p], yr) if yy == y and not math.isnan(x)]
            n_days = 366 if (y % 4 == 0 and y % 100 != 0) or y % 400 == 0 else 365
            expect = max(block) if len(block) >= 0.8 * n_days else np.nan
            assert (np.isnan(expect) and np.isnan(m[i, p])) or m[i, p] == expect


def test_incomplete_years_dropped_and_short_record_rejected():
    dates = daily_dates("2000-07-01", 365 * 6)  # first and last calendar years are partial
    years, _ = annual_maxima(np.ones(len(dates)), dates)
    assert years.tolist() == [2001, 2002, 2003, 2004, 2005]
    with pytest.raises(ValueError, match="insufficient record"):
        annual_maxima(np.ones(365 * 3), daily_dates("2001-01-01", 365 * 3))


# L-moments and Gumbel --------------------------------------------------------------------

def test_lmoment_examples():
    assert lmoments([3.0, 3.0, 3.0])[1] == 0.0
    l1, l2 = lmoments([0.0, 1.0])
    assert (l1, l2) == (0.5, 0.5)
    with pytest.raises(ValueError):
        lmoments([1.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=30))
def test_l2_is_half_mean_absolute_pair_difference(xs):
    x = np.array(xs)
    n = len(x)
    pair = sum(abs(a - b) for i, a in enumerate(x) for j, b in enumerate(x) if i != j) / (n * (n - 1))
    l2 = lmoments(x)[1]
    assert l2 == pytest.approx(pair / 2, abs=1e-9 * (1 + np.abs(x).max()))
    assert l2 >= -1e-12


def test_lmoments_monte_carlo():
    rng = np.random.default_rng(1)
    l1, l2 = lmoments(rng.exponential(2.0, 10**6))
    assert l1 == pytest.approx(2.0, rel=0.01) and l2 == pytest.approx(1.0, rel=0.01)  # exponential: lambda2 = scale/2


def test_gumbel_fit_examples():
    assert gumbel_fit([4.0, 4.0, 4.0]) == (4.0, 0.0)
    # two-point sample with lambda1 = gamma and lambda2 = (b - a)/2 = ln 2: the standard Gumbel
    x = np.array([EULER_GAMMA - math.log(2.0), EULER_GAMMA + math.log(2.0)])
    m, b = gumbel_fit(x)
    assert m == pytest.approx(0.0, abs=1e-14) and b == pytest.approx(1.0, abs=1e-14)


def test_gumbel_fit_recovers_parameters_and_converges():
    rng = np.random.default_rng(2)
    mu, beta = gumbel_fit(gumbel_draws(rng, 10**5))
    assert abs(mu - 10) / 10 < 0.02 and abs(beta - 2) / 2 < 0.02
    errs = []
    for n in (10**2, 10**4, 10**6):
        fits = [gumbel_fit(gumbel_draws(np.random.default_rng(s), n)) for s in range(5)]
        errs.append(np.mean([abs(m - 10) + abs(b - 2) for m, b in fits]))
    assert errs[0] > errs[1] > errs[2]


def test_return_level():
    assert return_level(2, 0.0, 1.0) == pytest.approx(-math.log(math.log(2.0)), abs=1e-15)
    assert return_level(2, 5.0, 1.0) == pytest.approx(5.3665129, abs=1e-6)
    assert np.all(return_level(RETURN_PERIODS, 3.0, 0.0) == 3.0)
    assert np.all(np.diff(return_level(RETURN_PERIODS, 3.0, 0.5)) > 0)
    with pytest.raises(ValueError):
        return_level(1.0, 0.0, 1.0)


def test_return_level_two_matches_empirical_median():
    draws = gumbel_draws(np.random.default_rng(3), 10**5)
    mu, beta = gumbel_fit(draws)
    assert abs(return_level(2, mu, beta) - np.median(draws)) / np.median(draws) < 0.02


# thresholds and events -------------------------------------------------------------------

def test_fit_thresholds_table_and_csv_roundtrip():
    rng = np.random.default_rng(4)
    dates = daily_dates("1990-01-01", 365 * 12 + 3)
    q = rng.gamma(2.0, 5.0, (len(dates), 4))
    th = fit_thresholds(q, dates, ["a", "b", "c", "d"])
    assert th.theta.shape == (4, 9) and np.all(np.diff(th.theta, axis=1) > 0) and np.all(th.theta >= 0)
    assert np.all(th.n_years == 12)
    back = FloodThresholds.from_csv(th.to_csv())
    assert back.point_ids == th.point_ids and np.array_equal(back.theta, th.theta)
    assert back.return_periods == th.return_periods
    assert th.to_csv().splitlines()[0] == "point_id,rp,theta,mu,beta,n_years"
    assert np.array_equal(th.column(1.5), th.theta[:, 0])
    with pytest.raises(KeyError):
        th.column(3)


def test_classify_events():
    th = 5.0
    assert not classify_events([1.0, 2.0], th).any()
    assert classify_events([5.0], th).tolist() == [True]
    rng = np.random.default_rng(5)
    x, t = rng.uniform(0, 10, 200), rng.uniform(0, 10, 200)
    assert classify_events(x, t).tolist() == [a >= b for a, b in zip(x, t)]
