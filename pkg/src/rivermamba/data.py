"""Synthetic river networks, their simulated forcings and discharge, and forecast samples.

The simulator is linear in precipitation: every point drains a local linear
reservoir into its channel, and channel flow moves one point downstream per
day. Input sources are noisy views of the simulated state:

* era5-like ``[D, P, 6]``: precip, 3-day mean precip, 30-day smoothed precip,
  local storage, sin/cos of day-of-year (observational channels carry ~1% NaN)
* glofas-like ``[D, P, 3]``: discharge, log1p discharge, local runoff
* cpc-like ``[D, P, 1]``: gauge-style precip
* hres-like archive ``[D, L, P, 3]``: forecast issued on day t for t+1..t+L,
  true precip with lead-growing noise plus sin/cos of the target day-of-year
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import GeoPoint, PointSet
from .nncore.params import decode_tensors, encode_tensors

CELL_AREA_KM2 = 100.0
MM_DAY_TO_M3S = CELL_AREA_KM2 * 1e3 / 86400.0  # 1 mm/day over one cell, in m3/s
DEFAULT_START = "2000-01-01"
V_E, V_G, V_H, V_S = 6, 3, 3, 8
STATIC_NAMES = ("log_area", "elevation", "runoff_coef", "reservoir_k", "log_hops", "slope",
                "n_tributaries", "rain_factor")
HINDCAST_SHIFT = 1  # era5/glofas-like inputs end at t-2
CPC_SHIFT = 2  # cpc-like input ends at t-3

MAGIC = b"RSDS"
VERSION = 1


# network -------------------------------------------------------------------------------

@dataclass
class SyntheticNetwork:
    width: int
    height: int
    xy: np.ndarray  # [N, 2] grid (x, y)
    downstream: np.ndarray  # [N] index of the downstream point, -1 at outlets
    elevation: np.ndarray
    runoff_coef: np.ndarray
    reservoir_k: np.ndarray
    rain_factor: np.ndarray

    def __len__(self):
        return len(self.xy)

    @property
    def upstream_first(self) -> np.ndarray:
        """Point indices ordered so every point comes before its downstream neighbour."""
        return np.argsort(-self.hops, kind="stable")

    @property
    def hops(self) -> np.ndarray:
        h = np.zeros(len(self), dtype=int)
        for i in range(len(self)):
            j, n = i, 0
            while self.downstream[j] >= 0:
                j, n = self.downstream[j], n + 1
                if n > len(self):
                    raise ValueError("river network contains a cycle")
            h[i] = n
        return h

    @property
    def drainage_area(self) -> np.ndarray:
        """Number of points draining through each point, itself included."""
        area = np.ones(len(self))
        for i in self.upstream_first:
            if self.downstream[i] >= 0:
                area[self.downstream[i]] += area[i]
        return area

    def static_attributes(self) -> np.ndarray:
        down = self.downstream
        slope = np.where(down >= 0, self.elevation - self.elevation[np.maximum(down, 0)], 0.0)
        tribs = np.bincount(down[down >= 0], minlength=len(self)).astype(float)
        return np.stack([np.log(self.drainage_area), self.elevation / 100.0, self.runoff_coef,
                         self.reservoir_k, np.log1p(self.hops), slope / 10.0, tribs, self.rain_factor], axis=1)

    def lat_lon(self):
        lat = 50.0 - (self.xy[:, 1] + 0.5) * 0.1
        lon = 5.0 + (self.xy[:, 0] + 0.5) * 0.1
        return lat, lon

    def pointset(self) -> PointSet:
        lat, lon = self.lat_lon()
        attrs = self.static_attributes()
        pts = [GeoPoint(f"p{int(y) * self.width + int(x)}", float(lat[i]), float(lon[i]), float(self.elevation[i]),
                        (int(x), int(y)), attrs[i]) for i, (x, y) in enumerate(self.xy)]
        return PointSet(pts, self.width, self.height)

    def tensors(self):
        return [("net.xy", self.xy), ("net.downstream", self.downstream), ("net.elevation", self.elevation),
                ("net.runoff_coef", self.runoff_coef), ("net.reservoir_k", self.reservoir_k),
                ("net.rain_factor", self.rain_factor)]

    @classmethod
    def from_tensors(cls, width, height, t):
        return cls(width, height, t["net.xy"].astype(np.int64), t["net.downstream"].astype(np.int64),
                   t["net.elevation"], t["net.runoff_coef"], t["net.reservoir_k"], t["net.rain_factor"])


def generate_network(seed: int, width: int, height: int, n_points: int, n_outlets: int | None = None):
    """Random spanning forest grown upstream from outlets on a ``width x height`` grid.

    Each new point attaches to a random existing point through a free
    4-neighbour cell and sits higher than it, so downstream always descends.
    """
    if not 1 <= n_points <= width * height:
        raise ValueError(f"n_points must lie in 1..{width * height}")
    rng = np.random.default_rng(seed)
    n_outlets = max(1, round(n_points / 64)) if n_outlets is None else n_outlets
    occupied = np.full((height, width), -1)
    xy, down, elev = [], [], []

    def add(x, y, parent):
        occupied[y, x] = len(xy)
        xy.append((x, y))
        down.append(parent)
        elev.append(rng.uniform(0.0, 50.0) if parent < 0 else elev[parent] + rng.uniform(2.0, 30.0))
        active.append(len(xy) - 1)

    def add_root():
        free = np.flatnonzero(occupied.ravel() < 0)
        c = int(rng.choice(free))
        add(c % width, c // width, -1)

    active: list = []
    for _ in range(min(n_outlets, n_points)):
        add_root()
    while len(xy) < n_points:
        if not active:
            add_root()
            continue
        k = int(rng.integers(len(active)))
        node = active[k]
        x0, y0 = xy[node]
        free = [(x0 + dx, y0 + dy) for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1))
                if 0 <= x0 + dx < width and 0 <= y0 + dy < height and occupied[y0 + dy, x0 + dx] < 0]
        if not free:
            active.pop(k)
            continue
        x, y = free[int(rng.integers(len(free)))]
        add(x, y, node)

    n = len(xy)
    xy_arr = np.array(xy, dtype=np.int64)
    gx, gy = xy_arr[:, 0] / width, xy_arr[:, 1] / height
    phase = rng.uniform(0, 2 * np.pi, 2)
    rain_factor = 1.0 + 0.3 * np.sin(2 * np.pi * gx + phase[0]) * np.cos(np.pi * gy + phase[1])
    return SyntheticNetwork(width, height, xy_arr, np.array(down, dtype=np.int64), np.array(elev),
                            rng.uniform(0.3, 0.8, n), rng.uniform(0.15, 0.6, n), rain_factor)


# simulation ----------------------------------------------------------------------------

def seasonal_phase(dates):
    doy = (np.asarray(dates, dtype="datetime64[D]") - np.asarray(dates, dtype="datetime64[D]").astype("datetime64[Y]")).astype(float)
    ang = 2 * np.pi * doy / 365.25
    return np.sin(ang), np.cos(ang)


def synthetic_precipitation(network: SyntheticNetwork, dates, rng, base=2.0, storm_rate=0.25, span=(3, 6),
                            persistence=0.8):
    """Daily precipitation ``[D, N]`` in mm: seasonal drizzle plus heavy-tailed storms.

    Weather persists over several days: the drizzle level follows an AR(1)
    smoother with coefficient ``persistence``, and each storm drifts across
    the grid for ``span`` days under a smooth intensity envelope. ``storm_rate``
    is the mean number of storm-days per day.
    """
    n_days = len(dates)
    s, _ = seasonal_phase(dates)
    season = 1.0 + 0.5 * s
    shocks = rng.gamma(0.5, 2.0, n_days)
    level = np.empty(n_days)
    acc = 1.0
    for d in range(n_days):
        acc = persistence * acc + (1.0 - persistence) * shocks[d]
        level[d] = acc
    precip = (base * 0.5 * season * level)[:, None] * (1.0 + 0.2 * rng.standard_normal((n_days, len(network))))
    precip = np.maximum(precip, 0.0)
    x = network.xy[:, 0].astype(float)
    y = network.xy[:, 1].astype(float)
    mean_span = 0.5 * (span[0] + span[1])
    counts = rng.poisson(storm_rate * season / mean_span)
    for d in np.flatnonzero(counts):
        for _ in range(counts[d]):
            cx, cy = rng.uniform(0, network.width), rng.uniform(0, network.height)
            radius = rng.uniform(3.0, 10.0)
            depth = 12.0 * (1.0 + rng.pareto(2.5))
            n = int(rng.integers(span[0], span[1] + 1))
            vx, vy = rng.normal(0.0, 1.5, 2)
            envelope = np.sin(np.pi * (np.arange(n) + 0.5) / n)
            envelope *= mean_span / 2.0 / envelope.sum()
            for j in range(min(n, n_days - d)):
                dist2 = (x - cx - vx * j) ** 2 + (y - cy - vy * j) ** 2
                precip[d + j] += depth * envelope[j] * np.exp(-dist2 / (2 * radius ** 2))
    return precip * network.rain_factor


def steady_storage(network, mean_precip):
    """Reservoir storage in equilibrium with a constant precipitation input."""
    inflow = network.runoff_coef * mean_precip
    return (1.0 - network.reservoir_k) * inflow / network.reservoir_k


def linear_reservoir(inflow, k, s0):
    """``R_t = k (S_{t-1} + I_t)``, ``S_t = (1 - k)(S_{t-1} + I_t)``; returns (runoff, storage)."""
    runoff = np.empty_like(inflow)
    storage = np.empty_like(inflow)
    s = np.asarray(s0, dtype=float).copy()
    for t in range(len(inflow)):
        w = s + inflow[t]
        runoff[t] = k * w
        s = w - runoff[t]
        storage[t] = s
    return runoff, storage


def route(runoff, downstream, q0=None):
    """Channel flow: ``Q_t(p) = R_t(p) + sum of Q_{t-1}(u)`` over points ``u`` draining into ``p``."""
    n_days, n = runoff.shape
    has_down = downstream >= 0
    src, dst = np.flatnonzero(has_down), downstream[has_down]
    q = np.empty_like(runoff)
    prev = np.zeros(n) if q0 is None else np.asarray(q0, dtype=float)
    for t in range(n_days):
        prev = runoff[t] + np.bincount(dst, weights=prev[src], minlength=n)
        q[t] = prev
    return q


def steady_discharge(network, runoff_rate):
    q = np.asarray(runoff_rate, dtype=float).copy()
    for i in network.upstream_first:
        if network.downstream[i] >= 0:
            q[network.downstream[i]] += q[i]
    return q


def run_hydrology(network, precip, s0=None):
    """Noiseless simulator: precip ``[D, N]`` mm/day -> (discharge m3/s, runoff m3/s, storage mm)."""
    if s0 is None:
        s0 = steady_storage(network, precip.mean(axis=0))
    inflow = network.runoff_coef * precip
    runoff_mm, storage = linear_reservoir(inflow, network.reservoir_k, s0)
    q0 = steady_discharge(network, network.reservoir_k * s0 / (1.0 - network.reservoir_k) * MM_DAY_TO_M3S)
    runoff = runoff_mm * MM_DAY_TO_M3S
    return route(runoff, network.downstream, q0), runoff, storage


def hres_noise_scale(n_leads: int, base=0.15, growth=0.1):
    """Relative noise of the forecast precip per lead (nondecreasing)."""
    return base + growth * np.arange(n_leads)


@dataclass
class Simulation:
    network: SyntheticNetwork
    start: np.datetime64  # date of day 0 of the sample period
    discharge: np.ndarray  # [D, N]
    era5: np.ndarray
    glofas: np.ndarray
    cpc: np.ndarray
    hres: np.ndarray  # [D, L, N, V_h]
    history: np.ndarray  # [H, N] discharge before ``start``
    meta: dict = field(default_factory=dict)

    @property
    def days(self):
        return len(self.discharge)

    @property
    def leads(self):
        return self.hres.shape[1]

    @property
    def dates(self):
        return self.start + np.arange(self.days)

    @property
    def history_dates(self):
        return self.start - len(self.history) + np.arange(len(self.history))

    @property
    def points(self) -> PointSet:
        return self.network.pointset()


def simulate(network: SyntheticNetwork, days: int, seed: int, leads: int = 7, history_years: int = 10,
             start=DEFAULT_START, nan_fraction: float = 0.01, min_days: int = 400) -> Simulation:
    """Simulate ``history_years`` of climate record plus ``days`` of sample period.

    The climate record only keeps discharge; it precedes the sample period and
    serves threshold fitting. Forcings are simulated ``leads`` days past the
    end so the forecast archive is complete.
    """
    if days < min_days:
        raise ValueError(f"days must be >= {min_days}")
    start = np.datetime64(start, "D")
    n_hist = int(round(history_years * 365.25))
    all_dates = start - n_hist + np.arange(n_hist + days + leads)
    precip = synthetic_precipitation(network, all_dates, np.random.default_rng([seed, 0xDA7A]))
    sim = observe(network, precip, start, n_hist, days, leads, seed, nan_fraction)
    sim.meta["history_years"] = history_years
    return sim


def observe(network, precip, start, n_hist, days, leads, seed, nan_fraction=0.01) -> Simulation:
    """Run the hydrology on ``precip`` and derive the noisy input sources.

    Every derived value on day d depends only on ``precip[:d + 1]`` (the
    forecast archive on day t reads t+1..t+L by design), and the noise draws do
    not depend on the data, so altering precipitation from some day onward
    leaves all earlier inputs unchanged.
    """
    rng = np.random.default_rng([seed, 0x0B5])
    start = np.datetime64(start, "D")
    all_dates = start - n_hist + np.arange(len(precip))
    n = len(network)
    q, runoff, storage = run_hydrology(network, precip, s0=steady_storage(network, precip[0]))
    sl = slice(n_hist, n_hist + days)
    obs = lambda a, rel: a * (1.0 + rel * rng.standard_normal(a.shape))  # noqa: E731

    p = precip[sl]
    sin_d, cos_d = seasonal_phase(all_dates[sl])
    csum = np.cumsum(np.vstack([np.zeros((3, n)), precip]), axis=0)
    p3 = (csum[3:] - csum[:-3])[sl] / 3.0
    smooth = np.empty_like(precip)
    acc = precip[0].copy()
    for t in range(len(precip)):
        acc = 0.9 * acc + 0.1 * precip[t]
        smooth[t] = acc
    era5 = np.stack([np.maximum(obs(p, 0.1), 0.0), p3, smooth[sl], obs(storage[sl], 0.05),
                     np.repeat(sin_d[:, None], n, 1), np.repeat(cos_d[:, None], n, 1)], axis=-1)
    holes = rng.random(era5[..., :4].shape) < nan_fraction
    era5[..., :4][holes] = np.nan
    qs = q[sl]
    glofas = np.stack([np.maximum(obs(qs, 0.02), 0.0), np.log1p(qs), runoff[sl]], axis=-1)
    cpc = np.maximum(obs(p, 0.2), 0.0)[..., None]

    scale = hres_noise_scale(leads)
    hres = np.empty((days, leads, n, V_H))
    for l in range(leads):
        lo = n_hist + 1 + l
        future = precip[lo:lo + days]
        hres[:, l, :, 0] = future + scale[l] * (future + 1.0) * rng.standard_normal(future.shape)
        fs, fc = seasonal_phase(all_dates[lo:lo + days])
        hres[:, l, :, 1] = fs[:, None]
        hres[:, l, :, 2] = fc[:, None]
    meta = {"seed": int(seed), "nan_fraction": nan_fraction}
    return Simulation(network, start, qs, era5, glofas, cpc, hres, q[:n_hist], meta)


# samples -------------------------------------------------------------------------------

@dataclass
class ForecastSample:
    era5: np.ndarray  # [T, P, V_e]
    glofas: np.ndarray  # [T, P, V_g]
    cpc: np.ndarray  # [T, P, 1]
    hres: np.ndarray  # [L, P, V_h]
    static: np.ndarray  # [P, V_s]
    target: np.ndarray  # [L, P] m3/s
    x_prev: np.ndarray  # [P] m3/s
    issue_date: np.datetime64
    index: int = -1


def input_windows(t: int, T: int, L: int):
    """Day index ranges ``(hindcast, cpc, target)`` of the sample issued on day ``t``."""
    hind = np.arange(t - T - HINDCAST_SHIFT, t - HINDCAST_SHIFT)
    cpc = hind - (CPC_SHIFT - HINDCAST_SHIFT)
    return hind, cpc, np.arange(t + 1, t + L + 1)


def issuance_range(days: int, T: int, L: int) -> np.ndarray:
    """Issuance day indices for which all inputs and targets lie inside the record."""
    first, last = T + CPC_SHIFT, days - L - 1
    if last < first:
        raise ValueError(f"insufficient span: {days} days cannot hold T={T} and L={L}")
    return np.arange(first, last + 1)


def make_sample(sim: Simulation, t: int, T: int, L: int) -> ForecastSample:
    if L > sim.leads:
        raise ValueError(f"forecast archive holds {sim.leads} leads, {L} requested")
    if t not in range(T + CPC_SHIFT, sim.days - L):
        raise ValueError(f"insufficient span for issuance day {t}")
    hind, cpc, tgt = input_windows(t, T, L)
    h = slice(hind[0], hind[-1] + 1)
    c = slice(cpc[0], cpc[-1] + 1)
    return ForecastSample(sim.era5[h], sim.glofas[h], sim.cpc[c], sim.hres[t, :L], sim.network.static_attributes(),
                          sim.discharge[tgt[0]:tgt[-1] + 1], sim.discharge[t - 1], sim.start + t, int(t))


def assemble_samples(sim: Simulation, T: int, L: int) -> list:
    """One sample per valid issuance day (arrays are views into ``sim``)."""
    return [make_sample(sim, int(t), T, L) for t in issuance_range(sim.days, T, L)]


def chronological_split(issue_days, fractions=(0.6, 0.15, 0.25), gap: int = 0) -> dict:
    """Split issuance days into ordered, disjoint train/val/test blocks.

    ``gap`` issuance days are dropped before each later block so targets of
    one block never overlap inputs of the next.
    """
    issue_days = np.asarray(issue_days)
    if not np.isclose(sum(fractions), 1.0):
        raise ValueError("split fractions must sum to 1")
    n = len(issue_days)
    cuts = np.round(np.cumsum(fractions) * n).astype(int)
    train = issue_days[:cuts[0]]
    val = issue_days[cuts[0] + gap:cuts[1]]
    test = issue_days[cuts[1] + gap:]
    if min(len(train), len(val), len(test)) == 0:
        raise ValueError("a split is empty")
    return {"train": train, "val": val, "test": test}


# container -----------------------------------------------------------------------------

def save_dataset(sim: Simulation, path):
    """Binary container: ``RSDS`` u32 version, u32+PointSet CSV, u32+JSON meta, tensor payload."""
    meta = dict(sim.meta, start=str(sim.start), width=sim.network.width, height=sim.network.height)
    csv_blob = sim.points.to_csv().encode() if len(sim.network) else b""
    meta_blob = json.dumps(meta, sort_keys=True).encode()
    tensors = sim.network.tensors() + [("discharge", sim.discharge), ("era5", sim.era5), ("glofas", sim.glofas),
                                       ("cpc", sim.cpc), ("hres", sim.hres), ("history", sim.history)]
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    for blob in (csv_blob, meta_blob):
        buf.write(struct.pack("<I", len(blob)))
        buf.write(blob)
    buf.write(encode_tensors(tensors, header=False))
    Path(path).write_bytes(buf.getvalue())


def load_dataset(path) -> Simulation:
    blob = Path(path).read_bytes()
    buf = io.BytesIO(blob)
    if buf.read(4) != MAGIC:
        raise ValueError("not a dataset container (bad magic)")
    version = _unpack(buf, "<I")
    if version != VERSION:
        raise ValueError(f"dataset version {version} not supported (expected {VERSION})")
    _chunk(buf)  # PointSet CSV, rebuilt from the network tensors
    meta = json.loads(_chunk(buf).decode())
    t = dict(decode_tensors(buf, header=False))
    net = SyntheticNetwork.from_tensors(meta.pop("width"), meta.pop("height"), t)
    start = np.datetime64(meta.pop("start"), "D")
    return Simulation(net, start, t["discharge"], t["era5"], t["glofas"], t["cpc"], t["hres"], t["history"], meta)


def _unpack(buf, fmt):
    size = struct.calcsize(fmt)
    raw = buf.read(size)
    if len(raw) != size:
        raise ValueError("truncated dataset file")
    return struct.unpack(fmt, raw)[0]


def _chunk(buf):
    n = _unpack(buf, "<I")
    raw = buf.read(n)
    if len(raw) != n:
        raise ValueError("truncated dataset file")
    return raw
