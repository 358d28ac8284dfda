"""Loss weighting, target transform, normalisation and the optimisation loop."""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .hydrology import RETURN_PERIODS
from .nncore.tensor import Tape, _data, _record


# weighting ----------------------------------------------------------------------------

def severity_rank(x, thresholds, return_periods=RETURN_PERIODS):
    """Largest return period whose threshold ``x`` reaches; 0 when below all.

    ``thresholds[..., R]`` holds one threshold per return period (ascending)
    and broadcasts against ``x[...]``.
    """
    x = np.asarray(x, dtype=float)
    th = np.asarray(thresholds, dtype=float)
    rps = np.asarray(return_periods, dtype=float)
    hit = x[..., None] >= th
    return np.where(hit, rps, 0.0).max(axis=-1)


def loss_weight(r_hat):
    """Return-period weight: the return period itself above 1 year, else 1."""
    r_hat = np.asarray(r_hat, dtype=float)
    return np.where(r_hat > 1.0, r_hat, 1.0)


def leadtime_weight(lead, n_leads, alpha=0.25):
    """``exp(alpha * (L - l + 1))`` for 1-based lead ``l``."""
    lead = np.asarray(lead)
    if np.any(lead < 1) or np.any(lead > n_leads):
        raise ValueError("lead must lie in 1..L")
    return np.exp(alpha * (n_leads - lead + 1))


def sample_weights(target, thresholds, alpha=0.25, return_periods=RETURN_PERIODS):
    """Weights ``[L, P]`` for an untransformed target ``[L, P]`` and thresholds ``[P, R]``."""
    target = np.asarray(target, dtype=float)
    n_leads = target.shape[0]
    w_hat = loss_weight(severity_rank(target, thresholds[None], return_periods))
    u_hat = leadtime_weight(np.arange(1, n_leads + 1), n_leads, alpha)
    return u_hat[:, None] * w_hat


def transform_delta(delta, inverse=False):
    """Sign-log transform ``sign(d) log(1 + |d|)`` or its inverse ``sign(y)(e^|y| - 1)``."""
    d = np.asarray(delta, dtype=float)
    if inverse:
        return np.sign(d) * np.expm1(np.abs(d))
    return np.sign(d) * np.log1p(np.abs(d))


def weighted_mse(pred, target, weights):
    """Mean over all entries of ``weights * (target - pred)**2``.

    ``pred`` may be a Tensor; ``target`` and ``weights`` are constants.
    """
    p_ = _data(pred)
    t_ = np.asarray(target, dtype=float)
    w_ = np.asarray(weights, dtype=float)
    if not (p_.shape == t_.shape == w_.shape):
        raise ValueError(f"shape mismatch: pred {p_.shape}, target {t_.shape}, weights {w_.shape}")
    r = t_ - p_
    n = p_.size
    return _record(np.array((w_ * r * r).sum() / n), (pred,), lambda g: (-2.0 * g * w_ * r / n,))


# normalisation -------------------------------------------------------------------------

@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray  # True where the training std was zero

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "constant": self.constant.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["mean"], float), np.array(d["std"], float), np.array(d["constant"], bool))


def compute_norm_stats(x, axis=None) -> NormStats:
    """Per-variable (last axis) mean and std, ignoring NaN entries."""
    x = np.asarray(x, dtype=float)
    axis = tuple(range(x.ndim - 1)) if axis is None else axis
    mu = np.nanmean(x, axis=axis)
    sd = np.nanstd(x, axis=axis)
    constant = ~(sd > 0)
    return NormStats(mu, np.where(constant, 1.0, sd), constant)


def apply_norm(x, stats: NormStats):
    """Standardise; constant variables are only centred."""
    return (np.asarray(x, dtype=float) - stats.mean) / stats.std


def denormalize(x, stats: NormStats):
    return np.asarray(x, dtype=float) * stats.std + stats.mean


def fill_missing(x, value=0.0):
    """Replace NaN entries (after normalisation, i.e. by the mean)."""
    x = np.asarray(x, dtype=float)
    return np.where(np.isnan(x), value, x)


# optimiser -----------------------------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 8
    lr: float = 6e-4
    min_lr: float = 9e-5
    weight_decay: float = 1e-3
    warmup_epochs: float = 1.0
    grad_clip: float = 10.0
    alpha: float = 0.25
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    samples_per_epoch: int | None = None
    val_samples: int | None = None
    seed: int = 0
    log_every: int = 50


class AdamW:
    """Adam with decoupled weight decay; state kept in the ParamStore."""

    def __init__(self, params, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.params = params
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0

    def step(self, lr):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for name, p in self.params.items():
            if p.grad is None:
                continue
            st = self.params.state.setdefault(name, {"m": np.zeros_like(p.data), "v": np.zeros_like(p.data)})
            g = p.grad
            st["m"] = self.b1 * st["m"] + (1 - self.b1) * g
            st["v"] = self.b2 * st["v"] + (1 - self.b2) * g * g
            if self.weight_decay and p.ndim >= 2:
                p.data = p.data * (1.0 - lr * self.weight_decay)
            p.data = p.data - lr * (st["m"] / c1) / (np.sqrt(st["v"] / c2) + self.eps)


def clip_grad_norm(params, max_norm):
    """Scale all gradients so their global L2 norm is at most ``max_norm``; returns the norm."""
    grads = [p.grad for p in params.values() if p.grad is not None]
    total = math.sqrt(sum(float((g * g).sum()) for g in grads))
    if total > max_norm:
        s = max_norm / (total + 1e-12)
        for p in params.values():
            if p.grad is not None:
                p.grad = p.grad * s
    return total


def cosine_lr(step, total_steps, warmup_steps, lr, min_lr):
    """Linear warmup to ``lr`` then cosine annealing down to ``min_lr``."""
    if warmup_steps > 0 and step < warmup_steps:
        return lr * (step + 1) / warmup_steps
    span = max(total_steps - warmup_steps, 1)
    frac = min(max(step - warmup_steps, 0) / span, 1.0)
    return min_lr + 0.5 * (lr - min_lr) * (1.0 + math.cos(math.pi * frac))


# fitting -------------------------------------------------------------------------------

@dataclass
class FitResult:
    best_state: dict
    best_val_loss: float
    trace: list = field(default_factory=list)
    initial_loss: float = float("nan")
    final_loss: float = float("nan")

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "step", "lr", "train_loss", "val_loss"])
        for row in self.trace:
            w.writerow([row["epoch"], row["step"], f"{row['lr']:.8g}", f"{row['train_loss']:.10g}",
                        "" if row["val_loss"] is None else f"{row['val_loss']:.10g}"])
        return buf.getvalue()


def batch_loss(model, batch, training, rng=None):
    pred = model.forward(batch.era5, batch.glofas, batch.cpc, batch.hres, batch.static, batch.orders,
                         training=training, rng=rng)
    return weighted_mse(pred, batch.target, batch.weights)


def evaluate_loss(model, batches) -> float:
    losses = [float(batch_loss(model, b, training=False).data) for b in batches]
    return float(np.mean(losses)) if losses else float("nan")


def fit(model, train_batches, val_batches, cfg: TrainConfig, progress=None) -> FitResult:
    """Train ``model`` in place and return the best-validation state.

    ``train_batches`` and ``val_batches`` are sequences (or callables returning
    a sequence per epoch) of objects carrying ``era5, glofas, cpc, hres,
    static, orders, target, weights``.
    """
    rng = np.random.default_rng(cfg.seed)
    params = model.params
    opt = AdamW(params, cfg.betas, cfg.eps, cfg.weight_decay)
    n_train = len(train_batches)
    per_epoch = n_train if cfg.samples_per_epoch is None else min(cfg.samples_per_epoch, n_train)
    total_steps = per_epoch * cfg.epochs
    warmup_steps = int(round(cfg.warmup_epochs * per_epoch))
    val_idx = np.arange(len(val_batches))
    if cfg.val_samples is not None and cfg.val_samples < len(val_idx):
        val_idx = np.linspace(0, len(val_idx) - 1, cfg.val_samples).round().astype(int)
    val_set = [val_batches[i] for i in val_idx]

    best_state, best_val = params.snapshot(), float("inf")
    trace = []
    step = 0
    initial = evaluate_loss(model, [train_batches[i] for i in range(min(per_epoch, n_train))][:32])
    running = []
    t0 = time.time()
    for epoch in range(cfg.epochs):
        order = rng.permutation(n_train)[:per_epoch]
        epoch_losses = []
        for i in order:
            batch = train_batches[int(i)]
            lr = cosine_lr(step, total_steps, warmup_steps, cfg.lr, cfg.min_lr)
            params.zero_grad()
            with Tape() as tape:
                loss = batch_loss(model, batch, training=True, rng=rng)
            value = float(loss.data)
            if not math.isfinite(value):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}, step {step}")
            tape.backward(loss)
            clip_grad_norm(params, cfg.grad_clip)
            opt.step(lr)
            epoch_losses.append(value)
            running.append(value)
            step += 1
            if cfg.log_every and step % cfg.log_every == 0:
                trace.append(dict(epoch=epoch, step=step, lr=lr, train_loss=float(np.mean(running)), val_loss=None))
                running = []
                if progress:
                    progress(f"epoch {epoch} step {step} loss {trace[-1]['train_loss']:.4f} ({time.time() - t0:.0f}s)")
        val = evaluate_loss(model, val_set) if val_set else float(np.mean(epoch_losses))
        trace.append(dict(epoch=epoch, step=step, lr=lr, train_loss=float(np.mean(epoch_losses)), val_loss=val))
        if progress:
            progress(f"epoch {epoch} done: train {np.mean(epoch_losses):.4f} val {val:.4f} ({time.time() - t0:.0f}s)")
        if val < best_val:
            best_val, best_state = val, params.snapshot()
    final = evaluate_loss(model, [train_batches[i] for i in range(min(per_epoch, n_train))][:32])
    return FitResult(best_state, best_val, trace, initial, final)
