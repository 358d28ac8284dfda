"""Selective state-space layers: LOAN and the bidirectional Mamba block."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curves import SerializationOrder
from .nncore import functional as F
from .nncore.functional import discretize, discretize_np, selective_scan  # noqa: F401  (re-export)
from .nncore.tensor import Tensor, as_tensor


@dataclass
class BlockConfig:
    d_model: int
    static_dim: int
    d_state: int = 16
    d_conv: int = 4
    mlp_ratio: int = 2
    dropout: float = 0.0
    combine: str = "mean"  # "mean" halves y_f + y_b, "sum" adds them
    loan_eps: float = 1e-5
    norm_eps: float = 1e-5
    dt_min: float = 1e-3
    dt_max: float = 1e-1


def init_linear(rng, fan_in, fan_out, scale=1.0):
    bound = scale / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, (fan_in, fan_out)), np.zeros(fan_out)


def inverse_softplus(y):
    return y + np.log(-np.expm1(-y))


def loan(x, static, w, b, eps=1e-5):
    """Location-aware adaptive normalisation.

    ``x [T, P, K]`` is standardised over channels per (t, p) and shifted by
    ``GELU(static @ w + b)`` (``[P, K]``, broadcast over T).
    """
    bias = F.gelu(F.linear(as_tensor(static), w, b))
    return F.channel_standardize(x, eps) + bias


class MambaBlock:
    """Parameters and forward pass of one bidirectional Mamba block.

    Parameters live in a shared :class:`~rivermamba.nncore.ParamStore` under
    ``prefix``; the block only remembers their names.
    """

    directions = ("fwd", "bwd")

    def __init__(self, store, prefix: str, cfg: BlockConfig):
        self.store = store
        self.prefix = prefix
        self.cfg = cfg

    def p(self, name) -> Tensor:
        return self.store[f"{self.prefix}.{name}"]

    @classmethod
    def create(cls, store, prefix, cfg: BlockConfig, rng, zero_residual=False):
        k, e, n, vs = cfg.d_model, cfg.d_model, cfg.d_state, cfg.static_dim
        add = lambda name, v: store.add(f"{prefix}.{name}", v)  # noqa: E731
        for tag in ("loan1", "loan2"):
            w, b = init_linear(rng, vs, k)
            add(f"{tag}.W", w)
            add(f"{tag}.b", b)
        w, b = init_linear(rng, k, 2 * e)
        add("xz.W", w)
        add("xz.b", b)
        for o in cls.directions:
            add(f"{o}.conv.k", rng.uniform(-1, 1, (e, cfg.d_conv)) / np.sqrt(cfg.d_conv))
            add(f"{o}.conv.b", np.zeros(e))
            for proj in ("B", "C"):
                w, b = init_linear(rng, e, n)
                add(f"{o}.{proj}.W", w)
                add(f"{o}.{proj}.b", b)
            w, _ = init_linear(rng, e, e, scale=0.1)
            add(f"{o}.dt.W", w)
            dt = np.exp(rng.uniform(np.log(cfg.dt_min), np.log(cfg.dt_max), e))
            add(f"{o}.dt.bias", inverse_softplus(dt))
            add(f"{o}.A_log", np.log(np.tile(np.arange(1, n + 1, dtype=float), (e, 1))))
            add(f"{o}.D", np.ones(e))
        add("norm.g", np.ones(e))
        add("norm.b", np.zeros(e))
        w, b = init_linear(rng, e, k)
        add("out.W", np.zeros_like(w) if zero_residual else w)
        add("out.b", b)
        hidden = cfg.mlp_ratio * k
        w, b = init_linear(rng, k, hidden)
        add("mlp.0.W", w)
        add("mlp.0.b", b)
        w, b = init_linear(rng, hidden, k)
        add("mlp.1.W", np.zeros_like(w) if zero_residual else w)
        add("mlp.1.b", b)
        return cls(store, prefix, cfg)

    def zero_residual_branches(self):
        """Zero the output projection and last MLP layer: the block becomes the identity."""
        for name in ("out.W", "out.b", "mlp.1.W", "mlp.1.b"):
            t = self.p(name)
            t.data = np.zeros_like(t.data)

    def direction(self, x, o: str, t_len: int):
        """One scan direction over ``x [T, P, E]``; returns ``[T, P, E]``."""
        p = self.p
        _, n_pts, e = x.shape
        if o == "bwd":
            x = x.flip(1)
        seq = x.reshape(t_len * n_pts, e)
        xc = F.silu(F.causal_conv1d(seq, p(f"{o}.conv.k"), p(f"{o}.conv.b")))
        b_mat = F.linear(xc, p(f"{o}.B.W"), p(f"{o}.B.b"))
        c_mat = F.linear(xc, p(f"{o}.C.W"), p(f"{o}.C.b"))
        dt = F.softplus(F.matmul(xc, p(f"{o}.dt.W")) + p(f"{o}.dt.bias"))
        a_mat = -F.exp(p(f"{o}.A_log"))
        y = selective_scan(xc, dt, a_mat, b_mat, c_mat, p(f"{o}.D"))
        y = y.reshape(t_len, n_pts, e)
        if o == "bwd":
            y = y.flip(1)
        return y

    def __call__(self, x, static, order: SerializationOrder, training=False, rng=None):
        """Run the block on ``x [T, P, K]`` with ``static [P, V_s]``; output in caller order."""
        x = as_tensor(x)
        cfg, p = self.cfg, self.p
        t_len, n_pts, k = x.shape
        if k != cfg.d_model:
            raise ValueError(f"block expects {cfg.d_model} channels, got {k}")
        if len(order) != n_pts:
            raise ValueError(f"order has {len(order)} points, input has {n_pts}")
        static = np.asarray(static.data if isinstance(static, Tensor) else static)
        if static.shape != (n_pts, cfg.static_dim):
            raise ValueError(f"static must be [{n_pts}, {cfg.static_dim}], got {static.shape}")

        xs = x.take(order.perm, axis=1)
        st = static[order.perm]
        h = loan(xs, st, p("loan1.W"), p("loan1.b"), cfg.loan_eps)
        xz = F.linear(h, p("xz.W"), p("xz.b"))
        e = xz.shape[-1] // 2
        xin, z = xz[..., :e], xz[..., e:]
        gate = F.silu(z)
        ys = [self.direction(xin, o, t_len) * gate for o in self.directions]
        y = ys[0] + ys[1]
        if cfg.combine == "mean":
            y = y * 0.5
        elif cfg.combine != "sum":
            raise ValueError(f"unknown combine mode {cfg.combine!r}")
        y = F.layer_norm(y, p("norm.g"), p("norm.b"), cfg.norm_eps)
        y = F.dropout(F.linear(y, p("out.W"), p("out.b")), cfg.dropout, training, rng)
        mixed = y + xs
        h2 = loan(mixed, st, p("loan2.W"), p("loan2.b"), cfg.loan_eps)
        ff = F.mlp(h2, [(p("mlp.0.W"), p("mlp.0.b")), (p("mlp.1.W"), p("mlp.1.b"))],
                   activation="gelu", dropout_rate=cfg.dropout, training=training, rng=rng)
        out = ff + mixed
        return out.take(order.inv, axis=1)


def mamba_block(x, static, order, block: MambaBlock, training=False, rng=None):
    return block(x, static, order, training, rng)
