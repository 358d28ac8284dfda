"""Embedding, hindcast and forecast stacks, and regression heads."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from .curves import CURVE_CYCLE, CurveKind, serialize
from .nncore import functional as F
from .nncore.params import ParamStore
from .nncore.tensor import Tensor, as_tensor, concat, stack
from .ssm import BlockConfig, MambaBlock, init_linear
from .training import transform_delta


@dataclass
class ModelConfig:
    T: int = 4
    L: int = 7
    K: int = 32
    K_hres: int = 16
    hindcast_depths: list = field(default_factory=lambda: [1, 1, 1])
    forecast_depth: int = 1
    curve_cycle: list = field(default_factory=lambda: [c.value for c in CURVE_CYCLE])
    d_state: int = 8
    d_conv: int = 4
    mlp_ratio: int = 2
    emb_era5: int = 20
    emb_glofas: int = 8
    emb_cpc: int = 4
    V_e: int = 6
    V_g: int = 3
    V_h: int = 3
    V_s: int = 8
    positional: bool = True
    head_hidden: int = 32
    dropout_hindcast: float = 0.0
    dropout_forecast: float = 0.0
    dropout_head: float = 0.0
    combine: str = "mean"
    residual_scale: float = 1.0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.emb_era5 + self.emb_glofas + self.emb_cpc != self.K:
            raise ValueError("per-source embedding widths must sum to K")
        n = len(self.hindcast_depths)
        if n < 1 or self.T != 2 ** (n - 1):
            raise ValueError(f"T={self.T} cannot be halved to 1 over {n} hindcast layers")
        if self.L < 1:
            raise ValueError("L must be >= 1")
        for c in self.curve_cycle:
            CurveKind.parse(c)

    @property
    def static_dim(self) -> int:
        return self.V_s + (3 if self.positional else 0)

    @property
    def forecast_width(self) -> int:
        return self.K + self.K_hres

    @classmethod
    def paper_scale(cls, **kw) -> "ModelConfig":
        base = dict(T=4, L=7, K=192, K_hres=64, hindcast_depths=[2, 2, 2], d_state=16,
                    emb_era5=128, emb_glofas=48, emb_cpc=16, head_hidden=32,
                    dropout_hindcast=0.2, dropout_forecast=0.2, dropout_head=0.1)
        base.update(kw)
        return cls(**base)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def build_orders(points, cfg: ModelConfig | None = None) -> dict:
    """Serialization order of ``points`` for every curve the model cycles through."""
    kinds = CURVE_CYCLE if cfg is None else [CurveKind.parse(c) for c in cfg.curve_cycle]
    return {k: serialize(points, k) for k in kinds}


class RiverMamba:
    """The full forecasting network; parameters live in ``self.params``."""

    def __init__(self, cfg: ModelConfig, seed: int = 0, params: ParamStore | None = None):
        self.cfg = cfg
        if params is None:
            params = ParamStore()
            self._init_params(params, np.random.default_rng(seed))
        self.params = params
        self.hindcast_blocks = []
        for i, depth in enumerate(cfg.hindcast_depths):
            self.hindcast_blocks.append([MambaBlock(params, f"hind.{i}.{j}", self._hind_cfg()) for j in range(depth)])
        self.forecast_blocks = [[MambaBlock(params, f"fore.{l}.{j}", self._fore_cfg()) for j in range(cfg.forecast_depth)]
                                for l in range(cfg.L)]

    def _hind_cfg(self):
        c = self.cfg
        return BlockConfig(d_model=c.K, static_dim=c.static_dim, d_state=c.d_state, d_conv=c.d_conv,
                           mlp_ratio=c.mlp_ratio, dropout=c.dropout_hindcast, combine=c.combine)

    def _fore_cfg(self):
        c = self.cfg
        return BlockConfig(d_model=c.forecast_width, static_dim=c.static_dim, d_state=c.d_state,
                           d_conv=c.d_conv, mlp_ratio=c.mlp_ratio, dropout=c.dropout_forecast,
                           combine=c.combine)

    def _init_params(self, ps, rng):
        c = self.cfg
        for name, fan_in, width in (("era5", c.V_e, c.emb_era5), ("glofas", c.V_g, c.emb_glofas),
                                    ("cpc", 1, c.emb_cpc)):
            w, b = init_linear(rng, fan_in, width)
            ps.add(f"embed.{name}.W", w)
            ps.add(f"embed.{name}.b", b)
        ps.add("embed.norm.g", np.ones(c.K))
        ps.add("embed.norm.b", np.zeros(c.K))
        for i, depth in enumerate(c.hindcast_depths):
            if i > 0:
                w, b = init_linear(rng, 2 * c.K, c.K)
                ps.add(f"down.{i}.W", w)
                ps.add(f"down.{i}.b", b)
            for j in range(depth):
                blk = MambaBlock.create(ps, f"hind.{i}.{j}", self._hind_cfg(), rng)
                _scale_residual(blk, c.residual_scale)
        kf, h = c.forecast_width, c.head_hidden
        for l in range(c.L):
            w, b = init_linear(rng, c.V_h, c.K_hres)
            ps.add(f"hres.{l}.W", w)
            ps.add(f"hres.{l}.b", b)
            for j in range(c.forecast_depth):
                blk = MambaBlock.create(ps, f"fore.{l}.{j}", self._fore_cfg(), rng)
                _scale_residual(blk, c.residual_scale)
            w, b = init_linear(rng, kf, h)
            ps.add(f"head.{l}.own.W", w)
            ps.add(f"head.{l}.own.b", b)
            if c.L > 1:
                w, b = init_linear(rng, (c.L - 1) * kf, h)
                ps.add(f"head.{l}.cross.W", w)
                ps.add(f"head.{l}.cross.b", b)
            w, b = init_linear(rng, 2 * h if c.L > 1 else h, 1)
            ps.add(f"head.{l}.out.W", w)
            ps.add(f"head.{l}.out.b", b)

    # forward pieces ------------------------------------------------------------------

    def embed_inputs(self, era5, glofas, cpc):
        """``[T, P, V]`` sources -> ``[T, P, K]``: per-source Linear, concat, Tanh, LayerNorm."""
        c, p = self.cfg, self.params
        for name, arr, v in (("era5", era5, c.V_e), ("glofas", glofas, c.V_g), ("cpc", cpc, 1)):
            if arr.shape[-1] != v:
                raise ValueError(f"{name} has {arr.shape[-1]} channels, config expects {v}")
        parts = [F.linear(as_tensor(arr), p[f"embed.{n}.W"], p[f"embed.{n}.b"])
                 for n, arr in (("era5", era5), ("glofas", glofas), ("cpc", cpc))]
        return F.layer_norm(F.tanh(concat(parts, axis=-1)), p["embed.norm.g"], p["embed.norm.b"])

    def downsample(self, x, layer: int):
        """Halve T by a linear map over each pair of consecutive steps."""
        t_len, n_pts, k = x.shape
        pairs = x.reshape(t_len // 2, 2, n_pts, k).transpose(0, 2, 1, 3).reshape(t_len // 2, n_pts, 2 * k)
        return F.linear(pairs, self.params[f"down.{layer}.W"], self.params[f"down.{layer}.b"])

    def _curve(self, i):
        cyc = self.cfg.curve_cycle
        return CurveKind.parse(cyc[i % len(cyc)])

    def hindcast_forward(self, x_embed, static, orders, training=False, rng=None):
        if x_embed.shape[0] != self.cfg.T:
            raise ValueError(f"expected T={self.cfg.T} hindcast steps, got {x_embed.shape[0]}")
        x, b = x_embed, 0
        for i, blocks in enumerate(self.hindcast_blocks):
            if i > 0:
                x = self.downsample(x, i)
            for blk in blocks:
                x = blk(x, static, orders[self._curve(b)], training, rng)
                b += 1
        if x.shape[0] != 1:
            raise ValueError("hindcast stack did not reduce T to 1")
        return x

    def forecast_forward(self, x_hindcast, hres, static, orders, training=False, rng=None):
        """Sequential forecast blocks; returns per-lead features ``[L, P, K + K_hres]``."""
        c = self.cfg
        if hres.shape[0] != c.L:
            raise ValueError(f"expected hres for L={c.L} leads, got {hres.shape[0]}")
        hres = as_tensor(hres)
        x, feats, b = x_hindcast, [], 0
        for l, blocks in enumerate(self.forecast_blocks):
            h = F.linear(hres[l:l + 1], self.params[f"hres.{l}.W"], self.params[f"hres.{l}.b"])
            f = concat([x, h], axis=-1)
            for blk in blocks:
                f = blk(f, static, orders[self._curve(b)], training, rng)
                b += 1
            feats.append(f)
            x = f[..., :c.K]
        return concat(feats, axis=0)

    def regression_heads(self, features, training=False, rng=None):
        """``[L, P, Kf]`` features -> ``[L, P, 1]`` transformed discharge deltas."""
        c, p = self.cfg, self.params
        outs = []
        for l in range(c.L):
            own = F.linear(features[l], p[f"head.{l}.own.W"], p[f"head.{l}.own.b"])
            if c.L > 1:
                others = concat([features[j] for j in range(c.L) if j != l], axis=-1)
                cross = F.linear(others, p[f"head.{l}.cross.W"], p[f"head.{l}.cross.b"])
                hidden = concat([own, cross], axis=-1)
            else:
                hidden = own
            hidden = F.dropout(F.relu(hidden), c.dropout_head, training, rng)
            outs.append(F.linear(hidden, p[f"head.{l}.out.W"], p[f"head.{l}.out.b"]))
        return stack(outs, axis=0)

    def forward(self, era5, glofas, cpc, hres, static, orders, training=False, rng=None):
        """Transformed deltas ``[L, P]`` for one issuance date."""
        x = self.embed_inputs(era5, glofas, cpc)
        x = self.hindcast_forward(x, static, orders, training, rng)
        feats = self.forecast_forward(x, hres, static, orders, training, rng)
        return self.regression_heads(feats, training, rng).reshape(self.cfg.L, -1)

    __call__ = forward

    def predict(self, sample, static, orders):
        """Discharge forecast ``[L, P]`` in m3/s for a normalised sample."""
        y = self.forward(sample.era5, sample.glofas, sample.cpc, sample.hres, static, orders).data
        return reconstruct_discharge(y, sample.x_prev)


def _scale_residual(blk: MambaBlock, scale: float):
    if scale != 1.0:
        for name in ("out.W", "mlp.1.W"):
            t = blk.p(name)
            t.data = t.data * scale


def reconstruct_discharge(delta_transformed, x_prev):
    """Undo the sign-log transform and add to the previous day's discharge (clamped at 0)."""
    delta = transform_delta(np.asarray(delta_transformed.data if isinstance(delta_transformed, Tensor)
                                       else delta_transformed), inverse=True)
    return np.maximum(0.0, np.asarray(x_prev)[None, :] + delta)
