"""Differentiable primitives built on :mod:`rivermamba.nncore.tensor`.

Multi-step primitives (normalisation, causal convolution, discretisation,
selective scan) are fused: a single tape node with a hand-written backward.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf, expit

from . import kernels
from .tensor import Tensor, _data, _record, add, matmul

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)

# |dt * A| below this uses the two-term series of expm1(u)/u
SMALL_ARG = 1e-8


def linear(x, w, b=None):
    """``x @ w + b`` over the last axis."""
    if _data(x).shape[-1] != _data(w).shape[0]:
        raise ValueError(f"linear: input width {_data(x).shape[-1]} != weight rows {_data(w).shape[0]}")
    y = matmul(x, w)
    return y if b is None else add(y, b)


# activations -----------------------------------------------------------------------

def relu(x):
    x_ = _data(x)
    mask = x_ > 0
    return _record(np.where(mask, x_, 0.0), (x,), lambda g: (g * mask,))


def tanh(x):
    y = np.tanh(_data(x))
    return _record(y, (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid_np(x):
    return expit(x)


def sigmoid(x):
    y = sigmoid_np(_data(x))
    return _record(y, (x,), lambda g: (g * y * (1.0 - y),))


def silu(x):
    x_ = _data(x)
    s = sigmoid_np(x_)
    return _record(x_ * s, (x,), lambda g: (g * (s * (1.0 + x_ * (1.0 - s))),))


def softplus_np(x):
    # log(1 + e^x) without overflow for large x
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def softplus(x):
    x_ = _data(x)
    return _record(softplus_np(x_), (x,), lambda g: (g * sigmoid_np(x_),))


def gelu_np(x):
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def gelu(x):
    """Exact GELU, ``x * Phi(x)``."""
    x_ = _data(x)
    cdf = 0.5 * (1.0 + erf(x_ / _SQRT2))

    def back(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x_ * x_)
        return (g * (cdf + x_ * pdf),)

    return _record(x_ * cdf, (x,), back)


def exp(x):
    y = np.exp(_data(x))
    return _record(y, (x,), lambda g: (g * y,))


def log(x):
    x_ = _data(x)
    return _record(np.log(x_), (x,), lambda g: (g / x_,))


def square(x):
    x_ = _data(x)
    return _record(x_ * x_, (x,), lambda g: (2.0 * g * x_,))


ACTIVATIONS = {"relu": relu, "tanh": tanh, "silu": silu, "gelu": gelu, "softplus": softplus, "sigmoid": sigmoid}


# normalisation --------------------------------------------------------------------

def _layer_norm_core(x_, eps):
    mu = x_.mean(axis=-1, keepdims=True)
    xc = x_ - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    return xc * rstd, rstd


def layer_norm(x, gamma=None, beta=None, eps=1e-5):
    """Standardise over the last axis with ``sqrt(var + eps)``, then ``* gamma + beta``."""
    x_ = _data(x)
    xhat, rstd = _layer_norm_core(x_, eps)
    g_ = None if gamma is None else _data(gamma)
    b_ = None if beta is None else _data(beta)
    y = xhat if g_ is None else xhat * g_
    if b_ is not None:
        y = y + b_

    def back(g):
        gxhat = g if g_ is None else g * g_
        gx = rstd * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                     - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        flat = g.reshape(-1, g.shape[-1])
        ggamma = None if g_ is None else (flat * xhat.reshape(flat.shape)).sum(axis=0)
        gbeta = None if b_ is None else flat.sum(axis=0)
        return gx, ggamma, gbeta

    return _record(y, (x, gamma, beta), back)


def channel_standardize(x, eps=1e-5):
    """``(x - mean) / (std + eps)`` over the last axis (population std)."""
    x_ = _data(x)
    k = x_.shape[-1]
    mu = x_.mean(axis=-1, keepdims=True)
    xc = x_ - mu
    s = np.sqrt((xc * xc).mean(axis=-1, keepdims=True))
    denom = s + eps
    y = xc / denom

    def back(g):
        gx = (g - g.mean(axis=-1, keepdims=True)) / denom
        dot = (g * xc).sum(axis=-1, keepdims=True)
        safe = np.where(s > 0, s, 1.0)
        gx = gx - np.where(s > 0, dot * xc / (k * safe * denom * denom), 0.0)
        return (gx,)

    return _record(y, (x,), back)


# convolution, dropout --------------------------------------------------------------

def causal_conv1d(x, kernel, bias=None, direction="forward"):
    """Depthwise causal convolution along axis ``-2`` of ``[..., S, E]``.

    ``kernel`` is ``[E, w]``; tap ``w-1`` multiplies the current position and
    tap ``j`` the position ``w-1-j`` steps back (left zero padding). The
    ``backward`` direction runs the same filter over the reversed sequence.
    """
    if direction not in ("forward", "backward"):
        raise ValueError(f"unknown direction {direction!r}")
    x_ = _data(x)
    k_ = _data(kernel)
    e_dim, w = k_.shape
    if x_.shape[-1] != e_dim:
        raise ValueError("kernel channels do not match input")
    rev = direction == "backward"
    xs = np.flip(x_, -2) if rev else x_
    s_len = xs.shape[-2]
    pad = np.zeros(xs.shape[:-2] + (w - 1, e_dim))
    xp = np.concatenate([pad, xs], axis=-2)
    y = np.zeros_like(xs)
    for j in range(w):
        y += k_[:, j] * xp[..., j:j + s_len, :]
    if bias is not None:
        y = y + _data(bias)
    if rev:
        y = np.flip(y, -2)

    def back(g):
        gs = np.flip(g, -2) if rev else g
        gxp = np.zeros_like(xp)
        gk = np.empty_like(k_)
        flat_g = gs.reshape(-1, e_dim)
        for j in range(w):
            gxp[..., j:j + s_len, :] += k_[:, j] * gs
            gk[:, j] = (flat_g * xp[..., j:j + s_len, :].reshape(-1, e_dim)).sum(axis=0)
        gx = gxp[..., w - 1:, :]
        if rev:
            gx = np.flip(gx, -2)
        gb = None if bias is None else flat_g.sum(axis=0)
        return gx, gk, gb

    return _record(np.ascontiguousarray(y), (x, kernel, bias), back)


def dropout(x, rate, training, rng=None):
    """Inverted dropout; identity when not training or ``rate == 0``."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    if not training or rate == 0.0:
        return x
    rng = np.random.default_rng() if rng is None else rng
    x_ = _data(x)
    mask = (rng.random(x_.shape) >= rate) / (1.0 - rate)
    return _record(x_ * mask, (x,), lambda g: (g * mask,))


def mlp(x, layers, activation="gelu", dropout_rate=0.0, training=False, rng=None):
    """Stack of ``(W, b)`` layers with ``activation`` and dropout between them."""
    act = ACTIVATIONS[activation]
    for i, (w, b) in enumerate(layers):
        x = linear(x, w, b)
        if i < len(layers) - 1:
            x = dropout(act(x), dropout_rate, training, rng)
    return x


# state-space discretisation and scan ---------------------------------------------------

def expm1_ratio(u):
    """``(e^u - 1) / u`` with its two-term series for tiny ``|u|``."""
    small = np.abs(u) < SMALL_ARG
    safe = np.where(small, 1.0, u)
    return np.where(small, 1.0 + 0.5 * u, np.expm1(safe) / safe)


def expm1_ratio_grad(u):
    """Derivative of :func:`expm1_ratio`."""
    small = np.abs(u) < 1e-2
    safe = np.where(small, 1.0, u)
    exact = (safe * np.exp(safe) - np.expm1(safe)) / (safe * safe)
    # sum_{k>=1} k u^(k-1) / (k+1)!, Horner form
    series = 0.5 + u * (1 / 3 + u * (1 / 8 + u * (1 / 30 + u * (1 / 144 + u / 840))))
    return np.where(small, series, exact)


def discretize_np(A, B, delta):
    u = delta[:, :, None] * A[None, :, :]
    ratio = expm1_ratio(u)
    abar = np.exp(u)
    bbar = ratio * (delta[:, :, None] * B[:, None, :])
    return abar, bbar


def discretize(A, B, delta):
    """Zero-order hold for a diagonal ``A``.

    Shapes: ``A [E, N]``, ``B [S, N]``, ``delta [S, E]``. Returns
    ``Abar = exp(delta A)`` and ``Bbar = (delta A)^-1 (exp(delta A) - 1) delta B``,
    both ``[S, E, N]``.
    """
    A_, B_, d_ = _data(A), _data(B), _data(delta)
    u = d_[:, :, None] * A_[None, :, :]
    ratio = expm1_ratio(u)
    abar = np.exp(u)
    db = d_[:, :, None] * B_[:, None, :]
    bbar = ratio * db

    def back_a(g):
        gu = g * abar
        return (gu * d_[:, :, None]).sum(axis=0), None, (gu * A_[None]).sum(axis=-1)

    def back_b(g):
        gu = g * expm1_ratio_grad(u) * db
        gr = g * ratio
        g_a = (gu * d_[:, :, None]).sum(axis=0)
        g_b = (gr * d_[:, :, None]).sum(axis=1)
        g_d = (gu * A_[None]).sum(axis=-1) + (gr * B_[:, None, :]).sum(axis=-1)
        return g_a, g_b, g_d

    inputs = (A, B, delta)
    return _record(abar, inputs, back_a), _record(bbar, inputs, back_b)


def scan(x, abar, bbar, C, D):
    """Sequential selective scan over axis 0.

    ``h_i = Abar_i * h_{i-1} + Bbar_i * x_i`` with ``h_{-1} = 0`` and
    ``y_i = sum_n h_i[:, n] C_i[n] + D * x_i``. Shapes: ``x [S, E]``,
    ``abar, bbar [S, E, N]``, ``C [S, N]``, ``D [E]``.
    """
    x_, a_, b_, c_, d_ = (np.ascontiguousarray(_data(t)) for t in (x, abar, bbar, C, D))
    y, hs = kernels.scan_forward(x_, a_, b_, c_, d_)
    if not np.isfinite(y).all():
        bad = int(np.argmax(~np.isfinite(y).all(axis=1)))
        raise FloatingPointError(f"selective scan produced a non-finite value at step {bad}")

    def back(g):
        return kernels.scan_backward(np.ascontiguousarray(g), x_, a_, b_, c_, d_, hs)

    return _record(y, (x, abar, bbar, C, D), back)


def selective_scan_unfused(x, delta, A, B, C, D):
    """:func:`discretize` followed by :func:`scan`, as two tape nodes."""
    abar, bbar = discretize(A, B, delta)
    return scan(x, abar, bbar, C, D)


def selective_scan(x, delta, A, B, C, D):
    """Zero-order-hold discretisation and scan in one compiled pass.

    Same result as :func:`selective_scan_unfused` without materialising the
    ``[S, E, N]`` discretised matrices. Shapes: ``x, delta [S, E]``,
    ``A [E, N]``, ``B, C [S, N]``, ``D [E]``.
    """
    x_, dt_, a_, b_, c_, d_ = (np.ascontiguousarray(_data(t)) for t in (x, delta, A, B, C, D))
    y, hs = kernels.fused_scan_forward(x_, dt_, a_, b_, c_, d_, SMALL_ARG)
    if not np.isfinite(y).all():
        bad = int(np.argmax(~np.isfinite(y).all(axis=1)))
        raise FloatingPointError(f"selective scan produced a non-finite value at step {bad}")

    def back(g):
        gx, gdt, ga, gb, gc, gd = kernels.fused_scan_backward(np.ascontiguousarray(g), x_, dt_, a_, b_, c_, d_,
                                                              hs, SMALL_ARG)
        return gx, gdt, ga, gb, gc, gd

    return _record(y, (x, delta, A, B, C, D), back)
