import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rivermamba.curves import order_from_perm
from rivermamba.nncore import ParamStore, Tensor, grad_check
from rivermamba.nncore import functional as F
from rivermamba.ssm import BlockConfig, MambaBlock, discretize, discretize_np, loan, selective_scan


def taylor(u, terms=30):
    """exp(u) and (exp(u) - 1)/u from truncated power series, summed with fsum."""
    ex = [1.0]
    ratio = [1.0]
    term = 1.0
    for k in range(1, terms):
        term *= u / k
        ex.append(term)
        ratio.append(term / (k + 1))
    return math.fsum(ex), math.fsum(ratio)


def naive_selective_scan(x, delta, A, B, C, D):
    """Plain loops: zero-order hold per (step, channel, state), then the recurrence."""
    s_len, e = x.shape
    n = A.shape[1]
    h = [[0.0] * n for _ in range(e)]
    y = np.zeros((s_len, e))
    for s in range(s_len):
        for c in range(e):
            acc = D[c] * x[s, c]
            for k in range(n):
                u = delta[s, c] * A[c, k]
                ratio = math.expm1(u) / u if u != 0.0 else 1.0
                h[c][k] = math.exp(u) * h[c][k] + ratio * delta[s, c] * B[s, k] * x[s, c]
                acc += C[s, k] * h[c][k]
            y[s, c] = acc
    return y


def random_scan_inputs(rng, s_len, e, n):
    return (rng.standard_normal((s_len, e)), np.exp(rng.uniform(-4, 1, (s_len, e))),
            -np.exp(rng.uniform(-2, 1.5, (e, n))), rng.standard_normal((s_len, n)),
            rng.standard_normal((s_len, n)), rng.standard_normal(e))


# discretisation ----------------------------------------------------------------------

def test_discretize_examples():
    abar, bbar = discretize_np(np.array([[-1.0]]), np.array([[2.0]]), np.array([[0.5]]))
    assert abar[0, 0, 0] == pytest.approx(math.exp(-0.5), abs=1e-15)
    assert bbar[0, 0, 0] == pytest.approx((1 - math.exp(-0.5)) * 2.0, abs=1e-15)
    abar, bbar = discretize_np(np.array([[-3.0]]), np.array([[1.0]]), np.array([[0.0]]))
    assert abar[0, 0, 0] == 1.0 and bbar[0, 0, 0] == 0.0


@pytest.mark.parametrize("sign", [-1.0, 1.0])
def test_discretize_matches_taylor_oracle(sign):
    mags = np.concatenate([np.logspace(-12, np.log10(5), 400), [1e-9, 1e-8, 1.0001e-8, 9.999e-9]])
    u = sign * mags
    delta = np.full((len(u), 1), 0.5)
    A = (u / 0.5)[None, :]
    B = np.ones((len(u), len(u)))
    abar, bbar = discretize_np(A, B, delta)
    got_a = abar[np.arange(len(u)), 0, np.arange(len(u))]
    got_b = bbar[np.arange(len(u)), 0, np.arange(len(u))]
    ref = np.array([taylor(v) for v in u])
    assert np.abs(got_a - ref[:, 0]).max() < 1e-10
    assert np.abs(got_b - ref[:, 1] * 0.5).max() < 1e-10


def test_discretize_tensor_and_numpy_agree():
    rng = np.random.default_rng(3)
    A, B, d = -np.exp(rng.standard_normal((3, 2))), rng.standard_normal((5, 2)), np.exp(rng.standard_normal((5, 3)))
    a1, b1 = discretize(A, B, d)
    a2, b2 = discretize_np(A, B, d)
    assert np.array_equal(a1.data, a2) and np.array_equal(b1.data, b2)


# scan -----------------------------------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 128), st.integers(1, 8), st.integers(1, 4))
def test_selective_scan_matches_naive_loop(seed, s_len, e, n):
    args = random_scan_inputs(np.random.default_rng(seed), s_len, e, n)
    assert np.abs(selective_scan(*args).data - naive_selective_scan(*args)).max() < 1e-10


def test_fused_and_unfused_routes_agree():
    args = random_scan_inputs(np.random.default_rng(11), 200, 6, 4)
    y1 = selective_scan(*args).data
    y2 = F.selective_scan_unfused(*args).data
    assert np.abs(y1 - y2).max() < 1e-12


def test_scan_is_causal():
    args = list(random_scan_inputs(np.random.default_rng(5), 40, 3, 2))
    y = selective_scan(*args).data
    args[0] = args[0].copy()
    args[0][25:] += 3.0
    args[3] = args[3].copy()
    args[3][25:] -= 1.0
    assert np.array_equal(selective_scan(*args).data[:25], y[:25])


def test_scan_zero_input_gives_zero_output():
    x, d, a, b, c, dd = random_scan_inputs(np.random.default_rng(0), 10, 2, 3)
    assert np.array_equal(selective_scan(np.zeros_like(x), d, a, b, c, dd).data, np.zeros_like(x))


def test_scan_reports_overflow_step():
    x, d, a, b, c, dd = random_scan_inputs(np.random.default_rng(0), 30, 2, 2)
    a = np.abs(a) * 400.0  # unstable, grows without bound
    with pytest.raises(FloatingPointError, match="step"):
        selective_scan(x, np.ones_like(d), a, b, c, dd)


# LOAN -------------------------------------------------------------------------------------

def test_loan_zero_weights_is_plain_standardisation():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 5, 4))
    out = loan(x, rng.standard_normal((5, 3)), np.zeros((3, 4)), np.zeros(4)).data
    assert np.array_equal(out, F.channel_standardize(x).data)


def test_loan_shift_depends_on_point_only():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((3, 4, 6))
    static, w, b = rng.standard_normal((4, 2)), rng.standard_normal((2, 6)), rng.standard_normal(6)
    shift = loan(x, static, w, b).data - F.channel_standardize(x).data
    assert np.allclose(shift, F.gelu_np(static @ w + b)[None], atol=1e-12)
    assert np.allclose(shift[0], shift[2], atol=1e-12)


# block ------------------------------------------------------------------------------------

def make_block(seed=0, k=8, vs=3, n=2, zero_residual=False, **kw):
    store = ParamStore()
    cfg = BlockConfig(d_model=k, static_dim=vs, d_state=n, **kw)
    blk = MambaBlock.create(store, "blk", cfg, np.random.default_rng(seed), zero_residual=zero_residual)
    return store, blk


def block_inputs(seed, t=2, p=6, k=8, vs=3):
    rng = np.random.default_rng(seed + 100)
    return rng.standard_normal((t, p, k)), rng.standard_normal((p, vs)), order_from_perm(rng.permutation(p))


def test_block_shapes_and_order_restored():
    store, blk = make_block()
    x, s, o = block_inputs(0)
    y = blk(x, s, o).data
    assert y.shape == x.shape
    # running in a pre-permuted frame and undoing it gives the same result
    ident = order_from_perm(np.arange(6))
    y2 = blk(x[:, o.perm], s[o.perm], ident).data[:, o.inv]
    assert np.array_equal(y, y2)


def test_block_shape_errors():
    store, blk = make_block()
    x, s, o = block_inputs(0)
    with pytest.raises(ValueError, match="channels"):
        blk(x[..., :4], s, o)
    with pytest.raises(ValueError, match="static"):
        blk(x, s[:, :2], o)
    with pytest.raises(ValueError, match="order"):
        blk(x[:, :5], s[:5], o)


def test_zero_residual_block_is_identity():
    for seed in range(5):
        store, blk = make_block(seed, zero_residual=True)
        x, s, o = block_inputs(seed)
        assert np.abs(blk(x, s, o).data - x).max() <= 1e-12
        store, blk = make_block(seed)
        blk.zero_residual_branches()
        assert np.abs(blk(x, s, o).data - x).max() <= 1e-12


def test_direction_is_causal_along_the_sequence():
    store, blk = make_block(2)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 6, 8))
    yf = blk.direction(Tensor(x), "fwd", 2).data
    x2 = x.copy()
    x2[1, 3:] += 1.0  # sequence positions 9..11 of 12
    assert np.array_equal(blk.direction(Tensor(x2), "fwd", 2).data[0], yf[0])
    assert np.array_equal(blk.direction(Tensor(x2), "fwd", 2).data[1, :3], yf[1, :3])
    # the backward direction runs along reversed points within each time step
    yb = blk.direction(Tensor(x), "bwd", 2).data
    x3 = x.copy()
    x3[0, :2] -= 1.0
    assert np.array_equal(blk.direction(Tensor(x3), "bwd", 2).data[0, 2:], yb[0, 2:])


def test_bidirectional_symmetry():
    """Reversing the order and swapping the two direction parameter sets leaves the output unchanged."""
    store, blk = make_block(4)
    x, s, o = block_inputs(4)
    y = blk(x, s, o).data
    swapped = ParamStore()
    for name, t in store.items():
        if ".fwd." in name:
            name = name.replace(".fwd.", ".bwd.")
        elif ".bwd." in name:
            name = name.replace(".bwd.", ".fwd.")
        swapped.add(name, t.data)
    rev = order_from_perm(o.perm[::-1].copy())
    y2 = MambaBlock(swapped, "blk", blk.cfg)(x, s, rev).data
    assert np.abs(y - y2).max() < 1e-12


def test_combine_modes():
    store, blk = make_block(0)
    x, s, o = block_inputs(0)
    blk.cfg.combine = "bad"
    with pytest.raises(ValueError, match="combine"):
        blk(x, s, o)


def block_grad_report(seed):
    store, blk = make_block(seed)
    x, s, o = block_inputs(seed)
    names = store.names()

    def op(xt, *params):
        return MambaBlock(dict(zip(names, params)), "blk", blk.cfg)(xt, s, o)

    return grad_check(op, [x] + [store[n].data for n in names], seed=seed)


def test_block_gradients():
    for seed in range(3):
        rep = block_grad_report(seed)
        assert rep.max_rel_error < 1e-4, (seed, rep.max_rel_error)
