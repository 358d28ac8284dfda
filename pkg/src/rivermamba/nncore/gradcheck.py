"""Compare tape gradients with central finite differences."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tape, Tensor


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_input: list = field(default_factory=list)
    tolerance: float = 1e-4

    @property
    def ok(self) -> bool:
        return self.max_rel_error < self.tolerance


def grad_check(op, inputs, tolerance=1e-4, h=1e-5, seed=0, check=None):
    """Finite-difference check of ``op(*tensors)``.

    The output is contracted with a fixed random weight so every output entry
    contributes. The error per input is the max-norm relative error
    ``max|g_tape - g_fd| / max(max|g_tape|, max|g_fd|)``. ``check`` selects the
    input positions to differentiate (all by default).
    """
    arrays = [np.array(x, dtype=np.float64) for x in inputs]
    check = range(len(arrays)) if check is None else check
    rng = np.random.default_rng([seed, 0x5EED])

    def evaluate(arrs, record):
        ts = [Tensor(a, requires_grad=record) for a in arrs]
        if record:
            with Tape() as tape:
                out = op(*ts)
        else:
            tape = None
            out = op(*ts)
        return ts, tape, out

    ts, tape, out = evaluate(arrays, True)
    if not np.isfinite(out.data).all():
        raise FloatingPointError("grad_check: non-finite output")
    weight = rng.standard_normal(out.shape)
    tape.backward(out, weight)

    def scalar(arrs):
        o = evaluate(arrs, False)[2].data
        if not np.isfinite(o).all():
            raise FloatingPointError("grad_check: non-finite output under perturbation")
        return float((o * weight).sum())

    errors = []
    for i in check:
        analytic = ts[i].grad if ts[i].grad is not None else np.zeros_like(arrays[i])
        numeric = np.zeros_like(arrays[i])
        flat = arrays[i].reshape(-1)
        nflat = numeric.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            fp = scalar(arrays)
            flat[j] = orig - h
            fm = scalar(arrays)
            flat[j] = orig
            nflat[j] = (fp - fm) / (2 * h)
        if not (np.isfinite(analytic).all() and np.isfinite(numeric).all()):
            raise FloatingPointError("grad_check: non-finite gradient")
        scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0))
        err = 0.0 if scale == 0 else float(np.abs(analytic - numeric).max() / scale)
        errors.append(err)
    return GradCheckReport(max(errors, default=0.0), errors, tolerance)
