"""Shared fixtures and oracle helpers for the test suite.

Oracles here are deliberately naive (explicit loops, straight-line math) so
they are independent of the vectorized implementations they check.
"""

import numpy as np
import pytest

from stripesr import tensor as T
from stripesr.model import _init_array


def rng(seed=0):
    return np.random.default_rng(seed)


def rel_err(a, b, floor=1e-8):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def init_param_dict(specs, seed=0, dtype=np.float64):
    g = np.random.default_rng(seed)
    return {name: _init_array(shape, kind, g).astype(dtype)
            for name, shape, kind in specs}


def as_leaves(raw, tape):
    return {k: tape.leaf(v) for k, v in raw.items()}


def check_scalar_fn(f, x, eps=1e-5):
    """grad_check wrapper for functions that need a tape on the probe input.

    `f(t)` must treat an untaped `t` as a constant (finite-difference passes
    hand in plain Tensors).
    """
    return T.grad_check(f, x, eps)


def matmul_oracle(a, b):
    m, k = a.shape
    k2, n = b.shape
    out = np.zeros((m, n), dtype=np.float64)
    for i in range(m):
        for j in range(n):
            for p in range(k):
                out[i, j] += a[i, p] * b[p, j]
    return out


def conv2d_oracle(x, w, b, kernel, stride=1, dilation=1, groups=1,
                  padding="same-reflect"):
    """Direct 6-loop grouped/dilated 2D convolution (cross-correlation)."""
    c_in, h, wd = x.shape
    c_out = w.shape[0]
    kh, kw = kernel
    eh, ew = (kh - 1) * dilation, (kw - 1) * dilation
    if padding == "valid":
        xp = x
        ph = pw = 0
    else:
        ph, pw = eh // 2, ew // 2
        mode = "reflect" if padding == "same-reflect" else "constant"
        xp = np.pad(x, ((0, 0), (ph, eh - ph), (pw, ew - pw)), mode=mode)
    oh = (xp.shape[1] - eh - 1) // stride + 1
    ow = (xp.shape[2] - ew - 1) // stride + 1
    cig = c_in // groups
    cog = c_out // groups
    out = np.zeros((c_out, oh, ow), dtype=np.float64)
    for o in range(c_out):
        g = o // cog
        for i in range(oh):
            for j in range(ow):
                acc = float(b[o]) if b is not None else 0.0
                for c in range(cig):
                    for u in range(kh):
                        for v in range(kw):
                            acc += (
                                xp[g * cig + c,
                                   i * stride + u * dilation,
                                   j * stride + v * dilation]
                                * w[o, c, u, v]
                            )
                out[o, i, j] = acc
    return out


def s6_oracle(x, a_log, d_skip, w_b, w_c, w_dt_down, w_dt_up, b_dt):
    """Scalar-loop reference for the selective-scan recurrence."""
    d, t_len = x.shape
    n = a_log.shape[1]
    a = -np.exp(np.asarray(a_log, dtype=np.float64))
    h = np.zeros((d, n), dtype=np.float64)
    y = np.zeros((d, t_len), dtype=np.float64)
    for t in range(t_len):
        xt = x[:, t].astype(np.float64)
        delta = np.log1p(np.exp(w_dt_up @ (w_dt_down @ xt) + b_dt))
        b_t = w_b.T @ xt  # (n,), shared across channels
        c_t = w_c.T @ xt
        h = np.exp(delta[:, None] * a) * h + np.outer(delta * xt, b_t)
        y[:, t] = h @ c_t + d_skip * xt
    return y


@pytest.fixture
def tmp_cube_path(tmp_path):
    return str(tmp_path / "cube.hsc")
