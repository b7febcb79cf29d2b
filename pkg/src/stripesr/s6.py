"""Input-dependent state-space recurrence (S6) and its 2D four-direction wrapper.

The recurrence per channel d and state n over a token sequence x_t:

    delta_t = softplus(W_up @ (W_down @ x_t) + b)          (per-channel step)
    Abar_t  = exp(delta_t * A),  A = -exp(A_log) < 0       (zero-order hold)
    h_t     = Abar_t * h_{t-1} + (delta_t * x_t) outer B_t (Euler for B)
    y_t     = <C_t, h_t> + D_skip * x_t

B_t and C_t are linear projections of x_t shared across channels. The naive
forward is the sequential reference (and the training path, with a fused
hand-written backward); the chunked forward is a block-wise fast path that
precomputes projections per block and carries h across block boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, NumericError
from . import tensor as T
from .tensor import Tensor
from .scan import ScanOrder, gather_tokens, scatter_tokens


@dataclass
class S6Params:
    """One selective-scan head. d = channel dim, n = state dim, r = delta rank."""

    a_log: Tensor  # (d, n); A = -exp(a_log)
    d_skip: Tensor  # (d,)
    w_b: Tensor  # (d, n)
    w_c: Tensor  # (d, n)
    w_dt_down: Tensor  # (r, d) bottleneck in
    w_dt_up: Tensor  # (d, r) bottleneck out
    b_dt: Tensor  # (d,)

    @property
    def d(self) -> int:
        return self.a_log.shape[0]

    @property
    def n(self) -> int:
        return self.a_log.shape[1]

    def validate(self):
        d, n = self.a_log.shape
        r = self.w_dt_down.shape[0]
        ok = (
            self.d_skip.shape == (d,)
            and self.w_b.shape == (d, n)
            and self.w_c.shape == (d, n)
            and self.w_dt_down.shape == (r, d)
            and self.w_dt_up.shape == (d, r)
            and self.b_dt.shape == (d,)
        )
        if not ok:
            raise ContractViolation("S6Params shapes are inconsistent")


def delta_rank(d: int) -> int:
    return max(d // 16, 1)


def _sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


def _precompute(x, a, w_b, w_c, w_dn, w_up, b_dt):
    """Shared per-token quantities for a (B, d, c) block of tokens.

    Kept free of einsum path optimization so naive and chunked evaluation
    produce bit-identical results for any block split.
    """
    code = np.einsum("brd,bdt->brt", w_dn, x)
    raw = np.einsum("bdr,brt->bdt", w_up, code) + b_dt[:, :, None]
    sig = _sigmoid(raw)
    delta = np.logaddexp(0.0, raw)
    b_t = np.einsum("bdn,bdt->bnt", w_b, x)
    c_t = np.einsum("bdn,bdt->bnt", w_c, x)
    # time-major decay for cheap per-step slicing
    abar = np.exp(delta.transpose(0, 2, 1)[:, :, :, None] * a[:, None, :, :])
    dbx = delta * x
    return code, sig, delta, b_t, c_t, abar, dbx


def _scan_forward(x, a, d_skip, b_t, c_t, abar, dbx, keep_states):
    nb, d, t = x.shape
    n = a.shape[-1]
    h = np.zeros((nb, d, n), dtype=x.dtype)
    y = np.empty_like(x)
    hs = np.empty((nb, t, d, n), dtype=x.dtype) if keep_states else None
    for i in range(t):
        h = abar[:, i] * h + dbx[:, :, i, None] * b_t[:, None, :, i]
        if keep_states:
            hs[:, i] = h
        y[:, :, i] = np.einsum("bdn,bn->bd", h, c_t[:, :, i])
    y += d_skip[:, :, None] * x
    return y, hs


def _s6_core(seq: Tensor, params: list[S6Params]) -> Tensor:
    """Batched fused scan: seq (B, d, T), one S6Params per batch entry."""
    nb, d, t = seq.shape
    for p in params:
        p.validate()
        if p.d != d:
            raise ContractViolation(f"S6Params d={p.d} does not match sequence d={d}")
    if len(params) != nb:
        raise ContractViolation("one S6Params required per batch entry")

    a_log = np.stack([p.a_log.data for p in params])
    d_skip = np.stack([p.d_skip.data for p in params])
    w_b = np.stack([p.w_b.data for p in params])
    w_c = np.stack([p.w_c.data for p in params])
    w_dn = np.stack([p.w_dt_down.data for p in params])
    w_up = np.stack([p.w_dt_up.data for p in params])
    b_dt = np.stack([p.b_dt.data for p in params])

    x = seq.data
    a = -np.exp(a_log)
    code, sig, delta, b_t, c_t, abar, dbx = _precompute(
        x, a, w_b, w_c, w_dn, w_up, b_dt
    )

    tape = T._find_tape(
        seq, *(f for p in params for f in (p.a_log, p.d_skip, p.w_b, p.w_c,
                                           p.w_dt_down, p.w_dt_up, p.b_dt))
    )
    need_states = tape is not None
    y, hs = _scan_forward(x, a, d_skip, b_t, c_t, abar, dbx, need_states)
    if not np.all(np.isfinite(y)):
        raise NumericError("s6 scan produced non-finite values")
    if tape is None:
        return Tensor(y)

    def backward(gy):
        gh = np.zeros_like(hs[:, 0])
        gx = gy * d_skip[:, :, None]
        g_dskip = np.einsum("bdt,bdt->bd", gy, x)
        g_ct = np.empty_like(c_t)
        g_bt = np.empty_like(b_t)
        g_delta = np.zeros_like(delta)
        g_a = np.zeros_like(a)
        for i in range(t - 1, -1, -1):
            g_ct[:, :, i] = np.einsum("bdn,bd->bn", hs[:, i], gy[:, :, i])
            gh += gy[:, :, i, None] * c_t[:, None, :, i]
            h_prev = hs[:, i - 1] if i > 0 else np.zeros_like(gh)
            g_abar = gh * h_prev
            ga_full = g_abar * abar[:, i]
            g_delta[:, :, i] = np.einsum("bdn,bdn->bd", ga_full, a)
            g_a += ga_full * delta[:, :, i, None]
            g_dbx = np.einsum("bdn,bn->bd", gh, b_t[:, :, i])
            g_bt[:, :, i] = np.einsum("bdn,bd->bn", gh, dbx[:, :, i])
            g_delta[:, :, i] += g_dbx * x[:, :, i]
            gx[:, :, i] += g_dbx * delta[:, :, i]
            gh = gh * abar[:, i]
        g_raw = g_delta * sig
        g_b_dt = g_raw.sum(axis=2)
        g_w_up = np.einsum("bdt,brt->bdr", g_raw, code)
        g_code = np.einsum("bdr,bdt->brt", w_up, g_raw)
        g_w_dn = np.einsum("brt,bdt->brd", g_code, x)
        gx += np.einsum("brd,brt->bdt", w_dn, g_code)
        g_w_b = np.einsum("bnt,bdt->bdn", g_bt, x)
        gx += np.einsum("bdn,bnt->bdt", w_b, g_bt)
        g_w_c = np.einsum("bnt,bdt->bdn", g_ct, x)
        gx += np.einsum("bdn,bnt->bdt", w_c, g_ct)
        g_a_log = g_a * a  # dA/dA_log = -exp(A_log) = A

        per_param = {}
        for k in range(nb):
            p = params[k]
            per_param[id(p.a_log)] = per_param.get(id(p.a_log), 0) + g_a_log[k]
            per_param[id(p.d_skip)] = per_param.get(id(p.d_skip), 0) + g_dskip[k]
            per_param[id(p.w_b)] = per_param.get(id(p.w_b), 0) + g_w_b[k]
            per_param[id(p.w_c)] = per_param.get(id(p.w_c), 0) + g_w_c[k]
            per_param[id(p.w_dt_down)] = per_param.get(id(p.w_dt_down), 0) + g_w_dn[k]
            per_param[id(p.w_dt_up)] = per_param.get(id(p.w_dt_up), 0) + g_w_up[k]
            per_param[id(p.b_dt)] = per_param.get(id(p.b_dt), 0) + g_b_dt[k]

        grads = []
        if T._attached(seq):
            grads.append(gx)
        seen = set()
        for p in params:
            for f in (p.a_log, p.d_skip, p.w_b, p.w_c,
                      p.w_dt_down, p.w_dt_up, p.b_dt):
                if T._attached(f) and id(f) not in seen:
                    seen.add(id(f))
                    grads.append(per_param[id(f)])
        return grads

    parents = []
    if T._attached(seq):
        parents.append(seq)
    seen = set()
    for p in params:
        for f in (p.a_log, p.d_skip, p.w_b, p.w_c,
                  p.w_dt_down, p.w_dt_up, p.b_dt):
            if T._attached(f) and id(f) not in seen:
                seen.add(id(f))
                parents.append(f)
    return tape.record(y, parents, backward)


def s6_forward_naive(seq: Tensor, p: S6Params) -> Tensor:
    """Sequential reference scan over a (d, T) sequence; tape-recorded."""
    if seq.data.ndim != 2:
        raise ContractViolation("s6_forward_naive expects a (d, T) sequence")
    out = _s6_core(T.reshape(seq, (1,) + seq.shape), [p])
    return T.reshape(out, seq.shape)


def s6_forward_chunked(seq: Tensor, p: S6Params, chunk: int) -> Tensor:
    """Block-wise forward-only scan, bit-compatible with the naive path."""
    if chunk < 1:
        raise ContractViolation("chunk must be >= 1")
    if seq.data.ndim != 2:
        raise ContractViolation("s6_forward_chunked expects a (d, T) sequence")
    p.validate()
    d, t = seq.shape
    if p.d != d:
        raise ContractViolation(f"S6Params d={p.d} does not match sequence d={d}")
    x = seq.data[None]
    a = -np.exp(p.a_log.data[None])
    d_skip = p.d_skip.data[None]
    h = np.zeros((1, d, p.n), dtype=seq.dtype)
    y = np.empty_like(x)
    for start in range(0, t, chunk):
        xb = x[:, :, start : start + chunk]
        _, _, _, b_t, c_t, abar, dbx = _precompute(
            xb, a, p.w_b.data[None], p.w_c.data[None],
            p.w_dt_down.data[None], p.w_dt_up.data[None], p.b_dt.data[None],
        )
        for i in range(xb.shape[2]):
            h = abar[:, i] * h + dbx[:, :, i, None] * b_t[:, None, :, i]
            y[:, :, start + i] = np.einsum("bdn,bn->bd", h, c_t[:, :, i])
    y += d_skip[:, :, None] * x
    if not np.all(np.isfinite(y)):
        raise NumericError("s6 scan produced non-finite values")
    return Tensor(y[0])


def ss2d(x: Tensor, params: list[S6Params], orders: list[ScanOrder]) -> Tensor:
    """Four-direction scan-and-merge: gather, scan, scatter, sum (fixed order)."""
    if len(params) != len(orders):
        raise ContractViolation("ss2d: need one S6Params per ScanOrder")
    c, h, w = x.shape
    for o in orders:
        if (o.h, o.w) != (h, w):
            raise ContractViolation("ss2d: all orders must match the image dims")
    seqs = T.stack([gather_tokens(x, o) for o in orders], axis=0)
    ys = _s6_core(seqs, params)
    out = None
    for k, o in enumerate(orders):
        seq_k = T.reshape(T.narrow(ys, 0, k, 1), (c, h * w))
        img_k = scatter_tokens(seq_k, o)
        out = img_k if out is None else T.add(out, img_k)
    return out
