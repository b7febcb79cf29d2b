"""Full model assembly: bicubic residual + wavelet U-Net of LFSE/HFSE/HLFD.

Pipeline for a (C, h, w) low-resolution cube at scale s:

    X_up = bicubic(x, s)
    X0   = head(X_up)                      # C -> D channels
    X1   = LFSE_0(X0)
    for i in 1..K:   low_i, high_i = DWT(X_i)
                     H_i = HFSE_i(high_i); X_{i+1} = LFSE_i(low_i)
    cur = X_{K+1}
    for i in K..1:   cur = HLFD_i(IWT(cur, H_i))
    Y   = X_up + tail(cur)                 # D -> C channels

Odd spatial dims are reflect-padded before each DWT and cropped after the
matching IWT. Weights live in a flat path -> array dict; the checkpoint
container is the binary HSRW format (byte-exact roundtrip).
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ContractViolation, FormatError, NumericError
from . import tensor as T
from . import ops
from .tensor import Tensor, Tape
from .ops import ConvSpec
from . import blocks
from .blocks import ParamView, ScanSpec
from .wavelet import dwt_haar, iwt_haar, WaveletPair

SCALES = (2, 4, 8)
CKPT_MAGIC = b"HSRW"
CKPT_VERSION = 1

_CONV3 = ConvSpec(kernel=(3, 3))


@dataclass(frozen=True)
class ModelConfig:
    bands: int  # spectral channels C
    scale: int  # spatial factor s
    hidden: int = 64  # D
    levels: int = 2  # K, wavelet U-Net depth
    stripe: int = 4  # stripe length / window size
    state: int = 16  # S6 state dimension N
    scan_kind: str = "stripe"
    blocks_per_level: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.scale not in SCALES:
            raise ContractViolation(f"scale must be one of {SCALES}")
        if self.bands < 1 or self.hidden < 1:
            raise ContractViolation("bands and hidden must be positive")
        if self.levels < 1 or self.stripe < 1 or self.blocks_per_level < 1:
            raise ContractViolation("levels, stripe and blocks_per_level must be >= 1")
        if self.scan_kind not in ("stripe", "raster", "window"):
            raise ContractViolation(f"unknown scan kind {self.scan_kind!r}")

    @property
    def scan(self) -> ScanSpec:
        return ScanSpec(kind=self.scan_kind, param=self.stripe)


@dataclass
class ModelWeights:
    config: ModelConfig
    params: dict[str, np.ndarray] = field(default_factory=dict)

    def as_tensors(self, tape: Tape | None = None) -> dict[str, Tensor]:
        if tape is None:
            return {k: Tensor(v) for k, v in self.params.items()}
        return {k: tape.leaf(v) for k, v in self.params.items()}


def param_specs(cfg: ModelConfig):
    """Ordered (path, shape, init-kind) triples for the whole model."""
    d, n, k_lv, reps = cfg.hidden, cfg.state, cfg.levels, cfg.blocks_per_level
    specs = []
    specs += blocks._conv_specs("global.head", cfg.bands, d, 3)
    for i in range(k_lv + 1):
        for j in range(reps):
            for path, shape, kind in blocks.lfse_specs(d, n):
                specs.append((f"enc.{i}.lfse.{j}.{path}", shape, kind))
        if i >= 1:
            for j in range(reps):
                for path, shape, kind in blocks.hfse_specs(3 * d, n):
                    specs.append((f"enc.{i}.hfse.{j}.{path}", shape, kind))
    for i in range(k_lv, 0, -1):
        for j in range(reps):
            for path, shape, kind in blocks.hlfd_specs(d, n):
                specs.append((f"dec.{i}.hlfd.{j}.{path}", shape, kind))
    specs += blocks._conv_specs("global.tail", d, cfg.bands, 3)
    return specs


def _init_array(shape, kind, rng: np.random.Generator) -> np.ndarray:
    if kind == "zeros":
        return np.zeros(shape, dtype=np.float32)
    if kind == "ones":
        return np.ones(shape, dtype=np.float32)
    if kind == "alpha":
        return np.full(shape, 0.5, dtype=np.float32)
    if kind == "a_log":
        d, n = shape
        row = np.log(np.arange(1, n + 1, dtype=np.float64))
        return np.broadcast_to(row, (d, n)).astype(np.float32)
    if kind == "conv":
        fan_in = int(np.prod(shape[1:]))
    elif kind == "linear":
        fan_in = shape[1]
    elif kind == "linear_rows":
        fan_in = shape[0]
    else:
        raise ContractViolation(f"unknown init kind {kind!r}")
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


def init_weights(cfg: ModelConfig) -> ModelWeights:
    """Deterministic per seed: one RNG consumed in fixed spec order."""
    rng = np.random.default_rng(cfg.seed)
    params = {}
    for path, shape, kind in param_specs(cfg):
        params[path] = _init_array(shape, kind, rng)
    return ModelWeights(config=cfg, params=params)


def count_params(w: ModelWeights) -> int:
    return int(sum(a.size for a in w.params.values()))


def _pad_to_even(x: Tensor) -> tuple[Tensor, tuple[int, int]]:
    c, h, wd = x.shape
    pb, pr = h % 2, wd % 2
    if not (pb or pr):
        return x, (h, wd)
    rows = ops._reflect_index(h, 0, pb)
    cols = ops._reflect_index(wd, 0, pr)
    out = np.ascontiguousarray(x.data[:, rows[:, None], cols[None, :]])

    def dfn(g):
        gx = np.zeros((c, h, wd), dtype=g.dtype)
        tmp = np.zeros((c, h, g.shape[2]), dtype=g.dtype)
        np.add.at(tmp, (slice(None), rows), g)
        np.add.at(gx, (Ellipsis, cols), tmp)
        return gx

    return T._record_unary(x, out, dfn), (h, wd)


def _crop(x: Tensor, dims: tuple[int, int]) -> Tensor:
    h, wd = dims
    if x.shape[1] == h and x.shape[2] == wd:
        return x
    out = T.narrow(x, 1, 0, h)
    if x.shape[2] != wd:
        out = T.narrow(out, 2, 0, wd)
    return out


def _stage(x: Tensor, params, prefix: str, fwd, reps: int, scan: ScanSpec) -> Tensor:
    for j in range(reps):
        x = fwd(x, ParamView(params, f"{prefix}.{j}."), scan)
    return x


def forward(x_lr: Tensor, params: dict[str, Tensor], cfg: ModelConfig) -> Tensor:
    """Super-resolve one (C, h, w) cube to (C, s*h, s*w)."""
    if x_lr.shape[0] != cfg.bands:
        raise ContractViolation(
            f"input has {x_lr.shape[0]} bands, config expects {cfg.bands}"
        )
    if not np.all(np.isfinite(x_lr.data)):
        raise NumericError("forward: input contains non-finite values")
    scan, reps = cfg.scan, cfg.blocks_per_level

    x_up = ops.bicubic_resize(x_lr, cfg.scale)
    pv = ParamView(params)
    cur = ops.conv2d(x_up, pv["global.head.w"], pv["global.head.b"], _CONV3)
    cur = _stage(cur, params, "enc.0.lfse", blocks.lfse_forward, reps, scan)

    highs = []
    for i in range(1, cfg.levels + 1):
        cur, dims = _pad_to_even(cur)
        pair = dwt_haar(cur)
        if pair.high.shape[0] != 3 * pair.low.shape[0]:
            raise ContractViolation("high path must carry 3x the low-path channels")
        h_out = _stage(pair.high, params, f"enc.{i}.hfse", blocks.hfse_forward, reps, scan)
        highs.append((h_out, dims))
        cur = _stage(pair.low, params, f"enc.{i}.lfse", blocks.lfse_forward, reps, scan)

    for i in range(cfg.levels, 0, -1):
        h_out, dims = highs[i - 1]
        y = _crop(iwt_haar(WaveletPair(low=cur, high=h_out)), dims)
        cur = _stage(y, params, f"dec.{i}.hlfd", blocks.hlfd_forward, reps, scan)

    residual = ops.conv2d(cur, pv["global.tail.w"], pv["global.tail.b"], _CONV3)
    out = T.add(x_up, residual)
    if not np.all(np.isfinite(out.data)):
        raise NumericError("forward produced non-finite values")
    return out


def infer(x_lr, weights: ModelWeights) -> Tensor:
    """Tape-free forward pass from raw weights."""
    x = x_lr if isinstance(x_lr, Tensor) else Tensor(x_lr)
    return forward(x, weights.as_tensors(), weights.config)


# ------------------------------------------------------------- FLOP model

def _conv_flops(c_in, c_out, k, h, w, groups=1) -> int:
    return 2 * k * k * (c_in // groups) * c_out * h * w


def _s6_flops(d, n, t) -> int:
    r = max(d // 16, 1)
    proj = 2 * r * d + 2 * d * r + 2 * d * n + 2 * d * n  # delta/B/C per token
    rec = 3 * 2 * d * n + 2 * d  # decay, inject, readout, skip
    return t * (proj + rec)


def _vssm_flops(c, n, h, w) -> int:
    d_inner = 2 * c
    f = _conv_flops(c, d_inner, 1, h, w)
    f += _conv_flops(d_inner, d_inner, 3, h, w, groups=d_inner)
    f += 4 * _s6_flops(d_inner, n, h * w)
    f += _conv_flops(d_inner, c, 1, h, w)
    return f


def _lfse_flops(c, n, h, w) -> int:
    inner = blocks.inner_channels(c)
    hidden = ops.ca_bottleneck(inner)
    f = _conv_flops(c, inner, 3, h, w)
    f += 2 * hidden * inner + 2 * inner * hidden  # CA matmuls
    f += _vssm_flops(inner, n, h, w)
    f += _conv_flops(inner, c, 3, h, w)
    return f


def _hfse_flops(c, n, h, w) -> int:
    inner = blocks.inner_channels(c)
    f = _conv_flops(c, inner, 3, h, w)
    f += _conv_flops(inner, inner, 3, h, w)
    f += _vssm_flops(inner, n, h, w)
    f += _conv_flops(inner, inner, 5, h, w, groups=inner)
    f += 2 * _conv_flops(inner, inner, 3, h, w)
    f += _conv_flops(inner, c, 3, h, w)
    return f


def _hlfd_flops(c, n, h, w) -> int:
    inner = blocks.inner_channels(c)
    half = inner // 2
    f = _conv_flops(c, inner, 3, h, w)
    f += _vssm_flops(half, n, h, w)
    f += _conv_flops(half, half, 3, h, w, groups=half)
    f += _conv_flops(half, half, 1, h, w)
    f += _conv_flops(inner, inner, 3, h, w)
    f += _conv_flops(inner, c, 3, h, w)
    return f


def estimate_flops(cfg: ModelConfig, h: int, w: int) -> int:
    """Approximate flops (2 per multiply-accumulate) for one forward pass on
    an (h, w) low-res input. Counts convs, matmuls and the sequential scan;
    normalizations, gates and the bicubic preprocessing are excluded."""
    d, n, reps = cfg.hidden, cfg.state, cfg.blocks_per_level
    hh, ww = h * cfg.scale, w * cfg.scale
    total = _conv_flops(cfg.bands, d, 3, hh, ww)
    ch, cw = hh, ww
    total += reps * _lfse_flops(d, n, ch, cw)
    for _ in range(cfg.levels):
        ch, cw = (ch + ch % 2) // 2, (cw + cw % 2) // 2
        total += reps * _hfse_flops(3 * d, n, ch, cw)
        total += reps * _lfse_flops(d, n, ch, cw)
    for _ in range(cfg.levels):
        ch, cw = ch * 2, cw * 2
        total += reps * _hlfd_flops(d, n, ch, cw)
    total += _conv_flops(d, cfg.bands, 3, hh, ww)
    return int(total)


# ------------------------------------------------------------- checkpoints

def save_checkpoint(weights: ModelWeights, path: str) -> None:
    buf = io.BytesIO()
    buf.write(CKPT_MAGIC)
    buf.write(struct.pack("<I", CKPT_VERSION))
    cfg_bytes = json.dumps(asdict(weights.config), sort_keys=True).encode()
    buf.write(struct.pack("<I", len(cfg_bytes)))
    buf.write(cfg_bytes)
    buf.write(struct.pack("<I", len(weights.params)))
    for name, arr in weights.params.items():
        nb = name.encode()
        buf.write(struct.pack("<I", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.astype("<f4", copy=False).tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(
            f"truncated checkpoint while reading {what} at byte {fh.tell() - len(data)}:"
            f" wanted {n} bytes, got {len(data)}"
        )
    return data


def load_checkpoint(path: str) -> ModelWeights:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CKPT_MAGIC:
            raise FormatError(f"bad checkpoint magic {magic!r} at byte 0")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != CKPT_VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        (cfg_len,) = struct.unpack("<I", _read_exact(fh, 4, "config length"))
        cfg = ModelConfig(**json.loads(_read_exact(fh, cfg_len, "config")))
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "param count"))
        params = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(fh, 4, "name length"))
            name = _read_exact(fh, name_len, "name").decode()
            (ndim,) = struct.unpack("<I", _read_exact(fh, 4, "ndim"))
            shape = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim, "shape"))
            nvals = int(np.prod(shape, dtype=np.int64)) if ndim else 1
            raw = _read_exact(fh, 4 * nvals, "data")
            params[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    weights = ModelWeights(config=cfg, params=params)
    expected = {p: s for p, s, _ in param_specs(cfg)}
    got = {k: tuple(v.shape) for k, v in params.items()}
    if got != {k: tuple(v) for k, v in expected.items()}:
        raise FormatError("checkpoint parameters do not match the stored config")
    return weights
