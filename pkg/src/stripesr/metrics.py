"""Fidelity metrics for hyperspectral cubes: PSNR, SSIM, SAM, ERGAS.

Conventions used throughout this artifact (documented, not claimed to match
any external script): PSNR and SSIM are per-band values averaged over bands;
a zero-MSE band contributes the 99.0 dB cap; SSIM uses uniform 8x8 windows
at stride 1; SAM is the mean per-pixel spectral angle in degrees; ERGAS is
100/s * sqrt(mean_b(MSE_b / mu_b^2)) with mu_b the reference band mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractViolation, NumericError
from .data import HsiCube

PSNR_CAP_DB = 99.0
SSIM_WINDOW = 8


def _as_cube_array(x) -> np.ndarray:
    arr = x.data if isinstance(x, HsiCube) else np.asarray(x)
    if arr.ndim != 3:
        raise ContractViolation("metrics expect (C, H, W) cubes")
    return arr.astype(np.float64)


def _check_pair(x, y):
    a, b = _as_cube_array(x), _as_cube_array(y)
    if a.shape != b.shape:
        raise ContractViolation(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


@dataclass
class MetricReport:
    psnr: float
    ssim: float
    sam: float
    ergas: float

    def csv_row(self) -> str:
        return f"{self.psnr},{self.ssim},{self.sam},{self.ergas}"


def psnr(x, y, peak: float = 1.0) -> float:
    if peak <= 0:
        raise ContractViolation("peak must be positive")
    a, b = _check_pair(x, y)
    mse = ((a - b) ** 2).mean(axis=(1, 2))
    vals = np.where(
        mse > 0,
        10.0 * np.log10(peak**2 / np.where(mse > 0, mse, 1.0)),
        PSNR_CAP_DB,
    )
    return float(np.minimum(vals, PSNR_CAP_DB).mean())


def ssim(x, y, peak: float = 1.0) -> float:
    a, b = _check_pair(x, y)
    if a.shape[1] < SSIM_WINDOW or a.shape[2] < SSIM_WINDOW:
        raise ContractViolation(f"ssim needs H, W >= {SSIM_WINDOW}")
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    n = SSIM_WINDOW * SSIM_WINDOW
    total = 0.0
    for band in range(a.shape[0]):
        wa = sliding_window_view(a[band], (SSIM_WINDOW, SSIM_WINDOW))
        wb = sliding_window_view(b[band], (SSIM_WINDOW, SSIM_WINDOW))
        mu_a = wa.mean(axis=(2, 3))
        mu_b = wb.mean(axis=(2, 3))
        var_a = (wa * wa).sum(axis=(2, 3)) / n - mu_a * mu_a
        var_b = (wb * wb).sum(axis=(2, 3)) / n - mu_b * mu_b
        cov = (wa * wb).sum(axis=(2, 3)) / n - mu_a * mu_b
        num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
        den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
        total += float((num / den).mean())
    return total / a.shape[0]


def _sam_angles(x, y):
    a, b = _check_pair(x, y)
    dots = np.einsum("chw,chw->hw", a, b)
    sna = np.einsum("chw,chw->hw", a, a)
    snb = np.einsum("chw,chw->hw", b, b)
    valid = (sna > 0) & (snb > 0)
    # sqrt(sna*snb) instead of sqrt(sna)*sqrt(snb): for a == b the product
    # round-trips exactly, so identical cubes give cos = 1 and angle = 0
    cosang = np.clip(
        dots / np.sqrt(np.where(valid, sna * snb, 1.0)), -1.0, 1.0
    )
    theta = np.degrees(np.arccos(cosang))
    return np.where(valid, theta, 0.0), valid


def sam_error_map(x, y) -> np.ndarray:
    """Per-pixel spectral angle in degrees; excluded (zero-norm) pixels -> 0."""
    return _sam_angles(x, y)[0]


def sam(x, y) -> float:
    theta, valid = _sam_angles(x, y)
    n_valid = int(np.count_nonzero(valid))
    if n_valid == 0:
        raise NumericError("sam: every pixel has a zero spectral vector")
    return float(theta[valid].mean())


def ergas(x_ref, y_est, scale: int) -> float:
    a, b = _check_pair(x_ref, y_est)
    mu = a.mean(axis=(1, 2))
    zero = np.flatnonzero(mu == 0)
    if zero.size:
        raise NumericError(f"ergas: reference band {int(zero[0])} has zero mean")
    mse = ((a - b) ** 2).mean(axis=(1, 2))
    return float(100.0 / scale * np.sqrt((mse / mu**2).mean()))


def compute_report(pred, gt, scale: int, peak: float = 1.0) -> MetricReport:
    return MetricReport(
        psnr=psnr(pred, gt, peak),
        ssim=ssim(pred, gt, peak),
        sam=sam(pred, gt),
        ergas=ergas(gt, pred, scale),
    )
