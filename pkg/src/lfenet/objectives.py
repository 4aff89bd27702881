"""Training losses and evaluation metrics.

The training objective combines a frequency term (L1 distance between the
forward FFTs of prediction and ground truth, real and imaginary parts
compared separately) with a structural term (1 - SSIM), each applied to
both stereo views and summed. Both terms use mean reduction internally so
their magnitudes are comparable and the unweighted sum is sane.

PSNR, SSIM and thresholded per-pixel error maps double as evaluation
metrics; SSIM uses the universal 11x11 Gaussian window (sigma 1.5) with
C1=0.01^2, C2=0.03^2 on unit dynamic range, over valid window positions.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError, NumericError

__all__ = [
    "LossBreakdown", "fre_loss", "ssim", "spa_loss", "psnr",
    "mse_map", "otsu_threshold", "evaluate_pair",
    "SSIM_WINDOW", "SSIM_SIGMA", "SSIM_C1", "SSIM_C2",
]

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


@dataclass(frozen=True)
class LossBreakdown:
    """Scalar summary of one evaluation: loss terms plus per-view metrics."""

    l_fre: float
    l_spa: float
    total: float
    psnr_left: float
    psnr_right: float
    ssim_left: float
    ssim_right: float

    def __post_init__(self):
        finite = all(math.isfinite(v) for v in
                     (self.l_fre, self.l_spa, self.total,
                      self.ssim_left, self.ssim_right))
        # +inf PSNR is the documented perfect-reconstruction sentinel
        if not finite or math.isnan(self.psnr_left) or math.isnan(self.psnr_right):
            raise NumericError(f"non-finite loss breakdown: {self}")


def _as_tensor(x):
    return x if isinstance(x, T.Tensor) else T.tensor(x)


def _as_batch(x):
    """Promote (C,H,W) to (1,C,H,W); reject other ranks."""
    t = _as_tensor(x)
    if t.ndim == 3:
        t = T.reshape(t, (1,) + t.shape)
    if t.ndim != 4:
        raise ContractError(f"expected a (C,H,W) or (N,C,H,W) image, got shape {t.shape}")
    return t


def _check_same_shape(a, b, name):
    if a.shape != b.shape:
        raise ContractError(f"{name}: shapes differ: {a.shape} vs {b.shape}")


def fre_loss(pred_l, pred_r, gt_l, gt_r):
    """Frequency loss: mean L1 between FFTs, real and imaginary parts
    added, summed over the two views. Differentiable; 0 iff pred == gt."""
    total = None
    for pred, gt in ((pred_l, gt_l), (pred_r, gt_r)):
        pred, gt = _as_batch(pred), _as_batch(gt)
        _check_same_shape(pred, gt, "fre_loss")
        re_p, im_p = T.fft2(pred)
        re_g, im_g = T.fft2(gt)
        term = T.add(T.tensor_mean(T.absolute(T.sub(re_p, re_g))),
                     T.tensor_mean(T.absolute(T.sub(im_p, im_g))))
        total = term if total is None else T.add(total, term)
    return total


def _gaussian_kernel(dtype):
    half = (SSIM_WINDOW - 1) / 2.0
    xs = np.arange(SSIM_WINDOW) - half
    g = np.exp(-(xs ** 2) / (2.0 * SSIM_SIGMA ** 2))
    k = np.outer(g, g)
    k /= k.sum()
    return T.tensor(k.reshape(1, 1, SSIM_WINDOW, SSIM_WINDOW).astype(dtype))


def ssim(a, b):
    """Mean local SSIM over valid 11x11 Gaussian windows, all channels.

    Returns a 0-d Tensor (differentiable in both arguments); identical
    inputs give exactly 1.0, and the measure is symmetric.
    """
    a, b = _as_batch(a), _as_batch(b)
    _check_same_shape(a, b, "ssim")
    n, c, h, w = a.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ContractError(
            f"ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}")
    kernel = _gaussian_kernel(a.dtype)
    flat_a = T.reshape(a, (n * c, 1, h, w))
    flat_b = T.reshape(b, (n * c, 1, h, w))

    def win(x):
        return T.conv2d(x, kernel)

    mu_a = win(flat_a)
    mu_b = win(flat_b)
    mu_aa = T.mul(mu_a, mu_a)
    mu_bb = T.mul(mu_b, mu_b)
    mu_ab = T.mul(mu_a, mu_b)
    var_a = T.sub(win(T.mul(flat_a, flat_a)), mu_aa)
    var_b = T.sub(win(T.mul(flat_b, flat_b)), mu_bb)
    cov = T.sub(win(T.mul(flat_a, flat_b)), mu_ab)
    num = T.mul(T.add(T.mul(mu_ab, 2.0), SSIM_C1), T.add(T.mul(cov, 2.0), SSIM_C2))
    den = T.mul(T.add(T.add(mu_aa, mu_bb), SSIM_C1), T.add(T.add(var_a, var_b), SSIM_C2))
    return T.tensor_mean(T.div(num, den))


def spa_loss(pred_l, pred_r, gt_l, gt_r):
    """Structural loss: (1 - SSIM) summed over both views; differentiable."""
    return T.add(T.sub(1.0, ssim(pred_l, gt_l)), T.sub(1.0, ssim(pred_r, gt_r)))


def psnr(a, b, peak=1.0):
    """Peak signal-to-noise ratio in dB; identical inputs give +inf."""
    a = np.asarray(a.data if isinstance(a, T.Tensor) else a, dtype=np.float64)
    b = np.asarray(b.data if isinstance(b, T.Tensor) else b, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractError(f"psnr: shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def otsu_threshold(values, bins=256):
    """Otsu's histogram threshold: maximizes inter-class variance."""
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    lo, hi = float(values.min()), float(values.max())
    if hi <= lo:
        return hi
    hist, edges = np.histogram(values, bins=bins, range=(lo, hi))
    p = hist.astype(np.float64) / hist.sum()
    omega = np.cumsum(p)
    centers = (edges[:-1] + edges[1:]) / 2.0
    mu = np.cumsum(p * centers)
    mu_total = mu[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        between = (mu_total * omega - mu) ** 2 / (omega * (1.0 - omega))
    between[~np.isfinite(between)] = -1.0
    # threshold sits at the upper edge of the best split bin
    return float(edges[int(np.argmax(between)) + 1])


def mse_map(pred, gt, threshold=None):
    """Binary per-pixel error map: channel-mean squared error, white where
    the error is at or above the threshold (inclusive).

    With threshold=None an Otsu split of the error histogram is used; an
    error image without contrast (e.g. a perfect prediction) comes back
    all black. Returns a (H,W) float array of {0.0, 1.0}.
    """
    p = np.asarray(pred.data if isinstance(pred, T.Tensor) else pred, dtype=np.float64)
    g = np.asarray(gt.data if isinstance(gt, T.Tensor) else gt, dtype=np.float64)
    if p.shape != g.shape:
        raise ContractError(f"mse_map: shapes differ: {p.shape} vs {g.shape}")
    if p.ndim != 3:
        raise ContractError(f"mse_map expects (C,H,W) images, got {p.shape}")
    err = ((p - g) ** 2).mean(axis=0)
    if threshold is None:
        if err.max() <= err.min():
            return np.zeros(err.shape, dtype=np.float64)
        threshold = otsu_threshold(err)
    return (err >= threshold).astype(np.float64)


def evaluate_pair(pred_l, pred_r, gt_l, gt_r, use_fre=True, use_spa=True):
    """Both loss terms plus per-view metrics for one prediction pair.

    Returns (total, breakdown): `total` is the differentiable sum of the
    enabled terms (both terms are always computed for reporting), and
    `breakdown` carries the float values.
    """
    if not use_fre and not use_spa:
        raise ContractError("at least one loss term must be enabled")
    s_l = ssim(pred_l, gt_l)
    s_r = ssim(pred_r, gt_r)
    l_spa = T.add(T.sub(1.0, s_l), T.sub(1.0, s_r))
    l_fre = fre_loss(pred_l, pred_r, gt_l, gt_r)
    if use_fre and use_spa:
        total = T.add(l_fre, l_spa)
    else:
        total = l_fre if use_fre else l_spa
    breakdown = LossBreakdown(
        l_fre=l_fre.item(),
        l_spa=l_spa.item(),
        total=total.item(),
        psnr_left=psnr(pred_l, gt_l),
        psnr_right=psnr(pred_r, gt_r),
        ssim_left=s_l.item(),
        ssim_right=s_r.item(),
    )
    return total, breakdown
