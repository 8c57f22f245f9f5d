"""Masked SSIM loss on luminance frames and its analytic gradient.

Local statistics use a uniform (2r+1)x(2r+1) window with symmetric
reflection at the borders.  The window is applied as two separable matrix
products ``B_h @ x @ B_w.T``, so the adjoint needed for the gradient is just
``B_h.T @ g @ B_w``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .frames import DimensionMismatchError, as_array, luminance_array


class EmptyMaskError(ValueError):
    """Every pixel of the target was masked out as specular."""


@dataclass(frozen=True)
class SsimConfig:
    window_radius: int = 5
    c1: float = 0.01**2
    c2: float = 0.03**2
    mask_threshold: float = 0.7

    def __post_init__(self):
        if self.window_radius < 1:
            raise ValueError("window_radius must be >= 1")
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValueError("c1 and c2 must be positive")

    @property
    def window(self) -> int:
        return 2 * self.window_radius + 1


@dataclass(frozen=True)
class SsimStats:
    mu_r: np.ndarray
    mu_t: np.ndarray
    var_r: np.ndarray
    var_t: np.ndarray
    cov: np.ndarray


@lru_cache(maxsize=64)
def box_operator(n: int, radius: int) -> np.ndarray:
    """``(n, n)`` matrix averaging a symmetric-padded signal over 2r+1 taps."""
    k = 2 * radius + 1
    if k > n:
        raise ValueError(f"window {k} does not fit in extent {n}")
    pad = np.pad(np.eye(n), ((radius, radius), (0, 0)), mode="symmetric")
    csum = np.concatenate([np.zeros((1, n)), np.cumsum(pad, axis=0)])
    op = (csum[k:] - csum[:-k]) / k
    op.setflags(write=False)
    return op


def box_filter(x: np.ndarray, radius: int) -> np.ndarray:
    """Windowed mean over the last two axes."""
    bh = box_operator(x.shape[-2], radius)
    bw = box_operator(x.shape[-1], radius)
    return bh @ x @ bw.T


def box_filter_adjoint(g: np.ndarray, radius: int) -> np.ndarray:
    bh = box_operator(g.shape[-2], radius)
    bw = box_operator(g.shape[-1], radius)
    return bh.T @ g @ bw


def _luma(x) -> np.ndarray:
    return luminance_array(as_array(x))


def _check_pair(r: np.ndarray, t: np.ndarray):
    if r.shape[-2:] != t.shape[-2:]:
        raise DimensionMismatchError(f"reference {r.shape} vs target {t.shape}")


def ssim_stats(reference, target, cfg: SsimConfig = SsimConfig()) -> SsimStats:
    r, t = _luma(reference), _luma(target)
    _check_pair(r, t)
    rad = cfg.window_radius
    mu_r, mu_t = box_filter(r, rad), box_filter(t, rad)
    return SsimStats(
        mu_r,
        mu_t,
        box_filter(r * r, rad) - mu_r**2,
        box_filter(t * t, rad) - mu_t**2,
        box_filter(r * t, rad) - mu_r * mu_t,
    )


def _ssim_from_stats(s: SsimStats, c1: float, c2: float) -> np.ndarray:
    num = (2 * s.mu_r * s.mu_t + c1) * (2 * s.cov + c2)
    den = (s.mu_r**2 + s.mu_t**2 + c1) * (s.var_r + s.var_t + c2)
    return num / den


def ssim_map(reference, target, cfg: SsimConfig = SsimConfig()) -> np.ndarray:
    """Per-pixel SSIM between two luminance frames."""
    return _ssim_from_stats(ssim_stats(reference, target, cfg), cfg.c1, cfg.c2)


def _keep_array(mask, shape) -> np.ndarray:
    keep = getattr(mask, "keep", mask)
    keep = np.asarray(keep, dtype=bool)
    if keep.shape != shape:
        raise DimensionMismatchError(f"mask {keep.shape} vs frame {shape}")
    if not keep.any():
        raise EmptyMaskError("all pixels are masked as specular")
    return keep


def masked_ssim_loss(reference, target, mask, cfg: SsimConfig = SsimConfig()) -> float:
    """Mean of ``1 - SSIM`` over kept pixels."""
    smap = ssim_map(reference, target, cfg)
    keep = _keep_array(mask, smap.shape)
    return float(np.mean(1.0 - smap[keep]))


def loss_and_gradient(reference, target, mask, cfg: SsimConfig = SsimConfig()):
    """Return ``(loss, dloss/dtarget)`` for :func:`masked_ssim_loss`."""
    r, t = _luma(reference), _luma(target)
    _check_pair(r, t)
    keep = _keep_array(mask, t.shape)
    rad, c1, c2 = cfg.window_radius, cfg.c1, cfg.c2

    mu_r, mu_t = box_filter(r, rad), box_filter(t, rad)
    m_rr, m_tt, m_rt = box_filter(r * r, rad), box_filter(t * t, rad), box_filter(r * t, rad)
    a1 = 2 * mu_r * mu_t + c1
    a2 = 2 * (m_rt - mu_r * mu_t) + c2
    b1 = mu_r**2 + mu_t**2 + c1
    b2 = (m_rr - mu_r**2) + (m_tt - mu_t**2) + c2
    den = b1 * b2
    smap = a1 * a2 / den

    n = keep.sum()
    loss = float(np.sum(1.0 - smap[keep]) / n)
    g_s = np.where(keep, -1.0 / n, 0.0)

    # partials of smap w.r.t. the three target moments
    d_mu_t = ((2 * mu_r) * a2 + a1 * (-2 * mu_r)) / den - smap * ((2 * mu_t) * b2 + b1 * (-2 * mu_t)) / den
    d_m_tt = -smap * b1 / den
    d_m_rt = 2 * a1 / den

    grad = (
        box_filter_adjoint(g_s * d_mu_t, rad)
        + 2 * t * box_filter_adjoint(g_s * d_m_tt, rad)
        + r * box_filter_adjoint(g_s * d_m_rt, rad)
    )
    return loss, grad


def loss_gradient_wrt_target(reference, target, mask, cfg: SsimConfig = SsimConfig()) -> np.ndarray:
    return loss_and_gradient(reference, target, mask, cfg)[1]
