"""Exhaustive per-frame gamma search under the training reference scheme."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .frames import Frame, Sequence, as_array, luminance_array
from .gamma import gamma_array
from .ssim import SsimConfig, box_filter
from .trainer import reference_set


def default_grid(points: int = 241, lo: float = 0.1, hi: float = 10.0) -> np.ndarray:
    """Log-uniform grid; for an odd count symmetric about 1 it contains 1.0 exactly."""
    if points < 2:
        raise ValueError("grid needs at least two points")
    half = (points - 1) / 2.0
    if np.isclose(lo * hi, 1.0) and points % 2 == 1:
        grid = hi ** ((np.arange(points) - half) / half)
    else:
        grid = np.exp(np.linspace(np.log(lo), np.log(hi), points))
    return grid


@dataclass(frozen=True)
class OracleConfig:
    grid: np.ndarray = field(default_factory=default_grid)
    ssim: SsimConfig = field(default_factory=SsimConfig)
    seed_count: int = 2

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0) or grid[0] <= 0:
            raise ValueError("grid must be positive and strictly ascending")
        if 1.0 not in grid:
            raise ValueError("grid must contain 1.0")
        object.__setattr__(self, "grid", grid)

    @property
    def log_step(self) -> float:
        return float(np.max(np.diff(np.log(self.grid))))


def _candidate_lumas(raw: np.ndarray, grid: np.ndarray) -> np.ndarray:
    if raw.ndim == 2:
        return np.power(raw[None], grid[:, None, None])
    return np.stack([luminance_array(np.power(raw, g)) for g in grid])


def grid_losses(references, raw_target, keep, cfg: OracleConfig) -> np.ndarray:
    """Mean masked SSIM loss over the references for every grid gamma."""
    ssim = cfg.ssim
    rad, c1, c2 = ssim.window_radius, ssim.c1, ssim.c2
    cand = _candidate_lumas(as_array(raw_target), cfg.grid)
    keep = np.asarray(keep, dtype=bool)
    mu_t = box_filter(cand, rad)
    var_t = box_filter(cand * cand, rad) - mu_t**2
    total = np.zeros(len(cfg.grid))
    for ref in references:
        r = luminance_array(as_array(ref))
        mu_r = box_filter(r, rad)
        var_r = box_filter(r * r, rad) - mu_r**2
        cov = box_filter(r[None] * cand, rad) - mu_r * mu_t
        smap = ((2 * mu_r * mu_t + c1) * (2 * cov + c2)) / (
            (mu_r**2 + mu_t**2 + c1) * (var_r + var_t + c2))
        total += np.mean(1.0 - smap[:, keep], axis=1)
    return total / len(references)


def pick_gamma(grid: np.ndarray, losses: np.ndarray):
    """Minimum loss; ties go to the gamma nearest 1 in log, then the smaller one."""
    order = np.lexsort((grid, np.abs(np.log(grid)), losses))
    k = order[0]
    return float(grid[k]), float(losses[k])


def oracle_gamma(seq, t: int, prior_adjusted, cfg: OracleConfig = OracleConfig()):
    """Best grid gamma for frame ``t`` given the oracle's earlier outputs.

    Returns ``(gamma, loss)``; a fully specular frame yields ``(1.0, nan)``.
    """
    if t < cfg.seed_count:
        raise ValueError(f"frame {t} is a seed")
    if len(prior_adjusted) < t:
        raise ValueError(f"need {t} prior adjusted frames, got {len(prior_adjusted)}")
    raw = as_array(seq[t])
    keep = luminance_array(raw) <= cfg.ssim.mask_threshold
    if not keep.any():
        return 1.0, float("nan")
    refs = []
    for kind, k in reference_set(t, cfg.seed_count):
        src = prior_adjusted[k] if kind == "adjusted" else seq[k]
        refs.append(luminance_array(as_array(src)))
    return pick_gamma(cfg.grid, grid_losses(refs, raw, keep, cfg))


def oracle_enhance(seq: Sequence, cfg: OracleConfig = OracleConfig()):
    """Greedy frame-by-frame oracle; seed frames pass through unchanged.

    Returns ``(enhanced, gammas, losses)``; seed entries of ``losses`` are nan.
    """
    if len(seq) < cfg.seed_count + 1:
        raise ValueError(f"oracle needs at least {cfg.seed_count + 1} frames")
    out = [as_array(f) for f in seq[:cfg.seed_count]]
    gammas = [1.0] * cfg.seed_count
    losses = [float("nan")] * cfg.seed_count
    for t in range(cfg.seed_count, len(seq)):
        g, loss = oracle_gamma(seq, t, out, cfg)
        out.append(gamma_array(as_array(seq[t]), g))
        gammas.append(g)
        losses.append(loss)
    fps = getattr(seq, "fps", 18.0)
    return Sequence(tuple(Frame(a, k) for k, a in enumerate(out)), fps), gammas, losses
