"""Synthetic tube-like sequences with known lighting perturbations."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .frames import Sequence, as_array, luminance_array, specular_mask
from .ssim import EmptyMaskError, SsimConfig, masked_ssim_loss

LOG_GAMMA_LIMIT = float(np.log(3.0))


@dataclass(frozen=True)
class SynthConfig:
    length: int = 10
    height: int = 64
    width: int = 64
    walk_sigma: float = 0.08
    seed: int = 0
    base: str | np.ndarray = "tube"
    contrast: bool = False
    scale_sigma: float = 0.05
    offset_sigma: float = 0.02
    phase_step: float = 0.01

    def __post_init__(self):
        if self.length < 10:
            raise ValueError(f"length must be >= 10, got {self.length}")
        if self.walk_sigma < 0:
            raise ValueError("walk_sigma must be >= 0")


@dataclass(frozen=True)
class PerturbationTruth:
    gamma: np.ndarray
    scale: np.ndarray
    offset: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "g", "s", "o"])
        for t, (g, s, o) in enumerate(zip(self.gamma, self.scale, self.offset)):
            w.writerow([t, repr(float(g)), repr(float(s)), repr(float(o))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "PerturbationTruth":
        rows = list(csv.DictReader(io.StringIO(text)))
        return cls(*(np.array([float(r[k]) for r in rows]) for k in ("g", "s", "o")))


def tube_frame(height: int, width: int, phase: float, texture: np.ndarray | None = None) -> np.ndarray:
    """Down-the-barrel view: dark lumen, brighter wall, ridges drifting with ``phase``."""
    y, x = np.mgrid[0:height, 0:width]
    cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
    rad = np.hypot((y - cy) / (height / 2.0), (x - cx) / (width / 2.0))
    rho = np.clip(rad / np.sqrt(2.0), 1e-3, 1.0)
    falloff = rho**1.2
    depth = 1.0 / (rho + 0.15)
    ridges = 0.5 + 0.5 * np.cos(2.0 * np.pi * 0.45 * depth - phase)
    img = 0.04 + 0.58 * falloff * (0.7 + 0.3 * ridges)
    if texture is not None:
        img = img * texture
    return np.clip(img, 0.0, 1.0)


def _clean_frames(cfg: SynthConfig, rng: np.random.Generator) -> list:
    if isinstance(cfg.base, str):
        if cfg.base != "tube":
            raise ValueError(f"unknown base pattern {cfg.base!r}")
        texture = 1.0 + 0.08 * rng.standard_normal((cfg.height, cfg.width))
        texture = np.clip(texture, 0.8, 1.2)
        phase0 = rng.uniform(0.0, 2.0 * np.pi)
        return [
            tube_frame(cfg.height, cfg.width, phase0 + cfg.phase_step * t, texture)
            for t in range(cfg.length)
        ]
    base = np.clip(as_array(cfg.base), 0.0, 1.0)
    return [base.copy() for _ in range(cfg.length)]


def perturb(clean: np.ndarray, g: float, s: float, o: float) -> np.ndarray:
    return np.clip(s * np.power(clean, g) + o, 0.0, 1.0)


def generate(cfg: SynthConfig = SynthConfig()):
    """Return ``(degraded, clean, truth)`` for one synthetic sequence."""
    rng = np.random.default_rng(cfg.seed)
    clean = _clean_frames(cfg, rng)
    n = cfg.length
    log_g = np.zeros(n)
    steps = rng.standard_normal(n)
    for t in range(2, n):
        log_g[t] = np.clip(log_g[t - 1] + cfg.walk_sigma * steps[t], -LOG_GAMMA_LIMIT, LOG_GAMMA_LIMIT)
    scale, offset = np.ones(n), np.zeros(n)
    if cfg.contrast:
        scale[2:] = np.exp(cfg.scale_sigma * rng.standard_normal(n - 2))
        offset[2:] = cfg.offset_sigma * rng.standard_normal(n - 2)
    gamma = np.exp(log_g)
    degraded = [perturb(c, g, s, o) for c, g, s, o in zip(clean, gamma, scale, offset)]
    return (
        Sequence.from_arrays(degraded),
        Sequence.from_arrays(clean),
        PerturbationTruth(gamma, scale, offset),
    )


def corpus(n: int, start_seed: int = 0, **kwargs) -> list:
    """``n`` generated triples with consecutive seeds."""
    return [generate(SynthConfig(seed=start_seed + k, **kwargs)) for k in range(n)]


def adjacent_inconsistency(seq, ssim_cfg: SsimConfig = SsimConfig()) -> float:
    """Mean masked SSIM loss between consecutive frames (mask of the later frame).

    Pairs whose later frame is entirely specular are skipped.
    """
    frames = [luminance_array(as_array(f)) for f in seq]
    if len(frames) < 2:
        raise ValueError("need at least two frames")
    losses = []
    for a, b in zip(frames[:-1], frames[1:]):
        try:
            losses.append(masked_ssim_loss(a, b, specular_mask(b, ssim_cfg.mask_threshold), ssim_cfg))
        except EmptyMaskError:
            continue
    if not losses:
        raise EmptyMaskError("every frame is fully specular")
    return float(np.mean(losses))


# Fixed seeds for the reference experiments: training and held-out splits never overlap.
TRAIN_SEEDS = range(0, 200)
HELDOUT_SEEDS = range(100_000, 100_050)


def standard_corpus(split: str = "train", **kwargs) -> list:
    seeds = {"train": TRAIN_SEEDS, "heldout": HELDOUT_SEEDS}[split]
    return [generate(SynthConfig(seed=s, **kwargs)) for s in seeds]
