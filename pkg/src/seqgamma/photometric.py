"""Affine-compensated Huber photometric energy between two frames.

The residual for a correspondence ``p -> p'`` is::

    (I_j[p'] - b_j) - exp(a_j - a_i) * (I_i[p] - b_i)

which is the direct-SLAM photometric term with per-frame exposure ``a`` and
offset ``b``.  Correspondences are supplied by the caller.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .frames import as_array, luminance_array

log = logging.getLogger(__name__)


class CorrespondenceError(ValueError):
    pass


class DegenerateFitError(ValueError):
    pass


@dataclass(frozen=True)
class AffineBrightness:
    a: float = 0.0
    b: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise ValueError("affine brightness parameters must be finite")


@dataclass(frozen=True)
class HuberConfig:
    delta: float = 0.03

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be positive")


@dataclass(frozen=True)
class CorrespondenceSet:
    """Integer pixel pairs ``(x_i, y_i) -> (x_j, y_j)`` with positive weights."""

    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray

    def __post_init__(self):
        src = np.asarray(self.src, dtype=np.intp).reshape(-1, 2)
        dst = np.asarray(self.dst, dtype=np.intp).reshape(-1, 2)
        w = np.broadcast_to(np.asarray(self.weight, dtype=np.float64), (len(src),)).copy()
        if len(src) != len(dst):
            raise CorrespondenceError("source and destination counts differ")
        if np.any(w <= 0):
            raise CorrespondenceError("correspondence weights must be positive")
        object.__setattr__(self, "src", src)
        object.__setattr__(self, "dst", dst)
        object.__setattr__(self, "weight", w)

    def __len__(self):
        return len(self.src)

    @classmethod
    def identity(cls, height: int, width: int, keep=None) -> "CorrespondenceSet":
        y, x = np.nonzero(np.ones((height, width), bool) if keep is None else keep)
        xy = np.stack([x, y], axis=1)
        return cls(xy, xy, 1.0)

    def subset(self, mask) -> "CorrespondenceSet":
        mask = np.asarray(mask, dtype=bool)
        return CorrespondenceSet(self.src[mask], self.dst[mask], self.weight[mask])

    def check_bounds(self, shape_i, shape_j):
        for name, pts, shape in (("source", self.src, shape_i), ("target", self.dst, shape_j)):
            bad = (pts[:, 0] < 0) | (pts[:, 0] >= shape[1]) | (pts[:, 1] < 0) | (pts[:, 1] >= shape[0])
            if bad.any():
                k = int(np.argmax(bad))
                raise CorrespondenceError(
                    f"{name} point out of bounds in pair {k}: "
                    f"{tuple(self.src[k])} -> {tuple(self.dst[k])}"
                )

    def sample(self, frame_i, frame_j):
        """Intensities ``(I_i[p], I_j[p'])`` at every correspondence."""
        a, b = _luma(frame_i), _luma(frame_j)
        self.check_bounds(a.shape, b.shape)
        return a[self.src[:, 1], self.src[:, 0]], b[self.dst[:, 1], self.dst[:, 0]]


def _luma(frame) -> np.ndarray:
    return luminance_array(as_array(frame))


def read_correspondences(path) -> CorrespondenceSet:
    """Parse ``x_i y_i x_j y_j [weight]`` lines; ``#`` starts a comment."""
    src, dst, w = [], [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (4, 5):
            raise CorrespondenceError(f"{path}:{lineno}: expected 4 or 5 fields, got {len(parts)}")
        try:
            xi, yi, xj, yj = (int(v) for v in parts[:4])
            weight = float(parts[4]) if len(parts) == 5 else 1.0
        except ValueError as exc:
            raise CorrespondenceError(f"{path}:{lineno}: {exc}") from exc
        src.append((xi, yi))
        dst.append((xj, yj))
        w.append(weight)
    return CorrespondenceSet(np.array(src).reshape(-1, 2), np.array(dst).reshape(-1, 2), np.array(w))


def write_correspondences(corr: CorrespondenceSet, path) -> None:
    lines = [
        f"{xi} {yi} {xj} {yj} {w!r}"
        for (xi, yi), (xj, yj), w in zip(corr.src, corr.dst, corr.weight.tolist())
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def huber(r: np.ndarray, delta: float) -> np.ndarray:
    r = np.abs(r)
    return np.where(r <= delta, 0.5 * r * r, delta * (r - 0.5 * delta))


def residuals(frame_i, frame_j, corr: CorrespondenceSet,
              ab_i: AffineBrightness = AffineBrightness(),
              ab_j: AffineBrightness = AffineBrightness()) -> np.ndarray:
    vi, vj = corr.sample(frame_i, frame_j)
    return (vj - ab_j.b) - np.exp(ab_j.a - ab_i.a) * (vi - ab_i.b)


def photometric_energy(frame_i, frame_j, corr: CorrespondenceSet,
                       ab_i: AffineBrightness = AffineBrightness(),
                       ab_j: AffineBrightness = AffineBrightness(),
                       cfg: HuberConfig = HuberConfig()) -> float:
    """Weighted Huber sum of affine-compensated residuals."""
    r = residuals(frame_i, frame_j, corr, ab_i, ab_j)
    return float(np.sum(corr.weight * huber(r, cfg.delta)))


def fit_affine(frame_i, frame_j, corr: CorrespondenceSet, cfg: HuberConfig = HuberConfig()):
    """Least-squares ``I_j ~ s I_i + o`` with frame i as gauge (a_i = b_i = 0).

    Returns ``(AffineBrightness(a=ln s, b=o), huber_energy_at_fit)``.
    """
    vi, vj = corr.sample(frame_i, frame_j)
    w = corr.weight
    if len(vi) < 2 or np.ptp(vi) == 0.0:
        raise DegenerateFitError("need at least two correspondences with distinct source intensities")
    sw = w.sum()
    mi, mj = (w @ vi) / sw, (w @ vj) / sw
    di = vi - mi
    s = float((w * di) @ (vj - mj) / ((w * di) @ di))
    if s <= 0.0:
        raise DegenerateFitError(f"fitted exposure scale {s:.6g} is not positive")
    o = float(mj - s * mi)
    ab = AffineBrightness(float(np.log(s)), o)
    return ab, photometric_energy(frame_i, frame_j, corr, AffineBrightness(), ab, cfg)


def sequence_photometric_score(seq, corr_per_pair=None, cfg: HuberConfig = HuberConfig()) -> float:
    """Mean over adjacent pairs of the fitted residual energy per correspondence.

    ``corr_per_pair`` defaults to identity correspondences on every pixel.
    """
    frames = [_luma(f) for f in seq]
    if len(frames) < 2:
        raise ValueError("need at least two frames")
    if corr_per_pair is None:
        h, w = frames[0].shape
        ident = CorrespondenceSet.identity(h, w)
        corr_per_pair = [ident] * (len(frames) - 1)
    if len(corr_per_pair) != len(frames) - 1:
        raise ValueError(f"need {len(frames) - 1} correspondence sets, got {len(corr_per_pair)}")
    scores = []
    for k, (a, b, corr) in enumerate(zip(frames[:-1], frames[1:], corr_per_pair)):
        try:
            _, energy = fit_affine(a, b, corr, cfg)
        except DegenerateFitError as exc:
            # unrelated or flat frames: score the best pure offset instead
            log.warning("pair %d: %s; using offset-only fit", k, exc)
            vi, vj = corr.sample(a, b)
            o = float(corr.weight @ (vj - vi) / corr.weight.sum())
            energy = photometric_energy(a, b, corr, AffineBrightness(), AffineBrightness(0.0, o), cfg)
        scores.append(energy / len(corr))
    return float(np.mean(scores))
