"""Power-law (gamma) correction with unit gain."""

from __future__ import annotations

import numpy as np

from .frames import Frame, as_array

GAMMA_MIN = 0.1
GAMMA_MAX = 10.0


class GammaDomainError(ValueError):
    pass


def _check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not np.isfinite(gamma) or gamma <= 0.0:
        raise GammaDomainError(f"gamma must be a positive finite number, got {gamma}")
    return gamma


def gamma_array(a: np.ndarray, gamma: float) -> np.ndarray:
    return np.power(np.asarray(a, dtype=np.float64), _check_gamma(gamma))


def apply_gamma(frame, gamma: float):
    """Map every intensity ``I`` to ``I ** gamma``.

    Accepts a :class:`Frame` (returns a Frame) or an array (returns an array).
    """
    out = gamma_array(as_array(frame), gamma)
    if isinstance(frame, Frame):
        return Frame(out, frame.index)
    return out


def gamma_gradient(frame, gamma: float) -> np.ndarray:
    """Derivative of ``I ** gamma`` with respect to gamma, 0 where ``I == 0``."""
    gamma = _check_gamma(gamma)
    a = as_array(frame)
    out = np.zeros_like(a)
    pos = a > 0
    out[pos] = np.power(a[pos], gamma) * np.log(a[pos])
    return out


def clamp_gamma(raw: float, lo: float = GAMMA_MIN, hi: float = GAMMA_MAX) -> float:
    if not (0.0 < lo < hi):
        raise ValueError(f"need 0 < lo < hi, got lo={lo}, hi={hi}")
    return float(min(max(raw, lo), hi))
