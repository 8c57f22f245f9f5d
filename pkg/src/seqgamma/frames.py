"""Frame and sequence containers, image IO, luminance and specular masking."""

from __future__ import annotations

import os
import re
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence as _Seq

import numpy as np
from PIL import Image, UnidentifiedImageError

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
DEFAULT_PATTERN = "frame_%06d.png"
DEFAULT_FPS = 18.0


class FrameError(ValueError):
    """Raised for malformed frames or sequences."""


class SequenceGapError(FrameError):
    def __init__(self, index: int):
        super().__init__(f"missing frame at index {index}")
        self.index = index


class DimensionMismatchError(FrameError):
    pass


class DecodeError(FrameError):
    def __init__(self, path, reason):
        super().__init__(f"cannot decode {path}: {reason}")
        self.path = Path(path)


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Frame:
    """A normalized image, shape ``(H, W)`` or ``(H, W, 3)``, values in [0, 1]."""

    data: np.ndarray
    index: int = 0

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 3 and data.shape[2] == 1:
            data = data[:, :, 0]
        if data.ndim not in (2, 3) or (data.ndim == 3 and data.shape[2] != 3):
            raise FrameError(f"frame must be (H, W) or (H, W, 3), got {data.shape}")
        if data.size == 0:
            raise FrameError("empty frame")
        if not np.all(np.isfinite(data)):
            raise FrameError("frame contains non-finite intensities")
        if data.min() < 0.0 or data.max() > 1.0:
            raise FrameError("frame intensities must lie in [0, 1]")
        object.__setattr__(self, "data", _freeze(data))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else 3

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def with_data(self, data) -> "Frame":
        return Frame(np.clip(data, 0.0, 1.0), self.index)

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return self.index == other.index and np.array_equal(self.data, other.data)

    __hash__ = None


@dataclass(frozen=True)
class Sequence:
    """Ordered frames sharing one shape; indices run 0..n-1."""

    frames: tuple
    fps: float = DEFAULT_FPS

    def __post_init__(self):
        frames = tuple(self.frames)
        if frames:
            shape = frames[0].shape
            for k, f in enumerate(frames):
                if f.shape != shape:
                    raise DimensionMismatchError(
                        f"frame {k} has shape {f.shape}, expected {shape}"
                    )
                if f.index != k:
                    raise FrameError(f"frame at position {k} carries index {f.index}")
        object.__setattr__(self, "frames", frames)

    @classmethod
    def from_arrays(cls, arrays: Iterable, fps: float = DEFAULT_FPS) -> "Sequence":
        return cls(tuple(Frame(a, k) for k, a in enumerate(arrays)), fps)

    def __len__(self):
        return len(self.frames)

    def __getitem__(self, k):
        return self.frames[k]

    def __iter__(self):
        return iter(self.frames)

    @property
    def shape(self):
        return self.frames[0].shape if self.frames else None

    def to_array(self) -> np.ndarray:
        """Stack frames into ``(T, H, W[, 3])``."""
        return np.stack([f.data for f in self.frames])

    def luminance(self) -> np.ndarray:
        return np.stack([luminance_array(f.data) for f in self.frames])


@dataclass(frozen=True)
class SpecularMask:
    keep: np.ndarray = field(repr=False)

    def __post_init__(self):
        keep = np.array(self.keep, dtype=bool, copy=True)
        keep.setflags(write=False)
        object.__setattr__(self, "keep", keep)

    @property
    def height(self):
        return self.keep.shape[0]

    @property
    def width(self):
        return self.keep.shape[1]

    @property
    def count(self) -> int:
        return int(self.keep.sum())


def as_array(x) -> np.ndarray:
    if isinstance(x, Frame):
        return x.data
    return np.asarray(x, dtype=np.float64)


def luminance_array(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 2:
        return a
    if a.ndim == 3 and a.shape[-1] == 3:
        return a @ LUMA_WEIGHTS
    raise FrameError(f"cannot take luminance of shape {a.shape}")


def luminance(frame: Frame) -> Frame:
    """Rec. 601 luma for RGB frames; a copy for single-channel frames."""
    return Frame(np.clip(luminance_array(frame.data), 0.0, 1.0), frame.index)


def specular_mask(frame, threshold: float = 0.7) -> SpecularMask:
    """Keep pixels whose luminance is at most ``threshold``."""
    return SpecularMask(luminance_array(as_array(frame)) <= threshold)


# -- resampling -------------------------------------------------------------

def _bilinear_axis(n_in: int, n_out: int):
    # half-pixel centers, edge clamped
    x = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    x = np.clip(x, 0.0, n_in - 1)
    lo = np.floor(x).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    w = x - lo
    return lo, hi, w


def resize_bilinear(a: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resample of a 2-D array to ``(height, width)``."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape == (height, width):
        return a.copy()
    r0, r1, wr = _bilinear_axis(a.shape[0], height)
    c0, c1, wc = _bilinear_axis(a.shape[1], width)
    rows = a[r0] * (1.0 - wr)[:, None] + a[r1] * wr[:, None]
    return rows[:, c0] * (1.0 - wc) + rows[:, c1] * wc


# -- IO ---------------------------------------------------------------------

def _template_regex(pattern: str) -> re.Pattern:
    m = re.search(r"%0?(\d*)d", pattern)
    if m is None:
        raise FrameError(f"pattern {pattern!r} has no %d field")
    head, tail = pattern[: m.start()], pattern[m.end():]
    return re.compile("^" + re.escape(head) + r"(\d+)" + re.escape(tail) + "$")


def decode_image(path) -> np.ndarray:
    """Read an 8-bit gray/RGB image (PNG, PGM, PPM) or a float32 ``.npy`` file."""
    path = Path(path)
    if path.suffix == ".npy":
        try:
            a = np.load(path, allow_pickle=False)
        except (OSError, ValueError) as exc:
            raise DecodeError(path, exc) from exc
        return np.clip(a.astype(np.float64), 0.0, 1.0)
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode in ("LA", "1"):
                img = img.convert("L")
            elif img.mode in ("P", "RGBA"):
                img = img.convert("RGB")
            elif img.mode not in ("L", "RGB"):
                raise DecodeError(path, f"unsupported mode {img.mode}")
            a = np.asarray(img, dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DecodeError(path, exc) from exc
    return a.astype(np.float64) / 255.0


def quantize(a: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(a) * 255.0), 0, 255).astype(np.uint8)


def _atomic_write(path: Path, write):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    os.close(fd)
    try:
        write(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_image(a: np.ndarray, path) -> None:
    """Write 8-bit PNG/PGM/PPM (by extension) or float32 ``.npy``."""
    path = Path(path)
    if path.suffix == ".npy":
        arr = np.asarray(a, dtype=np.float32)
        _atomic_write(path, lambda tmp: np.save(tmp, arr))
        return
    img = Image.fromarray(quantize(a))
    fmt = {".png": "PNG", ".pgm": "PPM", ".ppm": "PPM"}.get(path.suffix.lower())
    if fmt is None:
        raise FrameError(f"unsupported output extension {path.suffix!r}")
    _atomic_write(path, lambda tmp: img.save(tmp, format=fmt))


def load_sequence(dir_path, pattern: str = DEFAULT_PATTERN, fps: float = DEFAULT_FPS) -> Sequence:
    """Load every file in ``dir_path`` matching ``pattern`` as one sequence.

    Indices must be contiguous from the smallest one found; the first missing
    index raises :class:`SequenceGapError`.
    """
    dir_path = Path(dir_path)
    if not dir_path.is_dir():
        raise FileNotFoundError(f"no such directory: {dir_path}")
    rx = _template_regex(pattern)
    found = {}
    for entry in dir_path.iterdir():
        m = rx.match(entry.name)
        if m:
            found[int(m.group(1))] = entry
    if not found:
        raise FrameError(f"no files matching {pattern!r} in {dir_path}")
    start = min(found)
    frames = []
    for k in range(start, max(found) + 1):
        if k not in found:
            raise SequenceGapError(k)
        a = decode_image(found[k])
        if frames and a.shape != frames[0].shape:
            raise DimensionMismatchError(
                f"{found[k].name} has shape {a.shape}, expected {frames[0].shape}"
            )
        frames.append(Frame(a, k - start))
    return Sequence(tuple(frames), fps)


def save_sequence(seq: Sequence | _Seq, dir_path, pattern: str = DEFAULT_PATTERN) -> list:
    dir_path = Path(dir_path)
    dir_path.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, f in enumerate(seq):
        p = dir_path / (pattern % k)
        encode_image(as_array(f), p)
        paths.append(p)
    return paths
