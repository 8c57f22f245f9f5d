"""Input checks shared by the estimators and the CLI."""

import numpy as np

from .frames import Frame, FrameError, Sequence


def check_sequence(X, min_length: int = 1) -> Sequence:
    """Coerce a Sequence, list of frames, or ``(T, H, W[, 3])`` array to a Sequence."""
    if isinstance(X, Sequence):
        seq = X
    else:
        if isinstance(X, np.ndarray):
            if X.ndim not in (3, 4):
                raise FrameError(f"expected (T, H, W) or (T, H, W, 3) array, got shape {X.shape}")
            arrays = list(X)
        else:
            arrays = [f.data if isinstance(f, Frame) else np.asarray(f) for f in X]
        seq = Sequence.from_arrays(arrays)
    if len(seq) < min_length:
        raise FrameError(f"sequence needs at least {min_length} frames, got {len(seq)}")
    return seq


def check_sequences(X, min_length: int = 1) -> list:
    """Accept one sequence or a collection of them; always returns a list."""
    if isinstance(X, Sequence) or (isinstance(X, np.ndarray) and X.ndim in (3, 4)):
        return [check_sequence(X, min_length)]
    if isinstance(X, np.ndarray) and X.ndim == 5:
        return [check_sequence(x, min_length) for x in X]
    X = list(X)
    if not X:
        raise FrameError("no sequences given")
    return [check_sequence(x, min_length) for x in X]


def like_input(X, seq: Sequence):
    """Return ``seq`` in the container type the caller passed in."""
    if isinstance(X, Sequence):
        return seq
    return seq.to_array()
