"""scikit-learn compatible wrappers around the enhancers.

``X`` is a frame sequence (``Sequence`` or ``(T, H, W[, 3])`` array) for
``transform``, and a collection of sequences for ``fit``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import controller as ctl
from .frames import Frame, Sequence
from .gamma import GAMMA_MAX, GAMMA_MIN, gamma_array
from .oracle import OracleConfig, default_grid, oracle_enhance
from .ssim import SsimConfig
from .trainer import TrainConfig, make_training_windows, sequence_loss, train
from .validation import check_sequence, check_sequences, like_input


class GammaRNNEnhancer(TransformerMixin, BaseEstimator):
    """Recurrent per-frame gamma correction learned without ground truth.

    ``fit`` cuts every input sequence into overlapping ``seq_len`` windows and
    trains the controller on them. After fitting, ``params_`` holds the weights
    and ``report_`` the training losses.
    """

    def __init__(self, channels=8, input_size=64, learning_rate=5e-5, batch_size=4,
                 epochs=10, seq_len=10, seed_count=2, window_radius=5,
                 mask_threshold=0.7, random_state=0):
        self.channels = channels
        self.input_size = input_size
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.seq_len = seq_len
        self.seed_count = seed_count
        self.window_radius = window_radius
        self.mask_threshold = mask_threshold
        self.random_state = random_state

    def _train_config(self):
        return TrainConfig(seq_len=self.seq_len, seed_count=self.seed_count,
                           learning_rate=self.learning_rate, batch_size=self.batch_size,
                           epochs=self.epochs, seed=self.random_state)

    def _ssim_config(self):
        return SsimConfig(window_radius=self.window_radius, mask_threshold=self.mask_threshold)

    def fit(self, X, y=None):
        seqs = check_sequences(X, min_length=self.seq_len)
        windows = [w for s in seqs for w in make_training_windows(s, self.seq_len)]
        init = ctl.ControllerParams.initialize(self.channels, self.input_size, self.random_state)
        self.params_, self.report_ = train(init, windows, self._train_config(), self._ssim_config())
        self.n_windows_ = len(windows)
        return self

    @classmethod
    def from_params(cls, params: ctl.ControllerParams, **kwargs) -> "GammaRNNEnhancer":
        est = cls(channels=params.channels, input_size=params.input_size, **kwargs)
        est.params_ = params
        return est

    @classmethod
    def from_weights(cls, path, **kwargs) -> "GammaRNNEnhancer":
        return cls.from_params(ctl.load_params(path), **kwargs)

    def gamma_trace(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        return np.array(ctl.predict_gammas(self.params_, check_sequence(X)))

    def transform(self, X):
        check_is_fitted(self, "params_")
        enhanced, _ = ctl.enhance_sequence(self.params_, check_sequence(X))
        return like_input(X, enhanced)

    def score(self, X, y=None) -> float:
        """Negative mean training loss over the ``seq_len`` windows of ``X``."""
        check_is_fitted(self, "params_")
        windows = [w for s in check_sequences(X, self.seq_len)
                   for w in make_training_windows(s, self.seq_len)]
        cfg, scfg = self._train_config(), self._ssim_config()
        return -float(np.mean([sequence_loss(self.params_, w, cfg, scfg) for w in windows]))


class OracleGammaEnhancer(TransformerMixin, BaseEstimator):
    """Grid-search gamma per frame against the same reference scheme (no learning)."""

    def __init__(self, grid_points=241, gamma_min=0.1, gamma_max=10.0, window_radius=5,
                 mask_threshold=0.7, seed_count=2):
        self.grid_points = grid_points
        self.gamma_min = gamma_min
        self.gamma_max = gamma_max
        self.window_radius = window_radius
        self.mask_threshold = mask_threshold
        self.seed_count = seed_count

    def fit(self, X=None, y=None):
        self.config_ = OracleConfig(
            grid=default_grid(self.grid_points, self.gamma_min, self.gamma_max),
            ssim=SsimConfig(window_radius=self.window_radius, mask_threshold=self.mask_threshold),
            seed_count=self.seed_count,
        )
        return self

    def enhance(self, X):
        """``(enhanced, gammas, losses)`` for one sequence."""
        if not hasattr(self, "config_"):
            self.fit()
        seq = check_sequence(X, min_length=self.seed_count + 1)
        enhanced, gammas, losses = oracle_enhance(seq, self.config_)
        return like_input(X, enhanced), np.array(gammas), np.array(losses)

    def gamma_trace(self, X) -> np.ndarray:
        return self.enhance(X)[1]

    def transform(self, X):
        return self.enhance(X)[0]


class FixedGammaEnhancer(TransformerMixin, BaseEstimator):
    """Apply one constant gamma to every frame."""

    def __init__(self, gamma=1.0):
        self.gamma = gamma

    def fit(self, X=None, y=None):
        if not GAMMA_MIN <= float(self.gamma) <= GAMMA_MAX:
            raise ValueError(f"gamma must lie in [{GAMMA_MIN}, {GAMMA_MAX}], got {self.gamma}")
        self.gamma_ = float(self.gamma)
        return self

    def gamma_trace(self, X) -> np.ndarray:
        return np.full(len(check_sequence(X)), float(self.gamma))

    def transform(self, X):
        if not hasattr(self, "gamma_"):
            self.fit()
        seq = check_sequence(X)
        out = Sequence(tuple(Frame(gamma_array(f.data, self.gamma_), k) for k, f in enumerate(seq)),
                       seq.fps)
        return like_input(X, out)
