"""Adaptive per-frame gamma correction for temporally consistent lighting."""

__version__ = "0.1.0"

from .controller import ControllerParams, ControllerState, enhance_sequence, load_params, save_params
from .estimators import FixedGammaEnhancer, GammaRNNEnhancer, OracleGammaEnhancer
from .frames import Frame, Sequence, SpecularMask, load_sequence, luminance, save_sequence, specular_mask
from .gamma import apply_gamma, clamp_gamma, gamma_gradient
from .oracle import OracleConfig, oracle_enhance, oracle_gamma
from .photometric import (
    AffineBrightness,
    CorrespondenceSet,
    HuberConfig,
    fit_affine,
    photometric_energy,
    sequence_photometric_score,
)
from .ssim import SsimConfig, loss_gradient_wrt_target, masked_ssim_loss, ssim_map
from .synth import SynthConfig, adjacent_inconsistency, generate
from .trainer import TrainConfig, backward, make_training_windows, sequence_loss, train
