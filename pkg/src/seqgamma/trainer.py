"""Unsupervised training of the gamma controller.

Each training sequence is run through the controller from frame 0.  The
first ``seed_count`` frames only warm the recurrent state.  Every later
frame ``t`` is gamma-adjusted and compared with four references: the two
previous adjusted frames and the two raw seed frames.  Previous frames that
are themselves seeds are used raw.  Adjusted references are constants for
backpropagation.
"""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .controller import ControllerParams, backward_sequence, forward_sequence, prepare_input
from .frames import LUMA_WEIGHTS, Sequence, as_array, luminance_array
from .gamma import gamma_array, gamma_gradient
from .ssim import EmptyMaskError, SsimConfig, loss_and_gradient, masked_ssim_loss

logger = logging.getLogger(__name__)


class DegenerateSequenceError(ValueError):
    """No target frame in the sequence had any non-specular pixel."""


@dataclass(frozen=True)
class TrainConfig:
    seq_len: int = 10
    seed_count: int = 2
    learning_rate: float = 5e-5
    batch_size: int = 4
    epochs: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not (self.seq_len > self.seed_count >= 2):
            raise ValueError("need seq_len > seed_count >= 2")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")


def reference_set(t: int, seed_count: int = 2) -> tuple:
    """The four references of target ``t`` as ``(kind, index)`` pairs."""
    if t < seed_count:
        raise ValueError(f"frame {t} is a seed, not a target")
    prev = tuple(("adjusted" if k >= seed_count else "raw", k) for k in (t - 1, t - 2))
    return prev + (("raw", 0), ("raw", 1))


def adjusted_luma(raw: np.ndarray, gamma: float) -> np.ndarray:
    """Luminance of a gamma-adjusted frame (gamma applied per channel)."""
    return luminance_array(gamma_array(raw, gamma))


def adjusted_luma_gradient(raw: np.ndarray, gamma: float) -> np.ndarray:
    g = gamma_gradient(raw, gamma)
    return g if g.ndim == 2 else g @ LUMA_WEIGHTS


class _Prepared:
    """Per-sequence quantities that do not depend on the parameters."""

    def __init__(self, seq, input_size: int, ssim_cfg: SsimConfig):
        self.raw = [as_array(f) for f in seq]
        self.luma = [luminance_array(a) for a in self.raw]
        self.inputs = [prepare_input(a, input_size) for a in self.raw]
        self.keep = [y <= ssim_cfg.mask_threshold for y in self.luma]


def _loss_and_grads(params, prep: _Prepared, cfg: TrainConfig, ssim_cfg: SsimConfig,
                    need_grad: bool = True, reference_gammas=None):
    n = len(prep.raw)
    if n != cfg.seq_len:
        raise ValueError(f"sequence length {n} != seq_len {cfg.seq_len}")
    gammas, caches = forward_sequence(params, prep.inputs)
    adjusted = [adjusted_luma(prep.raw[t], gammas[t]) for t in range(n)]
    if reference_gammas is None:
        refs = adjusted
    else:
        refs = [adjusted_luma(prep.raw[t], reference_gammas[t]) for t in range(n)]
    dgamma = np.zeros(n)
    target_losses = {}
    for t in range(cfg.seed_count, n):
        if not prep.keep[t].any():
            logger.warning("target frame %d is fully specular; skipped", t)
            continue
        total, grad = 0.0, np.zeros_like(adjusted[t])
        for kind, k in reference_set(t, cfg.seed_count):
            ref = refs[k] if kind == "adjusted" else prep.luma[k]
            if need_grad:
                loss, g = loss_and_gradient(ref, adjusted[t], prep.keep[t], ssim_cfg)
                grad += g
            else:
                loss = masked_ssim_loss(ref, adjusted[t], prep.keep[t], ssim_cfg)
            total += loss
        target_losses[t] = total / 4.0
        if need_grad:
            dgamma[t] = float(np.sum(grad * adjusted_luma_gradient(prep.raw[t], gammas[t]))) / 4.0
    if not target_losses:
        raise DegenerateSequenceError("every target frame is fully specular")
    m = len(target_losses)
    loss = sum(target_losses.values()) / m
    grads = backward_sequence(params, caches, dgamma / m) if need_grad else None
    return loss, grads, gammas, target_losses


def sequence_loss(params: ControllerParams, seq, cfg: TrainConfig = TrainConfig(),
                  ssim_cfg: SsimConfig = SsimConfig(), reference_gammas=None) -> float:
    """Mean over target frames of the 4-reference masked SSIM loss.

    ``reference_gammas`` pins the adjusted references to a given gamma trace
    instead of the one the parameters produce.  Holding them at the
    unperturbed trace gives the objective whose gradient :func:`backward`
    returns, which is what finite-difference checks need.
    """
    prep = _Prepared(seq, params.input_size, ssim_cfg)
    return _loss_and_grads(params, prep, cfg, ssim_cfg, need_grad=False,
                           reference_gammas=reference_gammas)[0]


def gamma_trace(params: ControllerParams, seq) -> list:
    return forward_sequence(params, [prepare_input(f, params.input_size) for f in seq])[0]


def backward(params: ControllerParams, seq, cfg: TrainConfig = TrainConfig(),
             ssim_cfg: SsimConfig = SsimConfig()) -> dict:
    """Gradients of :func:`sequence_loss` for every parameter tensor."""
    prep = _Prepared(seq, params.input_size, ssim_cfg)
    return _loss_and_grads(params, prep, cfg, ssim_cfg)[1]


def loss_and_backward(params, seq, cfg=TrainConfig(), ssim_cfg=SsimConfig()):
    prep = _Prepared(seq, params.input_size, ssim_cfg)
    loss, grads, _, _ = _loss_and_grads(params, prep, cfg, ssim_cfg)
    return loss, grads


class Adam:
    def __init__(self, params: ControllerParams, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.tensors.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.tensors.items()}
        self.t = 0

    def step(self, params: ControllerParams, grads: dict):
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            mhat = self.m[k] / bc1
            vhat = self.v[k] / bc2
            params.tensors[k] = params.tensors[k] - self.lr * mhat / (np.sqrt(vhat) + self.eps)


@dataclass
class TrainReport:
    epoch_losses: list = field(default_factory=list)
    sequence_losses: list = field(default_factory=list)
    epoch_seconds: list = field(default_factory=list)

    def to_csv(self, timing: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "mean_loss", "seconds"] if timing else ["epoch", "mean_loss"])
        for e, loss in enumerate(self.epoch_losses, start=1):
            row = [e, repr(float(loss))]
            if timing:
                row.append(f"{self.epoch_seconds[e - 1]:.6f}")
            w.writerow(row)
        return buf.getvalue()


def train(params: ControllerParams, dataset, cfg: TrainConfig = TrainConfig(),
          ssim_cfg: SsimConfig = SsimConfig(), callback=None):
    """Adam over shuffled minibatches; returns ``(trained_params, TrainReport)``.

    The epoch loss is the mean of the per-sequence losses seen during that
    epoch, each evaluated before the update of its minibatch.
    """
    dataset = list(dataset)
    if not dataset:
        raise ValueError("empty training dataset")
    for k, seq in enumerate(dataset):
        if len(seq) != cfg.seq_len:
            raise ValueError(f"dataset sequence {k} has length {len(seq)}, expected {cfg.seq_len}")
    prepared = [_Prepared(s, params.input_size, ssim_cfg) for s in dataset]
    params = params.copy()
    opt = Adam(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    rng = np.random.default_rng(cfg.seed)
    report = TrainReport()
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(len(prepared))
        losses = np.empty(len(prepared))
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            acc = None
            for idx in batch:
                loss, grads, _, _ = _loss_and_grads(params, prepared[idx], cfg, ssim_cfg)
                losses[idx] = loss
                if acc is None:
                    acc = grads
                else:
                    for k in acc:
                        acc[k] += grads[k]
            for k in acc:
                acc[k] /= len(batch)
            opt.step(params, acc)
        report.epoch_losses.append(float(losses.mean()))
        report.sequence_losses.append(losses.tolist())
        report.epoch_seconds.append(time.perf_counter() - t0)
        logger.info("epoch %d loss %.6f", epoch + 1, report.epoch_losses[-1])
        if callback is not None:
            callback(epoch, report)
    return params, report


def make_training_windows(snippet, length: int = 10, stride: int = 1) -> list:
    """Overlapping fixed-length sub-sequences of a longer snippet."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    arrays = [as_array(f) for f in snippet]
    fps = getattr(snippet, "fps", 18.0)
    return [
        Sequence.from_arrays(arrays[s:s + length], fps)
        for s in range(0, len(arrays) - length + 1, stride)
    ]
