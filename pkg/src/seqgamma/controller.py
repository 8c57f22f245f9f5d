"""Recurrent gamma predictor.

Per frame::

    x1 = relu(conv1(I))                  3x3, stride 2, 1 -> C
    h, c = convlstm(x1, h_prev, c_prev)  3x3 gates over [x1, h_prev], no peepholes
    x3 = relu(conv2(h))                  3x3, C -> C
    f = spatial mean of x3
    gamma = clamp(relu(head_weight . f + head_bias), 0.1, 10)

Gate order inside ``lstm.weight`` / ``lstm.bias`` is input, forget, output,
candidate.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._ops import conv2d, conv2d_backward, sigmoid
from .frames import Frame, Sequence, as_array, luminance_array, resize_bilinear
from .gamma import GAMMA_MAX, GAMMA_MIN, clamp_gamma, gamma_array

WEIGHTS_FORMAT = "seqgamma-weights"
WEIGHTS_VERSION = "1"
TENSOR_NAMES = (
    "conv1.weight",
    "conv1.bias",
    "lstm.weight",
    "lstm.bias",
    "conv2.weight",
    "conv2.bias",
    "head.weight",
    "head.bias",
)


class ControllerError(ValueError):
    pass


class NumericError(ArithmeticError):
    def __init__(self, layer: str):
        super().__init__(f"non-finite values in {layer}")
        self.layer = layer


class WeightsFormatError(ValueError):
    def __init__(self, message: str, tensor: str | None = None):
        super().__init__(message)
        self.tensor = tensor


def tensor_shapes(channels: int) -> dict:
    c = channels
    return {
        "conv1.weight": (c, 1, 3, 3),
        "conv1.bias": (c,),
        "lstm.weight": (4 * c, 2 * c, 3, 3),
        "lstm.bias": (4 * c,),
        "conv2.weight": (c, c, 3, 3),
        "conv2.bias": (c,),
        "head.weight": (c,),
        "head.bias": (),
    }


class ControllerParams:
    """Named weight tensors plus the two architecture constants."""

    def __init__(self, tensors: dict, channels: int = 8, input_size: int = 64):
        self.channels = int(channels)
        self.input_size = int(input_size)
        shapes = tensor_shapes(self.channels)
        self.tensors = {}
        for name in TENSOR_NAMES:
            if name not in tensors:
                raise ControllerError(f"missing tensor {name}")
            a = np.asarray(tensors[name], dtype=np.float64)
            if a.shape != shapes[name]:
                raise ControllerError(f"{name} has shape {a.shape}, expected {shapes[name]}")
            if not np.all(np.isfinite(a)):
                raise NumericError(name)
            self.tensors[name] = a

    @classmethod
    def initialize(cls, channels: int = 8, input_size: int = 64, seed=0) -> "ControllerParams":
        """Uniform +-1/sqrt(fan_in) kernels, forget bias 1, identity head."""
        rng = np.random.default_rng(seed)
        shapes = tensor_shapes(channels)
        t = {}
        for name in ("conv1.weight", "lstm.weight", "conv2.weight"):
            shape = shapes[name]
            bound = 1.0 / np.sqrt(np.prod(shape[1:]))
            t[name] = rng.uniform(-bound, bound, size=shape)
        t["conv1.bias"] = np.zeros(channels)
        t["conv2.bias"] = np.zeros(channels)
        lb = np.zeros(4 * channels)
        lb[channels:2 * channels] = 1.0
        t["lstm.bias"] = lb
        t["head.weight"] = np.zeros(channels)
        t["head.bias"] = np.array(1.0)
        return cls(t, channels, input_size)

    @classmethod
    def zeros(cls, channels: int = 8, input_size: int = 64, head_bias: float = 1.0):
        t = {k: np.zeros(s) for k, s in tensor_shapes(channels).items()}
        t["head.bias"] = np.array(float(head_bias))
        return cls(t, channels, input_size)

    def __getitem__(self, name):
        return self.tensors[name]

    def copy(self) -> "ControllerParams":
        return ControllerParams({k: v.copy() for k, v in self.tensors.items()},
                                self.channels, self.input_size)

    @property
    def n_parameters(self) -> int:
        return int(sum(v.size for v in self.tensors.values()))

    def flat(self) -> np.ndarray:
        return np.concatenate([self.tensors[k].ravel() for k in TENSOR_NAMES])

    def __eq__(self, other):
        if not isinstance(other, ControllerParams):
            return NotImplemented
        return (self.channels == other.channels and self.input_size == other.input_size
                and all(np.array_equal(self[k], other[k]) for k in TENSOR_NAMES))

    __hash__ = None


@dataclass
class ControllerState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, params: ControllerParams) -> "ControllerState":
        s = feature_size(params.input_size)
        shape = (params.channels, s, s)
        return cls(np.zeros(shape), np.zeros(shape))


def feature_size(input_size: int) -> int:
    return (input_size - 1) // 2 + 1


def prepare_input(frame, size: int) -> np.ndarray:
    """Luminance resampled to ``size x size``."""
    return resize_bilinear(luminance_array(as_array(frame)), size, size)


def _finite(a, layer):
    if not np.all(np.isfinite(a)):
        raise NumericError(layer)
    return a


def _forward(params: ControllerParams, state: ControllerState, x: np.ndarray):
    p, c = params.tensors, params.channels
    n = params.input_size
    if x.shape != (n, n):
        raise ControllerError(f"controller input must be {n}x{n}, got {x.shape}")
    if state.h.shape != (c, feature_size(n), feature_size(n)) or state.c.shape != state.h.shape:
        raise ControllerError(f"state shape {state.h.shape} does not match params")

    x1_pre, cols1 = conv2d(x[None], p["conv1.weight"], p["conv1.bias"], stride=2)
    x1 = np.maximum(_finite(x1_pre, "conv1"), 0.0)
    cat = np.concatenate([x1, state.h])
    g, cols_l = conv2d(cat, p["lstm.weight"], p["lstm.bias"])
    _finite(g, "lstm")
    i, f, o = sigmoid(g[:c]), sigmoid(g[c:2 * c]), sigmoid(g[2 * c:3 * c])
    gg = np.tanh(g[3 * c:])
    cell = f * state.c + i * gg
    tc = np.tanh(cell)
    h = o * tc
    x3_pre, cols2 = conv2d(h, p["conv2.weight"], p["conv2.bias"])
    x3 = np.maximum(_finite(x3_pre, "conv2"), 0.0)
    fvec = x3.mean(axis=(1, 2))
    z = float(p["head.weight"] @ fvec + p["head.bias"])
    if not np.isfinite(z):
        raise NumericError("head")
    gamma = clamp_gamma(max(z, 0.0), GAMMA_MIN, GAMMA_MAX)
    cache = dict(x_shape=(1,) + x.shape, cols1=cols1, x1_pre=x1_pre, cat_shape=cat.shape,
                 cols_l=cols_l, i=i, f=f, o=o, gg=gg, c_prev=state.c, tc=tc,
                 h_shape=h.shape, cols2=cols2, x3_pre=x3_pre, fvec=fvec, z=z)
    return gamma, ControllerState(h, cell), cache


def step(params: ControllerParams, state: ControllerState, frame):
    """Predict gamma for one controller-sized input and advance the state."""
    x = as_array(frame)
    if x.ndim == 3 or x.shape != (params.input_size,) * 2:
        x = prepare_input(x, params.input_size)
    gamma, new_state, _ = _forward(params, state, x)
    return gamma, new_state


def forward_sequence(params: ControllerParams, inputs):
    """Run the recurrence over prepared inputs; returns ``(gammas, caches)``."""
    state = ControllerState.zeros(params)
    gammas, caches = [], []
    for x in inputs:
        gamma, state, cache = _forward(params, state, x)
        gammas.append(gamma)
        caches.append(cache)
    return gammas, caches


def gamma_slope(z: float) -> float:
    """d gamma / d z through relu then clamp."""
    return 1.0 if GAMMA_MIN < z < GAMMA_MAX else 0.0


def backward_sequence(params: ControllerParams, caches, dgamma) -> dict:
    """Backpropagation through time for per-step gamma sensitivities."""
    p, c = params.tensors, params.channels
    grads = {k: np.zeros_like(v) for k, v in p.items()}
    dh_next = np.zeros(caches[0]["h_shape"]) if caches else None
    dc_next = np.zeros_like(dh_next) if caches else None
    for cache, dg in zip(reversed(caches), reversed(list(dgamma))):
        dz = dg * gamma_slope(cache["z"])
        grads["head.weight"] += dz * cache["fvec"]
        grads["head.bias"] += dz
        x3_pre = cache["x3_pre"]
        hw = x3_pre.shape[1] * x3_pre.shape[2]
        dx3 = (dz * p["head.weight"] / hw)[:, None, None] * (x3_pre > 0)
        dh, dw, db = conv2d_backward(dx3, cache["cols2"], p["conv2.weight"], cache["h_shape"])
        grads["conv2.weight"] += dw
        grads["conv2.bias"] += db
        dh = dh + dh_next

        i, f, o, gg, tc = cache["i"], cache["f"], cache["o"], cache["gg"], cache["tc"]
        do = dh * tc
        dcell = dc_next + dh * o * (1.0 - tc * tc)
        dgates = np.concatenate([
            dcell * gg * i * (1.0 - i),
            dcell * cache["c_prev"] * f * (1.0 - f),
            do * o * (1.0 - o),
            dcell * i * (1.0 - gg * gg),
        ])
        dc_next = dcell * f
        dcat, dw, db = conv2d_backward(dgates, cache["cols_l"], p["lstm.weight"], cache["cat_shape"])
        grads["lstm.weight"] += dw
        grads["lstm.bias"] += db
        dh_next = dcat[c:]
        dx1 = dcat[:c] * (cache["x1_pre"] > 0)
        _, dw, db = conv2d_backward(dx1, cache["cols1"], p["conv1.weight"], cache["x_shape"],
                                    stride=2, need_input=False)
        grads["conv1.weight"] += dw
        grads["conv1.bias"] += db
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(name)
    return grads


def predict_gammas(params: ControllerParams, seq) -> list:
    size = params.input_size
    gammas, _ = forward_sequence(params, (prepare_input(f, size) for f in seq))
    return gammas


def enhance_sequence(params: ControllerParams, seq: Sequence):
    """Enhance every frame with its predicted gamma; state starts at zero."""
    if len(seq) == 0:
        raise ControllerError("cannot enhance an empty sequence")
    state = ControllerState.zeros(params)
    frames, gammas = [], []
    for k, frame in enumerate(seq):
        gamma, state = step(params, state, prepare_input(frame, params.input_size))
        frames.append(Frame(gamma_array(as_array(frame), gamma), k))
        gammas.append(gamma)
    fps = seq.fps if isinstance(seq, Sequence) else 18.0
    return Sequence(tuple(frames), fps), gammas


# -- weights file -----------------------------------------------------------

def params_to_document(params: ControllerParams) -> dict:
    return {
        "format": WEIGHTS_FORMAT,
        "version": WEIGHTS_VERSION,
        "architecture": {"channels": params.channels, "input_size": params.input_size,
                         "kernel": 3, "gate_order": "ifog"},
        "tensors": {
            name: {"shape": list(params[name].shape), "data": params[name].ravel().tolist()}
            for name in TENSOR_NAMES
        },
    }


def params_from_document(doc: dict) -> ControllerParams:
    if doc.get("format") != WEIGHTS_FORMAT:
        raise WeightsFormatError(f"not a {WEIGHTS_FORMAT} document")
    version = str(doc.get("version"))
    if version != WEIGHTS_VERSION:
        raise WeightsFormatError(f"unsupported weights version {version!r}, expected {WEIGHTS_VERSION!r}")
    arch = doc.get("architecture", {})
    channels = int(arch.get("channels", 8))
    input_size = int(arch.get("input_size", 64))
    shapes = tensor_shapes(channels)
    tensors = doc.get("tensors", {})
    out = {}
    for name in TENSOR_NAMES:
        entry = tensors.get(name)
        if entry is None:
            raise WeightsFormatError(f"missing tensor {name}", name)
        shape = tuple(entry.get("shape", ()))
        data = np.asarray(entry.get("data", []), dtype=np.float64)
        if shape != shapes[name] or data.size != int(np.prod(shape)):
            raise WeightsFormatError(
                f"tensor {name}: shape {shape} with {data.size} values, expected {shapes[name]}", name)
        out[name] = data.reshape(shape)
    return ControllerParams(out, channels, input_size)


def save_params(params: ControllerParams, path) -> Path:
    path = Path(path)
    text = json.dumps(params_to_document(params), indent=1)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    with os.fdopen(fd, "w") as fh:
        fh.write(text + "\n")
    os.replace(tmp, path)
    return path


def load_params(path) -> ControllerParams:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise WeightsFormatError(f"{path}: invalid JSON ({exc})") from exc
    return params_from_document(doc)
