import json

import numpy as np
import pytest

from seqgamma import controller as ctl
from seqgamma.frames import Sequence
from seqgamma.synth import SynthConfig, generate


def _random_params(seed, channels=8, input_size=64, scale=0.3):
    rng = np.random.default_rng(seed)
    p = ctl.ControllerParams.initialize(channels, input_size, seed=seed)
    for k in p.tensors:
        p.tensors[k] = p.tensors[k] + rng.normal(0, scale, p[k].shape)
    return p


@pytest.fixture
def seq():
    return generate(SynthConfig(seed=3, length=12))[0]


def test_shapes_and_parameter_count():
    p = ctl.ControllerParams.initialize()
    assert p["conv1.weight"].shape == (8, 1, 3, 3)
    assert p["lstm.weight"].shape == (32, 16, 3, 3)
    assert p["conv2.weight"].shape == (8, 8, 3, 3)
    assert p["head.weight"].shape == (8,)
    assert p.n_parameters < 10_000


def test_initialization_contract():
    p = ctl.ControllerParams.initialize(seed=1)
    assert float(p["head.bias"]) == 1.0
    np.testing.assert_array_equal(p["head.weight"], 0.0)
    lb = p["lstm.bias"]
    np.testing.assert_array_equal(lb[8:16], 1.0)
    assert np.all(lb[:8] == 0) and np.all(lb[16:] == 0)
    assert np.abs(p["conv1.weight"]).max() <= 1 / 3
    assert np.abs(p["lstm.weight"]).max() <= 1 / np.sqrt(16 * 9)


def test_zero_weights_unit_bias_gives_identity(rng):
    p = ctl.ControllerParams.zeros(head_bias=1.0)
    g, _ = ctl.step(p, ctl.ControllerState.zeros(p), rng.uniform(size=(64, 64)))
    assert g == 1.0


def test_negative_bias_clamps_low(rng):
    p = ctl.ControllerParams.zeros(head_bias=-1.0)
    g, _ = ctl.step(p, ctl.ControllerState.zeros(p), rng.uniform(size=(64, 64)))
    assert g == 0.1


def test_step_is_deterministic(rng):
    p = _random_params(7)
    x = rng.uniform(size=(64, 64))
    runs = [ctl.step(p, ctl.ControllerState.zeros(p), x)[0] for _ in range(3)]
    assert runs[0] == runs[1] == runs[2]


def test_hidden_state_bounded(seq):
    p = _random_params(4, scale=2.0)
    state = ctl.ControllerState.zeros(p)
    for f in seq:
        _, state = ctl.step(p, state, f)
        assert np.abs(state.h).max() < 1.0


def test_shape_mismatch_errors():
    p = ctl.ControllerParams.initialize()
    with pytest.raises(ctl.ControllerError):
        ctl._forward(p, ctl.ControllerState.zeros(p), np.zeros((32, 32)))
    small = ctl.ControllerParams.initialize(channels=2, input_size=8)
    with pytest.raises(ctl.ControllerError):
        ctl.step(p, ctl.ControllerState.zeros(small), np.zeros((64, 64)))


def test_non_finite_activation_names_layer():
    p = ctl.ControllerParams.initialize()
    p.tensors["conv1.bias"] = np.full(8, 1e308)
    p.tensors["conv1.weight"] = np.full((8, 1, 3, 3), 1e308)
    with pytest.raises(ctl.NumericError) as exc, np.errstate(over="ignore", invalid="ignore"):
        ctl.step(p, ctl.ControllerState.zeros(p), np.ones((64, 64)))
    assert exc.value.layer == "conv1"


class TestEnhanceSequence:
    def test_identity_params_leave_sequence_unchanged(self, seq):
        out, gammas = ctl.enhance_sequence(ctl.ControllerParams.initialize(seed=9), seq)
        assert gammas == [1.0] * len(seq)
        np.testing.assert_array_equal(out.to_array(), seq.to_array())

    def test_single_frame(self, seq):
        out, gammas = ctl.enhance_sequence(_random_params(1), Sequence((seq[0],)))
        assert len(out) == 1 and len(gammas) == 1

    def test_state_resets_per_call(self, seq):
        p = _random_params(2)
        assert ctl.enhance_sequence(p, seq)[1] == ctl.enhance_sequence(p, seq)[1]

    def test_causality(self, seq):
        p = _random_params(5)
        base = ctl.predict_gammas(p, seq)
        arrays = seq.to_array()
        shuffled = np.concatenate([arrays[:6], arrays[6:][::-1]])
        assert ctl.predict_gammas(p, Sequence.from_arrays(shuffled))[:6] == base[:6]

    def test_gamma_bounds(self, seq):
        for s in range(5):
            gammas = ctl.enhance_sequence(_random_params(s, scale=3.0), seq)[1]
            assert all(0.1 <= g <= 10.0 for g in gammas)

    def test_non_square_input_resampled(self, rng):
        frames = Sequence.from_arrays(rng.uniform(size=(3, 40, 90, 3)))
        out, gammas = ctl.enhance_sequence(_random_params(3), frames)
        assert out.shape == (40, 90, 3) and len(gammas) == 3


class TestWeightsFile:
    def test_round_trip_bit_exact(self, tmp_path):
        p = _random_params(11)
        path = ctl.save_params(p, tmp_path / "w.json")
        q = ctl.load_params(path)
        assert q == p
        for k in ctl.TENSOR_NAMES:
            assert p[k].tobytes() == q[k].tobytes()

    def test_missing_tensor(self, tmp_path):
        doc = ctl.params_to_document(ctl.ControllerParams.initialize())
        del doc["tensors"]["conv2.bias"]
        (tmp_path / "w.json").write_text(json.dumps(doc))
        with pytest.raises(ctl.WeightsFormatError, match="conv2.bias") as exc:
            ctl.load_params(tmp_path / "w.json")
        assert exc.value.tensor == "conv2.bias"

    def test_version_gate(self, tmp_path):
        doc = ctl.params_to_document(ctl.ControllerParams.initialize())
        doc["version"] = "2"
        (tmp_path / "w.json").write_text(json.dumps(doc))
        with pytest.raises(ctl.WeightsFormatError, match="version"):
            ctl.load_params(tmp_path / "w.json")

    def test_shape_mismatch(self, tmp_path):
        doc = ctl.params_to_document(ctl.ControllerParams.initialize())
        doc["tensors"]["head.weight"]["shape"] = [4]
        (tmp_path / "w.json").write_text(json.dumps(doc))
        with pytest.raises(ctl.WeightsFormatError, match="head.weight"):
            ctl.load_params(tmp_path / "w.json")

    def test_document_is_self_describing(self):
        doc = ctl.params_to_document(ctl.ControllerParams.initialize(channels=2, input_size=8))
        assert doc["version"] == "1"
        assert doc["architecture"] == {"channels": 2, "input_size": 8, "kernel": 3, "gate_order": "ifog"}
        assert set(doc["tensors"]) == set(ctl.TENSOR_NAMES)
