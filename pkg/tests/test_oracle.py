import numpy as np
import pytest

from seqgamma.frames import Sequence
from seqgamma.oracle import OracleConfig, default_grid, grid_losses, oracle_enhance, oracle_gamma, pick_gamma
from seqgamma.ssim import SsimConfig, masked_ssim_loss
from seqgamma.synth import SynthConfig, adjacent_inconsistency, generate
from seqgamma.trainer import reference_set

CFG = OracleConfig()


@pytest.fixture
def base(rng):
    return rng.uniform(0.05, 0.65, (32, 32))


def test_default_grid():
    g = default_grid()
    assert g.size == 241
    assert g[0] == pytest.approx(0.1) and g[-1] == pytest.approx(10.0)
    assert 1.0 in g and np.all(np.diff(g) > 0)
    steps = np.diff(np.log(g))
    np.testing.assert_allclose(steps, np.log(100) / 240)
    assert CFG.log_step == pytest.approx(np.log(2) / 36, rel=5e-3)


def test_grid_must_contain_one():
    with pytest.raises(ValueError):
        OracleConfig(grid=np.array([0.5, 2.0]))


def test_grid_losses_match_direct_loss(base):
    raw = base**1.4
    refs = [base, base**1.1, base, base**0.9]
    keep = raw <= 0.7
    losses = grid_losses(refs, raw, keep, CFG)
    for k in (0, 57, 120, 200):
        g = CFG.grid[k]
        direct = np.mean([masked_ssim_loss(r, raw**g, keep) for r in refs])
        assert losses[k] == pytest.approx(direct, abs=1e-12)


def test_identity_frame(base):
    seq = Sequence.from_arrays([base] * 4)
    g, loss = oracle_gamma(seq, 2, list(seq.to_array()[:2]), CFG)
    assert g == 1.0 and loss == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("power,expected", [(2.0, 0.5), (1 / 3, 3.0)])
def test_recovers_known_power(base, power, expected):
    seq = Sequence.from_arrays([base, base, base**power])
    g, loss = oracle_gamma(seq, 2, [base, base], CFG)
    assert abs(np.log(g) - np.log(expected)) <= CFG.log_step
    assert loss < 0.01


def test_grid_optimality_by_rescan(rng):
    degraded = generate(SynthConfig(seed=8))[0]
    enhanced, gammas, losses = oracle_enhance(degraded)
    prior = list(enhanced.to_array())
    for t in range(2, len(degraded)):
        raw = degraded[t].data
        refs = [prior[k] if kind == "adjusted" else degraded[k].data for kind, k in reference_set(t)]
        keep = raw <= 0.7
        for g in CFG.grid:
            rescan = np.mean([masked_ssim_loss(r, raw**g, keep) for r in refs])
            assert rescan >= losses[t] - 1e-12


def test_tie_break_prefers_identity_then_smaller():
    grid = np.array([0.5, 0.8, 1.0, 1.25, 2.0])
    assert pick_gamma(grid, np.array([0.1, 0.0, 0.0, 0.0, 0.1]))[0] == 1.0
    assert pick_gamma(grid, np.array([0.1, 0.0, 0.2, 0.0, 0.1]))[0] == 0.8
    assert pick_gamma(grid, np.array([0.0, 0.1, 0.2, 0.1, 0.0]))[0] == 0.5


def test_specular_frame_skipped(base):
    seq = Sequence.from_arrays([base, base, np.full(base.shape, 0.95)])
    g, loss = oracle_gamma(seq, 2, [base, base], CFG)
    assert g == 1.0 and np.isnan(loss)


def test_constant_lighting_trace(base):
    _, gammas, _ = oracle_enhance(Sequence.from_arrays([base] * 8))
    assert gammas == [1.0] * 8


def test_seeds_pass_through():
    degraded = generate(SynthConfig(seed=2))[0]
    enhanced, gammas, losses = oracle_enhance(degraded)
    assert gammas[:2] == [1.0, 1.0] and np.isnan(losses[:2]).all()
    np.testing.assert_array_equal(enhanced.to_array()[:2], degraded.to_array()[:2])


def test_too_short():
    with pytest.raises(ValueError):
        oracle_enhance(Sequence.from_arrays(np.zeros((2, 16, 16))))


@pytest.mark.parametrize("seed", range(5))
def test_walk_recovery_and_consistency(seed):
    degraded, clean, truth = generate(SynthConfig(seed=seed))
    enhanced, gammas, _ = oracle_enhance(degraded)
    assert np.max(np.abs(np.log(gammas) + np.log(truth.gamma))) <= CFG.log_step
    assert adjacent_inconsistency(enhanced) <= adjacent_inconsistency(degraded)


def test_rgb_frames(rng):
    base = rng.uniform(0.05, 0.6, (24, 24, 3))
    seq = Sequence.from_arrays([base, base, base**1.5])
    g, _ = oracle_gamma(seq, 2, [base, base], OracleConfig(ssim=SsimConfig()))
    assert abs(np.log(g) + np.log(1.5)) <= CFG.log_step
