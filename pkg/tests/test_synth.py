import filecmp

import numpy as np
import pytest

from eegconn.data import get_band, load_manifest
from eegconn.features import window_features
from eegconn.preprocess import bandpass_array
from eegconn.synth import Ramp, SynthConfig, class_templates, generate, planted_pairs, simulate_trial, trial_rng

GAMMA = get_band("gamma")


def test_ramp_profile():
    r = Ramp()
    np.testing.assert_allclose(r([0, 59, 60, 100, 140, 200]), [0.1, 0.1, 0.1, 0.5, 0.9, 0.9])
    t = np.linspace(0, 240, 500)
    assert np.all(np.diff(r(t)) >= 0)
    c = Ramp.constant(0.4)
    np.testing.assert_array_equal(c(t), 0.4)
    for bad in (dict(lo=0.5, hi=0.2), dict(hi=1.5), dict(t0_s=100, t1_s=50)):
        with pytest.raises(ValueError):
            Ramp(**bad)


def test_templates_distinct():
    cfg = SynthConfig()
    t = class_templates(cfg)
    assert t.shape == (3, 4, 2)
    pairs = [tuple(p) for p in t.reshape(-1, 2)]
    assert len(set(pairs)) == 12
    for cls in range(3):
        chans = t[cls].ravel()
        assert len(set(chans.tolist())) == chans.size
        assert all(a < b for a, b in t[cls])
    assert planted_pairs(cfg, 1) == [tuple(p) for p in t[1].tolist()]


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(n_clips=2)
    with pytest.raises(ValueError):
        SynthConfig(n_channels=3, pairs_per_class=2)
    with pytest.raises(ValueError, match="plus lingering"):
        SynthConfig(carryover=0.95)
    with pytest.raises(ValueError, match="plus lingering"):
        SynthConfig(carryover=0.9, linger_s=240)
    with pytest.raises(ValueError):
        SynthConfig(coupling_band="gamma", fs_hz=90.0)
    cfg = SynthConfig(ramp={"lo": 0.2, "hi": 0.3, "t0_s": 0, "t1_s": 10}, carryover=0.0)
    assert cfg.ramp == Ramp(0.2, 0.3, 0, 10)


def test_generate_is_reproducible(tmp_path, small_synth_config):
    a = generate(small_synth_config, tmp_path / "a")
    b = generate(small_synth_config, tmp_path / "b")
    files = ["manifest.json"] + [t.file for t in a.trials]
    match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", files, shallow=False)
    assert not mismatch and not errors and len(match) == len(files)
    m = load_manifest(tmp_path / "a")
    assert [int(t.label) for t in m.trials] == [0, 1, 2, 0, 1, 2]
    assert m.channels == small_synth_config.channel_names()
    other = generate(SynthConfig(**{**small_synth_config.to_dict(), "seed": 4}), tmp_path / "c")
    assert (tmp_path / "c" / other.trials[0].file).read_bytes() != (tmp_path / "a" / a.trials[0].file).read_bytes()


def _gamma_windows(x, fs=200.0):
    y = bandpass_array(x, fs, GAMMA.lo_hz, GAMMA.hi_hz)
    n = y.shape[1] // 400
    return y[:, :n * 400].reshape(y.shape[0], n, 400).transpose(1, 0, 2)


def test_planted_pairs_phase_lock():
    cfg = SynthConfig(n_channels=6, pairs_per_class=2, ramp=Ramp.constant(1.0), carryover=0.0, gain_spread=0.0, noise=0.0,
                      trial_len_s=20.0)
    x, kappa = simulate_trial(cfg, 2, trial_rng(cfg, 0, 1, 1))
    np.testing.assert_array_equal(kappa, 1.0)
    plv = window_features(_gamma_windows(x), "plv", 200.0, GAMMA).mean(axis=0)
    iu, ju = np.triu_indices(6, 1)
    idx = {(int(i), int(j)): k for k, (i, j) in enumerate(zip(iu, ju))}
    planted = [idx[p] for p in planted_pairs(cfg, 2)]
    assert np.all(plv[planted] > 0.95)
    assert np.all(np.delete(plv, planted) < 0.6)


@pytest.mark.parametrize("kappa", [0.3, 0.7])
def test_in_band_correlation_equals_kappa(kappa):
    cfg = SynthConfig(n_channels=6, pairs_per_class=2, ramp=Ramp.constant(kappa), carryover=0.0, gain_spread=0.0, noise=0.0,
                      trial_len_s=120.0)
    x, _ = simulate_trial(cfg, 0, trial_rng(cfg, 0, 1, 1))
    r = window_features(_gamma_windows(x), "pearson", 200.0, GAMMA).mean(axis=0)
    iu, ju = np.triu_indices(6, 1)
    for a, b in planted_pairs(cfg, 0):
        k = int(np.flatnonzero((iu == a) & (ju == b))[0])
        assert r[k] == pytest.approx(kappa, abs=0.1)


def test_band_power_does_not_depend_on_kappa():
    stds = []
    for kappa in (0.0, 0.9):
        cfg = SynthConfig(n_channels=6, pairs_per_class=2, ramp=Ramp.constant(kappa), carryover=0.0, noise=0.0,
                          trial_len_s=60.0)
        x, _ = simulate_trial(cfg, 1, trial_rng(cfg, 0, 1, 1))
        stds.append(bandpass_array(x, 200.0, GAMMA.lo_hz, GAMMA.hi_hz).std(axis=1))
    np.testing.assert_allclose(stds[0], stds[1], rtol=0.15)


def test_kappa_follows_ramp_and_gain():
    cfg = SynthConfig(n_channels=6, pairs_per_class=2, trial_len_s=200.0, gain_spread=0.5)
    x, kappa = simulate_trial(cfg, 0, trial_rng(cfg, 0, 1, 2))
    assert x.shape == (6, 40_000)
    assert np.all(np.diff(kappa) >= 0)
    gain = kappa[-1] / 0.9
    assert 0.5 <= gain <= 1.0
    np.testing.assert_allclose(kappa, gain * cfg.ramp(np.arange(40_000) / 200.0))


def test_templates_fall_back_to_overlap_when_crowded():
    cfg = SynthConfig(n_channels=8, pairs_per_class=4)
    t = class_templates(cfg)
    pairs = [tuple(p) for p in t.reshape(-1, 2)]
    assert len(set(pairs)) == 12 and all(a < b for a, b in pairs)


def test_lingering_template_fades_out():
    cfg = SynthConfig(n_channels=8, pairs_per_class=2, ramp=Ramp.constant(0.0), carryover=0.8, linger_s=50.0,
                      gain_spread=0.0, noise=0.0, trial_len_s=100.0)
    x, kappa = simulate_trial(cfg, 0, trial_rng(cfg, 0, 1, 1))
    np.testing.assert_array_equal(kappa, 0.0)
    r = window_features(_gamma_windows(x), "pearson", 200.0, GAMMA)
    iu, ju = np.triu_indices(8, 1)
    cols = {c: [int(np.flatnonzero((iu == a) & (ju == b))[0]) for a, b in planted_pairs(cfg, c)] for c in range(3)}
    early = {c: r[:10, k].mean() for c, k in cols.items()}  # first 20 s, lingering strength 0.8 -> 0.48
    # exactly one class template lingers, independently of the label
    assert sorted(v > 0.4 for v in early.values()) == [False, False, True]
    late = r[30:, np.concatenate(list(cols.values()))]
    assert np.abs(late.mean()) < 0.1
