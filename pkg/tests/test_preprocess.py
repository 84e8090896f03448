import numpy as np
import pytest
from scipy import signal

from eegconn.data import Recording, get_band, get_bands
from eegconn.preprocess import FilterError, _check_sos, bandpass, bandpass_array, epoch, preprocess_trial, resample


def _rec(x, fs):
    return Recording("s", 1, 1, 0, fs, tuple(f"c{i}" for i in range(x.shape[0])), x)


def _sine(freq, fs, seconds, n_ch=2):
    t = np.arange(int(seconds * fs)) / fs
    return np.vstack([np.sin(2 * np.pi * freq * t + k) for k in range(n_ch)])


def test_resample_keeps_in_band_sine():
    rec = resample(_rec(_sine(10.0, 1000.0, 8.0), 1000.0), 200.0)
    assert rec.fs_hz == 200.0 and rec.n_samples == 1600
    core = rec.samples[:, 200:-200]
    ref = _sine(10.0, 200.0, 8.0)[:, 200:-200]
    assert np.max(np.abs(core - ref)) < 1e-2


def test_resample_rational_and_rejections():
    rec = resample(_rec(_sine(5.0, 500.0, 4.0), 500.0), 200.0)  # p/q = 2/5
    assert rec.n_samples == 800
    with pytest.raises(ValueError, match="upsampling"):
        resample(_rec(_sine(5.0, 100.0, 4.0), 100.0), 200.0)
    same = _rec(_sine(5.0, 200.0, 4.0), 200.0)
    assert resample(same, 200.0) is same


def test_bandpass_attenuates_and_is_zero_phase():
    fs = 200.0
    x_in = _sine(40.0, fs, 10.0, 1)[0]
    x_out = _sine(5.0, fs, 10.0, 1)[0]
    y_in = bandpass_array(x_in, fs, 31.0, 50.0)
    y_out = bandpass_array(x_out, fs, 31.0, 50.0)
    core = slice(400, -400)
    assert np.max(np.abs(y_out[core])) < 1e-2
    # zero phase: cross-correlation with the input peaks at lag 0
    xc = signal.correlate(y_in[core], x_in[core], mode="full")
    assert np.argmax(xc) == y_in[core].size - 1
    assert np.max(np.abs(y_in[core] - x_in[core])) < 0.05


def test_filter_check_rejects_bad_designs():
    # second-order sections are well conditioned even for very narrow bands
    bandpass_array(np.ones(1000), 200.0, 30.0, 30.001)
    lowpass = signal.butter(4, 10.0, output="sos", fs=200.0)
    with pytest.raises(FilterError, match="passband gain"):
        _check_sos(lowpass, 200.0, 40.0, "probe")
    unstable = lowpass.copy()
    unstable[0, 3:] = [1.0, -2.5, 1.5]
    with pytest.raises(FilterError, match="unstable"):
        _check_sos(unstable, 200.0, 1.0, "probe")
    with pytest.raises(ValueError):
        bandpass(_rec(_sine(5.0, 200.0, 4.0), 200.0), 10.0, 120.0)


def test_epoch_layout_and_tail_drop():
    fs = 200.0
    x = np.random.default_rng(1).standard_normal((3, int(241 * fs)))
    ep = epoch(_rec(x, fs), 2.0, get_band("gamma"))
    assert ep.windows.shape == (120, 3, 400)
    np.testing.assert_array_equal(ep.windows[7], x[:, 7 * 400:8 * 400])
    np.testing.assert_array_equal(ep.window_indices, np.arange(120))


def test_preprocess_trial_all_bands():
    fs = 1000.0
    x = np.random.default_rng(2).standard_normal((2, int(6 * fs)))
    out = preprocess_trial(_rec(x, fs), list(get_bands().values()))
    assert set(out) == set(get_bands())
    for ep in out.values():
        assert ep.fs_hz == 200.0 and ep.windows.shape == (3, 2, 400)


def test_low_rate_warns_and_clips_bands():
    x = np.random.default_rng(3).standard_normal((2, 800))
    with pytest.warns(UserWarning, match="not resampled"):
        out = preprocess_trial(_rec(x, 100.0), [get_band("delta")])
    assert out["delta"].windows.shape == (4, 2, 200)
    with pytest.raises(ValueError, match="Nyquist"):
        preprocess_trial(_rec(x[:, :640], 80.0), [get_band("gamma")])
