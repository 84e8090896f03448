"""Resampling, zero-phase Butterworth filtering and fixed-length epoching."""

import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import signal

from .data import Band, EmotionLabel

FILTER_ORDER = 4
BROADBAND = (0.3, 50.0)
TARGET_FS = 200.0
WINDOW_S = 2.0


class FilterError(ValueError):
    """A filter could not be designed to spec for the requested band."""


@dataclass(frozen=True)
class BandedEpochs:
    band: Band
    windows: np.ndarray = field(repr=False)  # [n_windows, n_channels, window_len]
    window_len_s: float
    fs_hz: float
    key: tuple
    label: EmotionLabel
    first_window: int = 0  # index of windows[0] in the full trial

    @property
    def window_len(self):
        return self.windows.shape[-1]

    @property
    def n_windows(self):
        return self.windows.shape[0]

    @property
    def window_indices(self):
        return np.arange(self.first_window, self.first_window + self.n_windows)


def _rational_ratio(target_fs, fs, max_den=1000, rtol=1e-9):
    ratio = Fraction(target_fs / fs).limit_denominator(max_den)
    if abs(float(ratio) - target_fs / fs) > rtol * (target_fs / fs):
        raise ValueError(f"resampling ratio {target_fs}/{fs} is not a small rational")
    return ratio.numerator, ratio.denominator


def _check_sos(sos, fs, probe_hz, what):
    poles = np.concatenate([np.roots(sec[3:]) for sec in sos])
    if np.any(np.abs(poles) >= 1.0) or not np.all(np.isfinite(sos)):
        raise FilterError(f"{what}: unstable filter coefficients")
    _, h = signal.sosfreqz(sos, worN=[probe_hz], fs=fs)
    gain_db = 20 * np.log10(np.abs(h[0]) ** 2)  # forward-backward squares the response
    if abs(gain_db) > 1.0:
        raise FilterError(f"{what}: passband gain {gain_db:.2f} dB at {probe_hz:.3g} Hz; band too narrow for order")


def resample(rec, target_fs):
    """Downsample ``rec`` to ``target_fs`` by a rational factor p/q.

    The signal is zero-stuffed by p, low-passed at 0.45 * target_fs with the
    order-4 Butterworth run forward-backward, and decimated by q.
    """
    fs = rec.fs_hz
    if target_fs <= 0:
        raise ValueError("target_fs must be positive")
    if target_fs > fs:
        raise ValueError(f"upsampling ({fs} -> {target_fs} Hz) is not supported")
    if target_fs == fs:
        return rec
    p, q = _rational_ratio(target_fs, fs)
    x = np.asarray(rec.samples)
    n = x.shape[1]
    fs_up = fs * p
    if p > 1:
        up = np.zeros((x.shape[0], n * p))
        up[:, ::p] = x * p
    else:
        up = x
    cutoff = 0.45 * target_fs
    sos = signal.butter(FILTER_ORDER, cutoff, btype="lowpass", output="sos", fs=fs_up)
    _check_sos(sos, fs_up, 0.1 * cutoff, "anti-alias low-pass")
    smooth = signal.sosfiltfilt(sos, up, axis=-1)
    n_out = (n * p) // q
    out = smooth[:, ::q][:, :n_out]
    return rec.with_samples(out, fs_hz=float(target_fs))


def bandpass(rec, lo_hz, hi_hz, order=FILTER_ORDER):
    """Zero-phase Butterworth band-pass (``order`` passed to the prototype)."""
    fs = rec.fs_hz
    if not 0 < lo_hz < hi_hz < fs / 2:
        raise ValueError(f"need 0 < lo < hi < fs/2, got {lo_hz}, {hi_hz} at fs={fs}")
    return rec.with_samples(bandpass_array(rec.samples, fs, lo_hz, hi_hz, order))


def bandpass_array(x, fs, lo_hz, hi_hz, order=FILTER_ORDER):
    sos = signal.butter(order, [lo_hz, hi_hz], btype="bandpass", output="sos", fs=fs)
    _check_sos(sos, fs, np.sqrt(lo_hz * hi_hz), f"band-pass {lo_hz}-{hi_hz} Hz")
    return signal.sosfiltfilt(sos, np.asarray(x, dtype=np.float64), axis=-1)


def epoch(rec, window_len_s, band):
    """Cut ``rec`` into contiguous non-overlapping windows; the tail is dropped."""
    win = int(round(window_len_s * rec.fs_hz))
    if win < 2:
        raise ValueError(f"window of {window_len_s} s at {rec.fs_hz} Hz has fewer than 2 samples")
    n = rec.n_samples
    n_windows = n // win
    if n_windows == 0:
        raise ValueError(f"trial {rec.key} ({n} samples) shorter than one window ({win})")
    x = np.asarray(rec.samples)[:, : n_windows * win]
    windows = x.reshape(x.shape[0], n_windows, win).transpose(1, 0, 2).copy()
    windows.setflags(write=False)
    return BandedEpochs(band, windows, float(window_len_s), rec.fs_hz, rec.key, rec.label)


def preprocess_trial(rec, bands, target_fs=TARGET_FS, broadband=BROADBAND, window_len_s=WINDOW_S):
    """Full chain for one trial: resample, broadband filter, per-band filter, epoch.

    Returns ``{band_name: BandedEpochs}``.
    """
    if rec.fs_hz > target_fs:
        rec = resample(rec, target_fs)
    elif rec.fs_hz < target_fs:
        warnings.warn(f"trial {rec.key}: fs {rec.fs_hz} Hz below target {target_fs} Hz; not resampled")
    hi = min(broadband[1], 0.999 * rec.fs_hz / 2)
    rec = bandpass(rec, broadband[0], hi)
    out = {}
    for band in bands:
        band.check(rec.fs_hz)
        b_hi = min(band.hi_hz, 0.999 * rec.fs_hz / 2)
        out[band.name] = epoch(bandpass(rec, band.lo_hz, b_hi), window_len_s, band)
    return out
