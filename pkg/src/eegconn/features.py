"""Per-window features: differential entropy and three undirected connectivity
measures (Pearson correlation, band-averaged coherence, phase-locking value).

Scalar functions (:func:`pearson`, :func:`coherence_band`, :func:`plv`, ...)
operate on one pair of 1-D signals and are the reference definitions. The
batched path (:func:`window_features`) evaluates every channel pair of every
window through :mod:`eegconn.kernels` and must agree with the scalar path.

Connectivity vectors use the row-major strict upper triangle of the channel
matrix: (0,1), (0,2), ..., (0,n-1), (1,2), ... and are named
``<measure>_<chanA>-<chanB>``; DE columns are ``de_<chan>``.
"""

from dataclasses import dataclass, field
from pathlib import Path
import hashlib

import numpy as np
import pandas as pd

from . import kernels
from .data import Band

MEASURES = ("de", "pearson", "coherence", "plv")
CONNECTIVITY = ("pearson", "coherence", "plv")

WELCH_SEGMENTS = 8
WELCH_OVERLAP = 0.5
PLV_EDGE_TRIM = 0.05
_CLAMP_SLACK = 1e-9


class DegenerateSignalError(ValueError):
    """A measure is undefined for the given input (flat or all-zero signal)."""


def _clamp(value, lo, hi):
    if value < lo - _CLAMP_SLACK or value > hi + _CLAMP_SLACK:
        raise ArithmeticError(f"value {value!r} outside [{lo}, {hi}] beyond rounding slack")
    return min(max(value, lo), hi)


# ---------------------------------------------------------------------------
# Scalar reference definitions
# ---------------------------------------------------------------------------

def pearson(x, y):
    """Pearson correlation with population (1/N) moments."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError("pearson needs two 1-D vectors of equal length >= 2")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = np.sqrt(np.mean(dx * dx))
    sy = np.sqrt(np.mean(dy * dy))
    if sx == 0 or sy == 0:
        raise DegenerateSignalError("degenerate signal: zero variance")
    return _clamp(float(np.mean(dx * dy) / (sx * sy)), -1.0, 1.0)


def welch_params(n, n_segments=WELCH_SEGMENTS, overlap=WELCH_OVERLAP):
    """Segment length and hop giving ``n_segments`` Hann segments over ``n`` samples.

    >>> welch_params(400)
    (88, 44)
    """
    if not 0 <= overlap < 1:
        raise ValueError("overlap must be in [0, 1)")
    seg_len = int(np.floor(n / (1 + (n_segments - 1) * (1 - overlap))))
    hop = seg_len - int(round(overlap * seg_len))
    return seg_len, hop


def _hann(seg_len):
    # periodic Hann, same as scipy.signal.get_window('hann', n)
    return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(seg_len) / seg_len)


def _segments(x, seg_len, hop):
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    if seg_len > n:
        raise ValueError(f"segment length {seg_len} exceeds signal length {n}")
    if hop < 1:
        raise ValueError("segment hop must be >= 1 sample")
    n_seg = 1 + (n - seg_len) // hop
    if n_seg < 2:
        raise ValueError(f"only {n_seg} Welch segment(s); coherence would be identically 1")
    idx = hop * np.arange(n_seg)[:, None] + np.arange(seg_len)[None, :]
    return np.fft.rfft(x[..., idx] * _hann(seg_len), axis=-1)


def cross_spectrum(x, y, fs, seg_len=None, overlap=WELCH_OVERLAP):
    """Welch cross-spectral density ``S_xy(f)`` (one-sided, density scaling).

    Convention ``S_xy = E[conj(X) Y]``. Returns ``(freqs, S_xy)`` on the grid
    ``k * fs / seg_len``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("cross_spectrum needs two 1-D vectors of equal length")
    if seg_len is None:
        seg_len, hop = welch_params(x.size, overlap=overlap)
    else:
        hop = seg_len - int(round(overlap * seg_len))
    X = _segments(x, seg_len, hop)
    Y = _segments(y, seg_len, hop)
    w = _hann(seg_len)
    s = np.mean(np.conj(X) * Y, axis=0) / (fs * np.sum(w * w))
    s[1:] *= 2
    if seg_len % 2 == 0:
        s[-1] /= 2
    freqs = np.arange(s.size) * fs / seg_len
    return freqs, s


def band_bins(freqs, band):
    sel = np.flatnonzero((freqs >= band.lo_hz) & (freqs <= band.hi_hz))
    if sel.size == 0:
        raise ValueError(f"band {band.name} [{band.lo_hz}, {band.hi_hz}] Hz contains no grid frequency")
    return sel


def coherence_spectrum(x, y, fs, seg_len=None, overlap=WELCH_OVERLAP):
    """Magnitude coherence ``|S_xy| / sqrt(S_xx S_yy)``; returns ``(freqs, coh, denominator)``."""
    freqs, sxy = cross_spectrum(x, y, fs, seg_len, overlap)
    _, sxx = cross_spectrum(x, x, fs, seg_len, overlap)
    _, syy = cross_spectrum(y, y, fs, seg_len, overlap)
    den = np.sqrt(sxx.real * syy.real)
    with np.errstate(divide="ignore", invalid="ignore"):
        coh = np.abs(sxy) / den
    return freqs, coh, den


def coherence_band(x, y, fs, band, seg_len=None, overlap=WELCH_OVERLAP):
    """Arithmetic mean of magnitude coherence over the grid bins inside ``band``."""
    freqs, coh, den = coherence_spectrum(x, y, fs, seg_len, overlap)
    sel = band_bins(freqs, band)
    if np.any(den[sel] == 0):
        raise DegenerateSignalError(f"zero auto-spectrum inside band {band.name}")
    return _clamp(float(np.mean(coh[sel])), 0.0, 1.0)


def analytic_signal(x):
    """``x + j H(x)`` by the FFT method (negative bins zeroed, positive doubled).

    Works along the last axis.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    if n < 4:
        raise ValueError("analytic_signal needs at least 4 samples")
    spec = np.fft.fft(x, axis=-1)
    gain = np.zeros(n)
    gain[0] = 1.0
    if n % 2 == 0:
        gain[n // 2] = 1.0
        gain[1 : n // 2] = 2.0
    else:
        gain[1 : (n + 1) // 2] = 2.0
    return np.fft.ifft(spec * gain, axis=-1)


def _trim(n, edge_trim):
    if not 0 <= edge_trim < 0.5:
        raise ValueError("edge_trim must be in [0, 0.5)")
    cut = int(np.floor(edge_trim * n))
    return slice(cut, n - cut)


def _unit_phasors(z):
    mag = np.abs(z)
    out = np.zeros_like(z)
    nz = mag > 0
    out[nz] = z[nz] / mag[nz]
    return out


def plv(x1, x2, edge_trim=PLV_EDGE_TRIM):
    """Phase-locking value of two band-limited signals.

    ``edge_trim`` is the fraction of samples dropped at *each* end before
    averaging, after the analytic signals are computed on the full input.
    """
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x1.shape != x2.shape or x1.ndim != 1:
        raise ValueError("plv needs two 1-D vectors of equal length")
    if not np.any(x1) or not np.any(x2):
        raise DegenerateSignalError("all-zero input: phase undefined")
    sl = _trim(x1.size, edge_trim)
    u1 = _unit_phasors(analytic_signal(x1))[sl]
    u2 = _unit_phasors(analytic_signal(x2))[sl]
    lock = np.abs(np.mean(u1 * np.conj(u2)))
    return _clamp(float(lock), 0.0, 1.0)


def differential_entropy(x):
    """Gaussian differential entropy ``0.5 * ln(2 pi e var)``, population variance."""
    x = np.asarray(x, dtype=np.float64)
    if x.size < 2:
        raise ValueError("differential_entropy needs at least 2 samples")
    var = np.var(x)
    if var == 0:
        raise DegenerateSignalError("degenerate signal: zero variance")
    return float(0.5 * np.log(2 * np.pi * np.e * var))


# ---------------------------------------------------------------------------
# Matrices and vectorisation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConnectivityMatrix:
    measure: str
    values: np.ndarray = field(repr=False)
    band: Band

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("connectivity matrix must be square")
        if not np.array_equal(v, v.T):
            raise ValueError("connectivity matrix must be symmetric")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


def vectorize_upper(m):
    """Strict upper triangle, row-major: length n(n-1)/2."""
    values = m.values if isinstance(m, ConnectivityMatrix) else np.asarray(m)
    iu, ju = kernels.upper_pairs(values.shape[0])
    return values[iu, ju].copy()


def matrix_from_upper(vec, n):
    m = np.eye(n)
    iu, ju = kernels.upper_pairs(n)
    m[iu, ju] = vec
    m[ju, iu] = vec
    return m


def _check_nonflat(windows):
    sd = windows.std(axis=-1)
    bad = np.argwhere(sd == 0)
    if bad.size:
        w, c = bad[0]
        raise DegenerateSignalError(f"degenerate signal: zero variance in window {w}, channel {c}")


def _band_spectra(windows, fs, band):
    n = windows.shape[-1]
    seg_len, hop = welch_params(n)
    spec = _segments(windows, seg_len, hop)
    freqs = np.arange(spec.shape[-1]) * fs / seg_len
    sel = band_bins(freqs, band)
    spec = np.ascontiguousarray(spec[..., sel])
    auto = np.sum(np.abs(spec) ** 2, axis=-2)
    bad = np.argwhere(auto == 0)
    if bad.size:
        w, c, _ = bad[0]
        raise DegenerateSignalError(f"zero auto-spectrum in band {band.name}: window {w}, channel {c}")
    return spec


def _phasors(windows):
    zero = np.argwhere(~np.any(windows, axis=-1))
    if zero.size:
        w, c = zero[0]
        raise DegenerateSignalError(f"all-zero input: phase undefined in window {w}, channel {c}")
    sl = _trim(windows.shape[-1], PLV_EDGE_TRIM)
    return np.ascontiguousarray(_unit_phasors(analytic_signal(windows))[..., sl])


def window_features(windows, measure, fs, band):
    """Feature matrix ``[n_windows, n_features]`` for a stack of windows.

    ``windows`` is ``[n_windows, n_channels, window_len]`` (already band-filtered).
    """
    windows = np.ascontiguousarray(windows, dtype=np.float64)
    if windows.ndim != 3:
        raise ValueError(f"windows must be 3-D, got shape {windows.shape}")
    if measure == "de":
        _check_nonflat(windows)
        return 0.5 * np.log(2 * np.pi * np.e * windows.var(axis=-1))
    if measure == "pearson":
        _check_nonflat(windows)
        return kernels.pearson_upper(windows)
    if measure == "coherence":
        return kernels.coherence_upper(_band_spectra(windows, fs, band))
    if measure == "plv":
        return kernels.plv_upper(_phasors(windows))
    raise ValueError(f"unknown measure {measure!r}; choose from {MEASURES}")


def connectivity_matrix(window, measure, band, fs):
    """Symmetric channel-by-channel matrix for one ``[n_channels, window_len]`` window."""
    if measure not in CONNECTIVITY:
        raise ValueError(f"unknown connectivity measure {measure!r}")
    window = np.asarray(window, dtype=np.float64)
    vec = window_features(window[None], measure, fs, band)[0]
    return ConnectivityMatrix(measure, matrix_from_upper(vec, window.shape[0]), band)


def feature_names(channels, measure):
    if measure == "de":
        return tuple(f"de_{c}" for c in channels)
    iu, ju = kernels.upper_pairs(len(channels))
    return tuple(f"{measure}_{channels[i]}-{channels[j]}" for i, j in zip(iu, ju))


def feature_dim(n_channels, measure):
    return n_channels if measure == "de" else n_channels * (n_channels - 1) // 2


# ---------------------------------------------------------------------------
# Feature tables
# ---------------------------------------------------------------------------

KEY_COLUMNS = ("subject", "session", "trial", "window", "label")


@dataclass
class FeatureTable:
    """Per-window feature vectors keyed by (subject, session, trial, window)."""

    measure: str
    band: str
    names: tuple
    subject: np.ndarray
    session: np.ndarray
    trial: np.ndarray
    window: np.ndarray
    label: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.names = tuple(self.names)
        self.subject = np.asarray(self.subject, dtype=object)
        self.session = np.asarray(self.session, dtype=np.int64)
        self.trial = np.asarray(self.trial, dtype=np.int64)
        self.window = np.asarray(self.window, dtype=np.int64)
        self.label = np.asarray(self.label, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        n = self.values.shape[0]
        if self.values.ndim != 2 or self.values.shape[1] != len(self.names):
            raise ValueError(f"values shape {self.values.shape} does not match {len(self.names)} names")
        for col in ("subject", "session", "trial", "window", "label"):
            if getattr(self, col).shape != (n,):
                raise ValueError(f"key column {col} has wrong length")

    def __len__(self):
        return self.values.shape[0]

    @property
    def dim(self):
        return self.values.shape[1]

    def take(self, idx):
        idx = np.asarray(idx)
        return FeatureTable(
            self.measure, self.band, self.names, self.subject[idx], self.session[idx],
            self.trial[idx], self.window[idx], self.label[idx], self.values[idx],
        )

    def with_values(self, values, names=None):
        return FeatureTable(
            self.measure, self.band, self.names if names is None else names, self.subject,
            self.session, self.trial, self.window, self.label, values,
        )

    def subjects(self):
        return sorted(set(self.subject.tolist()))

    def for_subject(self, subject):
        return self.take(np.flatnonzero(self.subject == subject))

    def row_keys(self):
        return list(zip(self.subject.tolist(), self.session.tolist(), self.trial.tolist(), self.window.tolist()))

    def trial_keys(self):
        return list(zip(self.subject.tolist(), self.session.tolist(), self.trial.tolist()))

    def fingerprint(self):
        h = hashlib.sha256()
        h.update(f"{self.measure}|{self.band}|{'|'.join(self.names)}".encode())
        h.update("|".join(map(str, self.subject.tolist())).encode())
        for arr in (self.session, self.trial, self.window, self.label, self.values):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:16]

    def to_frame(self):
        df = pd.DataFrame(self.values, columns=list(self.names))
        keys = pd.DataFrame({
            "subject": self.subject.astype(str), "session": self.session, "trial": self.trial,
            "window": self.window, "label": self.label,
        })
        return pd.concat([keys, df], axis=1)

    def to_csv(self, path):
        path = Path(path)
        self.to_frame().to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
        return path

    @classmethod
    def read_csv(cls, path, measure=None, band=None):
        path = Path(path)
        df = pd.read_csv(path, float_precision="round_trip", dtype={"subject": str})
        names = [c for c in df.columns if c not in KEY_COLUMNS]
        if band is None or measure is None:
            stem_band, _, stem_measure = path.stem.partition("_")
            band = band or stem_band
            measure = measure or stem_measure
        return cls(
            measure, band, tuple(names), df["subject"].to_numpy(dtype=object), df["session"].to_numpy(),
            df["trial"].to_numpy(), df["window"].to_numpy(), df["label"].to_numpy(),
            df[names].to_numpy(dtype=np.float64),
        )

    @classmethod
    def concat(cls, tables):
        tables = list(tables)
        if not tables:
            raise ValueError("nothing to concatenate")
        first = tables[0]
        for t in tables[1:]:
            if t.names != first.names or t.measure != first.measure:
                raise ValueError("cannot concatenate tables with different columns")
        return cls(
            first.measure, first.band, first.names,
            np.concatenate([t.subject for t in tables]),
            np.concatenate([t.session for t in tables]),
            np.concatenate([t.trial for t in tables]),
            np.concatenate([t.window for t in tables]),
            np.concatenate([t.label for t in tables]),
            np.concatenate([t.values for t in tables], axis=0),
        )


def epochs_table(epochs, measure, channels):
    """Feature table for one trial's :class:`BandedEpochs`."""
    values = window_features(epochs.windows, measure, epochs.fs_hz, epochs.band)
    n = values.shape[0]
    subject, session, trial = epochs.key
    return FeatureTable(
        measure, epochs.band.name, feature_names(channels, measure),
        np.full(n, subject, dtype=object), np.full(n, session), np.full(n, trial),
        epochs.window_indices, np.full(n, int(epochs.label)), values,
    )
