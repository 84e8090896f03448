import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import signal

from eegconn.data import Band, get_band
from eegconn.features import (
    DegenerateSignalError, FeatureTable, analytic_signal, coherence_band, coherence_spectrum,
    connectivity_matrix, cross_spectrum, differential_entropy, feature_dim, feature_names,
    matrix_from_upper, pearson, plv, vectorize_upper, welch_params, window_features,
)

FS = 200.0
GAMMA = get_band("gamma")
finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def _pair(seed, n=400):
    rng = np.random.default_rng(seed)
    return rng.standard_normal(n), rng.standard_normal(n)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (2, 30), elements=finite))
def test_pearson_matches_corrcoef(xy):
    x, y = xy
    assume(np.std(x) > 1e-6 and np.std(y) > 1e-6)
    r = pearson(x, y)
    assert -1.0 <= r <= 1.0
    assert r == pytest.approx(np.corrcoef(x, y)[0, 1], abs=1e-9)
    assert pearson(y, x) == pytest.approx(r, abs=1e-15)
    assert pearson(3.0 * x + 7.0, y) == pytest.approx(r, abs=1e-9)


def test_pearson_degenerate():
    with pytest.raises(DegenerateSignalError, match="zero variance"):
        pearson(np.ones(10), np.arange(10.0))


def test_welch_segmentation():
    assert welch_params(400) == (88, 44)
    seg, hop = welch_params(400)
    assert 1 + (400 - seg) // hop == 8


def test_cross_spectrum_matches_scipy():
    x, y = _pair(0)
    f, s = cross_spectrum(x, y, FS)
    f_ref, s_ref = signal.csd(x, y, fs=FS, window="hann", nperseg=88, noverlap=44, detrend=False)
    np.testing.assert_allclose(f, f_ref, rtol=0, atol=1e-12)
    np.testing.assert_allclose(s, s_ref, rtol=1e-10, atol=1e-14)


def test_coherence_matches_scipy():
    x, y = _pair(1)
    y = 0.5 * x + y
    _, coh, _ = coherence_spectrum(x, y, FS)
    _, msc = signal.coherence(x, y, fs=FS, window="hann", nperseg=88, noverlap=44, detrend=False)
    np.testing.assert_allclose(coh ** 2, msc, rtol=1e-10, atol=1e-14)
    f, _ = cross_spectrum(x, y, FS)
    sel = (f >= GAMMA.lo_hz) & (f <= GAMMA.hi_hz)
    assert coherence_band(x, y, FS, GAMMA) == pytest.approx(np.mean(np.sqrt(msc[sel])), rel=1e-12)


def test_self_coherence_is_one():
    x, _ = _pair(2)
    _, coh, _ = coherence_spectrum(x, x, FS)
    np.testing.assert_allclose(coh, 1.0, atol=1e-12)


def test_coherence_band_without_grid_bins():
    x, y = _pair(3)
    with pytest.raises(ValueError, match="no grid frequency"):
        coherence_band(x, y, FS, Band("thin", 31.0, 31.5))


@pytest.mark.parametrize("n", [64, 65, 400])
def test_analytic_signal_matches_hilbert(n):
    x = np.random.default_rng(n).standard_normal(n)
    np.testing.assert_allclose(analytic_signal(x), signal.hilbert(x), atol=1e-12)


def test_plv_locked_and_degenerate():
    t = np.arange(400) / FS
    x1 = np.cos(2 * np.pi * 40 * t)
    x2 = np.cos(2 * np.pi * 40 * t + 1.1)
    assert plv(x1, x2) >= 0.999
    assert plv(x1, x1) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(DegenerateSignalError):
        plv(x1, np.zeros_like(x1))


def test_differential_entropy_formula():
    rng = np.random.default_rng(4)
    x = 2.5 * rng.standard_normal(200_000)
    assert differential_entropy(x) == pytest.approx(0.5 * np.log(2 * np.pi * np.e * 2.5 ** 2), abs=5e-3)
    assert differential_entropy(x) == pytest.approx(0.5 * np.log(2 * np.pi * np.e * np.var(x)), rel=1e-14)
    with pytest.raises(DegenerateSignalError):
        differential_entropy(np.full(10, 3.0))


def _brute(windows, measure):
    n_win, n_ch, _ = windows.shape
    out = []
    for w in windows:
        if measure == "de":
            out.append([differential_entropy(ch) for ch in w])
            continue
        row = []
        for i in range(n_ch):
            for j in range(i + 1, n_ch):
                if measure == "pearson":
                    row.append(pearson(w[i], w[j]))
                elif measure == "coherence":
                    row.append(coherence_band(w[i], w[j], FS, GAMMA))
                else:
                    row.append(plv(w[i], w[j]))
        out.append(row)
    return np.array(out)


@pytest.mark.parametrize("measure", ["de", "pearson", "coherence", "plv"])
def test_batched_matches_scalar(measure):
    windows = np.random.default_rng(5).standard_normal((3, 5, 400))
    got = window_features(windows, measure, FS, GAMMA)
    np.testing.assert_allclose(got, _brute(windows, measure), rtol=1e-9, atol=1e-12)


def test_batched_degenerate_names_window_and_channel():
    windows = np.random.default_rng(6).standard_normal((2, 3, 400))
    windows[1, 2] = 0.0
    for measure in ("pearson", "coherence", "plv", "de"):
        with pytest.raises(DegenerateSignalError, match="window 1, channel 2"):
            window_features(windows, measure, FS, GAMMA)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 9), st.integers(0, 10_000), st.sampled_from(["pearson", "coherence", "plv"]))
def test_connectivity_matrix_properties(n_ch, seed, measure):
    w = np.random.default_rng(seed).standard_normal((n_ch, 400))
    m = connectivity_matrix(w, measure, GAMMA, FS)
    v = m.values
    assert np.array_equal(v, v.T)
    np.testing.assert_array_equal(np.diag(v), 1.0)
    lo = -1.0 if measure == "pearson" else 0.0
    assert np.all(v >= lo) and np.all(v <= 1.0)
    vec = vectorize_upper(m)
    assert vec.size == n_ch * (n_ch - 1) // 2
    np.testing.assert_array_equal(matrix_from_upper(vec, n_ch), v)


def test_upper_ordering_and_names():
    m = np.arange(16.0).reshape(4, 4)
    m = m + m.T
    np.testing.assert_array_equal(vectorize_upper(m), [m[0, 1], m[0, 2], m[0, 3], m[1, 2], m[1, 3], m[2, 3]])
    assert feature_names(("a", "b", "c"), "plv") == ("plv_a-b", "plv_a-c", "plv_b-c")
    assert feature_names(("a", "b"), "de") == ("de_a", "de_b")
    assert feature_dim(62, "coherence") == 1891 and feature_dim(62, "de") == 62


def test_feature_table_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(7)
    t = FeatureTable("plv", "gamma", ("plv_a-b", "plv_a-c"), np.array(["007", "007"], dtype=object),
                     [1, 1], [2, 2], [0, 1], [2, 2], rng.standard_normal((2, 2)))
    back = FeatureTable.read_csv(t.to_csv(tmp_path / "gamma_plv.csv"))
    assert back.measure == "plv" and back.band == "gamma"
    assert back.subject.tolist() == ["007", "007"]
    assert back.fingerprint() == t.fingerprint()
    changed = t.with_values(t.values + np.array([[0, 1e-15], [0, 0]]))
    assert changed.fingerprint() != t.fingerprint()


def test_feature_table_validation():
    with pytest.raises(ValueError):
        FeatureTable("de", "gamma", ("a",), ["s"], [1], [1], [0], [0], np.zeros((1, 2)))
    with pytest.raises(ValueError):
        FeatureTable.concat([])
