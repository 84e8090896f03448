"""End-to-end acceptance checks.

Each test prints one ``criterion N: PASS|FAIL`` line, and the lines are
repeated in the pytest terminal summary.  The ramped-dataset run takes a
few minutes and is marked ``slow``.
"""

import filecmp
import math
import time

import numpy as np
import pytest
from scipy import signal

from eegconn.classify import loo_evaluate, solve_binary, train_linear_svm
from eegconn.cli import main as cli_main
from eegconn.data import get_band, get_bands
from eegconn.features import coherence_band, connectivity_matrix, pearson, plv, window_features
from eegconn.pipeline import extract_features
from eegconn.preprocess import bandpass_array
from eegconn.selection import fisher_scores
from eegconn.synth import Ramp, SynthConfig, generate
from eegconn.temporal import CANONICAL_INTERVALS, WHOLE_TRIAL, TemporalProfile, temporal_scan

from conftest import cvxopt_dual, finite_difference_error, random_problem, record_criterion

FS = 200.0
GAMMA = get_band("gamma")


# ---------------------------------------------------------------------------
# brute-force references
# ---------------------------------------------------------------------------

def brute_pearson(x, y):
    n = len(x)
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = math.fsum((a - mx) ** 2 for a in x)
    syy = math.fsum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def brute_fisher(X, y):
    out = []
    classes = sorted(set(y.tolist()))
    for f in range(X.shape[1]):
        col = X[:, f].tolist()
        grand = math.fsum(col) / len(col)
        num = den = 0.0
        for k in classes:
            vals = [v for v, lab in zip(col, y) if lab == k]
            m = math.fsum(vals) / len(vals)
            num += (m - grand) ** 2
            den += math.fsum((v - m) ** 2 for v in vals) / (len(vals) - 1)
        out.append(num / den)
    return np.array(out)


def in_band(n_bins, band, seg_len=88):
    # exact grid k * fs / seg_len; scipy's rfftfreq can round 50 Hz just above the band edge
    f = np.arange(n_bins) * FS / seg_len
    return (f >= band.lo_hz) & (f <= band.hi_hz)


def brute_matrix(window, measure, band):
    n_ch = window.shape[0]
    out = np.eye(n_ch)
    for i in range(n_ch):
        for j in range(i + 1, n_ch):
            x, y = window[i], window[j]
            if measure == "pearson":
                v = brute_pearson(x.tolist(), y.tolist())
            elif measure == "coherence":
                f, sxy = signal.csd(x, y, fs=FS, window="hann", nperseg=88, noverlap=44, detrend=False)
                _, sxx = signal.welch(x, fs=FS, window="hann", nperseg=88, noverlap=44, detrend=False)
                _, syy = signal.welch(y, fs=FS, window="hann", nperseg=88, noverlap=44, detrend=False)
                sel = in_band(f.size, band)
                v = float(np.mean(np.abs(sxy[sel]) / np.sqrt(sxx[sel] * syy[sel])))
            else:
                cut = int(0.05 * x.size)
                dphi = np.angle(signal.hilbert(x)) - np.angle(signal.hilbert(y))
                v = abs(np.mean(np.exp(1j * dphi[cut:x.size - cut])))
            out[i, j] = out[j, i] = v
    return out


# ---------------------------------------------------------------------------
# 1-5: estimator and solver ground truth
# ---------------------------------------------------------------------------

def test_criterion_1_estimator_oracles():
    rng = np.random.default_rng(1)
    bands = list(get_bands().values())
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(5, 400))
        x = rng.standard_normal(n)
        y = 0.4 * x + rng.standard_normal(n)
        ref = brute_pearson(x.tolist(), y.tolist())
        worst = max(worst, abs(pearson(x, y) - ref) / abs(ref))

        X = rng.standard_normal((int(rng.integers(9, 40)), int(rng.integers(1, 6))))
        lab = np.arange(X.shape[0]) % 3
        X += rng.standard_normal(3)[lab, None]
        ref = brute_fisher(X, lab)
        worst = max(worst, float(np.max(np.abs(fisher_scores(X, lab).scores - ref) / ref)))

        window = rng.standard_normal((int(rng.integers(2, 6)), 400))
        band = bands[int(rng.integers(1, len(bands)))]
        for measure in ("pearson", "coherence", "plv"):
            got = connectivity_matrix(window, measure, band, FS).values
            ref = brute_matrix(window, measure, band)
            worst = max(worst, float(np.max(np.abs(got - ref) / np.maximum(np.abs(ref), 1e-300))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 10.0
    assert record_criterion(1, ok, f"max relative error {worst:.2e}, {elapsed:.1f} s")


def _narrowband(rng, n, lo, hi, pad=400):
    return bandpass_array(rng.standard_normal((2, n + 2 * pad)), FS, lo, hi)[:, pad:-pad]


def test_criterion_2_plv_ground_truth():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    x = _narrowband(rng, 400, GAMMA.lo_hz, GAMMA.hi_hz)[0]
    # constant phase offsets of 0 and a quarter period
    offset = min(plv(x, 0.5 * x), plv(x, np.imag(signal.hilbert(x))))

    # null: resultant length of 320 independent uniform phase differences
    draws = np.abs(np.exp(1j * rng.uniform(-np.pi, np.pi, (20000, 320))).mean(axis=1))
    p99 = float(np.quantile(draws, 0.99))
    # independent gamma-band pairs with 320 effective samples after the edge trim:
    # a band of width B holds B*T independent complex envelope samples
    n = int(round(320 / ((GAMMA.hi_hz - GAMMA.lo_hz) * 0.9) * FS))
    vals = np.array([plv(*_narrowband(rng, n, GAMMA.lo_hz, GAMMA.hi_hz)) for _ in range(100)])
    elapsed = time.perf_counter() - t0
    bias = math.sqrt(math.pi) / (2 * math.sqrt(320))
    ok = (offset >= 0.999 and vals[0] < p99 and np.mean(vals > p99) <= 0.03
          and vals.mean() < 1.2 * bias and elapsed < 30.0)
    assert record_criterion(2, ok, f"offset pair {offset:.5f}; independent pair {vals[0]:.3f} vs null p99 "
                                   f"{p99:.3f} ({np.mean(vals > p99):.0%} of 100 above); {elapsed:.1f} s")


def test_criterion_3_coherence_ground_truth():
    rng = np.random.default_rng(3)
    t = np.arange(400) / FS
    x = rng.standard_normal(400)
    freqs = np.arange(45) * FS / 88
    self_ok = np.allclose(window_features(np.stack([x, x])[None], "coherence", FS, GAMMA), 1.0, atol=1e-12)
    for band in get_bands().values():
        self_ok &= coherence_band(x, x, FS, band) == pytest.approx(1.0, abs=1e-12)

    # a tone on every gamma grid bin, shared by both channels, 20 dB above white noise
    tones = freqs[(freqs >= GAMMA.lo_hz) & (freqs <= GAMMA.hi_hz)]
    coupled = []
    for _ in range(50):
        s = np.sin(2 * np.pi * tones[:, None] * t + rng.uniform(0, 2 * np.pi, (tones.size, 1))).sum(axis=0)
        sd = math.sqrt(s.var() / 100)
        coupled.append(coherence_band(s + sd * rng.standard_normal(400), s + sd * rng.standard_normal(400), FS, GAMMA))
    coupled = np.array(coupled)

    # null envelope from scipy's estimator on 1000 independent white-noise pairs
    null = []
    for _ in range(1000):
        a, b = rng.standard_normal((2, 400))
        f, sxy = signal.csd(a, b, fs=FS, nperseg=88, noverlap=44, detrend=False)
        _, saa = signal.welch(a, fs=FS, nperseg=88, noverlap=44, detrend=False)
        _, sbb = signal.welch(b, fs=FS, nperseg=88, noverlap=44, detrend=False)
        sel = in_band(f.size, GAMMA)
        null.append(np.mean(np.abs(sxy[sel]) / np.sqrt(saa[sel] * sbb[sel])))
    null = np.array(null)
    lo, hi = null.mean() - 3 * null.std(), null.mean() + 3 * null.std()
    probe = window_features(rng.standard_normal((300, 2, 400)), "coherence", FS, GAMMA)[:, 0]
    outside = float(np.mean((probe < lo) | (probe > hi)))
    mean_ok = abs(probe.mean() - null.mean()) < 3 * null.std() / math.sqrt(probe.size) and null.mean() < 0.5
    ok = bool(self_ok) and coupled.min() > 0.9 and outside <= 0.01 and mean_ok
    assert record_criterion(3, ok, f"self-coherence 1: {bool(self_ok)}; coupled min {coupled.min():.3f}; "
                                   f"independent mean {probe.mean():.3f} vs null {null.mean():.3f}, "
                                   f"{outside:.1%} outside the 3 sd envelope [{lo:.3f}, {hi:.3f}]")


def test_criterion_4_svm_solver():
    worst = 0.0
    for seed in range(30):
        X, y, c = random_problem(seed)
        _, ref = cvxopt_dual(X @ X.T, y, c)
        *_, obj, _ = solve_binary(X @ X.T, y, c, tol=1e-8, Z=y[:, None] * X)
        worst = max(worst, abs(obj - ref) / max(1.0, abs(ref)))
    X = np.array([[3.0, 1.0], [3.0, -1.0], [1.0, 1.0], [1.0, -1.0]])
    model = train_linear_svm(X, [1, 1, 0, 0], C=1e6, class_weight=None, tol=1e-10)
    # analytic max-margin separator of the toy: x1 = 2, margin 1
    err = max(np.max(np.abs(model.coef[1] - [1.0, 0.0])), abs(model.intercept[1] + 2.0))
    ok = worst <= 1e-6 and err <= 1e-3
    assert record_criterion(4, ok, f"dual objective gap {worst:.1e} over 30 QPs; toy hyperplane error {err:.1e}")


def test_criterion_5_gradient_check():
    t0 = time.perf_counter()
    errs = {cell: finite_difference_error(cell, d=3, T=4, hidden=2) for cell in ("vanilla", "gru")}
    elapsed = time.perf_counter() - t0
    ok = max(errs.values()) < 1e-4 and elapsed < 5.0
    assert record_criterion(5, ok, f"vanilla {errs['vanilla']:.1e}, gru {errs['gru']:.1e}, {elapsed:.2f} s")


# ---------------------------------------------------------------------------
# 6-7: ramped synthetic dataset at desk scale
# ---------------------------------------------------------------------------

RAMPED = SynthConfig(seed=0)


@pytest.fixture(scope="module")
def ramped_profile(tmp_path_factory):
    t0 = time.perf_counter()
    manifest = generate(RAMPED, tmp_path_factory.mktemp("ramped"))
    tables = extract_features(manifest, ("gamma",), ("pearson", "coherence", "plv"))
    prof = temporal_scan({m: tables[("gamma", m)] for m in ("pearson", "coherence", "plv")},
                         CANONICAL_INTERVALS + (WHOLE_TRIAL,))
    return prof, time.perf_counter() - t0


@pytest.mark.slow
def test_criterion_6_temporal_pattern(ramped_profile):
    prof, elapsed = ramped_profile
    lines, ok = [], elapsed < 600
    for measure in ("pearson", "coherence", "plv"):
        means = prof.interval_mean(measure)
        grid, whole = means[:-1], means[-1]
        mono = bool(np.all(np.diff(grid) >= 0))
        gap = grid[-1] - whole
        ok &= mono and gap >= 0.02
        lines.append(f"{measure} {' '.join(f'{v:.2f}' for v in grid)} whole {whole:.2f} "
                     f"monotone={mono} gap={100 * gap:+.1f}pt")
    assert record_criterion(6, ok, "; ".join(lines) + f"; {elapsed:.0f} s")


@pytest.mark.slow
def test_criterion_7_approach_dominance(ramped_profile):
    prof, _ = ramped_profile
    rows, ok = [], True
    for measure in prof.grids:
        a1, _ = prof.approach1(measure)
        a2 = prof.approach2(measure)
        ok &= a2 >= a1
        rows.append(f"{measure} {a1:.4f} <= {a2:.4f}")
    # also on random grids, which is where ties and crossings show up
    rng = np.random.default_rng(7)
    for _ in range(2000):
        g = rng.integers(0, 16, size=(int(rng.integers(1, 16)), 8)) / 15
        p = TemporalProfile(CANONICAL_INTERVALS, tuple(map(str, range(g.shape[0]))), {"m": g})
        ok &= p.approach2("m") >= p.approach1("m")[0]
    assert record_criterion(7, bool(ok), "; ".join(rows) + "; 2000 random grids")


# ---------------------------------------------------------------------------
# 8-10: null control, dimensions, determinism
# ---------------------------------------------------------------------------

def test_criterion_8_null_control(tmp_path):
    # 30 subjects x 3 sessions x 15 clips gives 1350 trials, chance sd ~1.3 points
    cfg = SynthConfig(n_subjects=30, n_sessions=3, n_clips=15, trial_len_s=8.0, n_channels=6, pairs_per_class=2,
                      ramp=Ramp.constant(0.0), carryover=0.0, seed=8)
    tables = extract_features(generate(cfg, tmp_path / "null"), ("gamma",))
    accs = {m: loo_evaluate(t).accuracy for (_, m), t in tables.items()}
    ok = all(abs(a - 1 / 3) <= 0.05 for a in accs.values()) and len(accs) == 4
    assert record_criterion(8, ok, ", ".join(f"{m} {100 * a:.1f}%" for m, a in accs.items()))


def test_criterion_9_dimensions(tmp_path):
    cfg = SynthConfig(n_subjects=1, n_clips=3, trial_len_s=4.0, n_channels=62, seed=9)
    tables = extract_features(generate(cfg, tmp_path / "wide"), ("gamma",))
    dims = {m: t.values.shape[1] for (_, m), t in tables.items()}
    ok = dims == {"de": 62, "pearson": 1891, "coherence": 1891, "plv": 1891}
    assert record_criterion(9, ok, ", ".join(f"{m} {d}" for m, d in dims.items()))


def _full_run(out):
    small = ["--subjects", "2", "--clips", "6", "--channels", "8", "--trial-len", "24", "--seed", "10"]
    codes = [cli_main(["synth", "--out", str(out)] + small),
             cli_main(["evaluate", "--out", str(out), "--bands", "gamma,beta"]),
             cli_main(["temporal", "--out", str(out), "--intervals", "0:8,8:16,16:end"]),
             cli_main(["report", "--out", str(out)])]
    return codes


def test_criterion_10_determinism(tmp_path):
    codes = _full_run(tmp_path / "a") + _full_run(tmp_path / "b")
    names = sorted(str(p.relative_to(tmp_path / "a")) for p in (tmp_path / "a").rglob("*")
                   if p.is_file())
    match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", names, shallow=False)
    ok = codes == [0] * 8 and not mismatch and not errors and len(match) > 20
    assert record_criterion(10, ok, f"{len(match)} files identical, differing: {mismatch + errors}")
