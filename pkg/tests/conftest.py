import numpy as np
import pytest
from cvxopt import matrix, solvers

from eegconn.classify import _sample_bounds
from eegconn.features import FeatureTable
from eegconn.recurrent import RecurrentModel, loss_and_grad
from eegconn.synth import Ramp, SynthConfig, generate


def make_table(n_subjects=2, n_clips=6, n_windows=8, dim=5, sep=3.0, seed=0, measure="pearson",
               n_sessions=1):
    """Window table whose class means differ by ``sep`` along a random direction."""
    rng = np.random.default_rng(seed)
    centres = sep * rng.standard_normal((3, dim))
    rows = []
    for s in range(n_subjects):
        for sess in range(1, n_sessions + 1):
            for c in range(1, n_clips + 1):
                lab = (c - 1) % 3
                for w in range(n_windows):
                    rows.append((f"s{s + 1:02d}", sess, c, w, lab))
    subj, sess, trial, win, lab = map(np.array, zip(*rows))
    values = centres[lab] + rng.standard_normal((lab.size, dim))
    names = tuple(f"{measure}_f{i}" for i in range(dim))
    return FeatureTable(measure, "gamma", names, subj.astype(object), sess, trial, win, lab, values)


@pytest.fixture
def separable_table():
    return make_table(sep=6.0)


@pytest.fixture
def small_synth_config():
    return SynthConfig(n_subjects=1, n_clips=6, trial_len_s=20.0, n_channels=6, pairs_per_class=2,
                       ramp=Ramp.constant(0.8), carryover=0.0, noise=0.5, seed=3)


@pytest.fixture
def small_dataset(tmp_path, small_synth_config):
    return generate(small_synth_config, tmp_path / "ds")


solvers.options.update({"show_progress": False, "abstol": 1e-12, "reltol": 1e-12, "feastol": 1e-12})


def cvxopt_dual(K, y, c):
    """Reference solution of min 0.5 a'Qa - e'a, y'a = 0, 0 <= a <= c."""
    n = y.size
    Q = np.outer(y, y) * K
    G = np.vstack([-np.eye(n), np.eye(n)])
    h = np.concatenate([np.zeros(n), c])
    sol = solvers.qp(matrix(Q), matrix(-np.ones(n)), matrix(G), matrix(h), matrix(y[None, :]), matrix(0.0))
    a = np.array(sol["x"]).ravel()
    return a, 0.5 * a @ Q @ a - a.sum()


def random_problem(seed, n=None, d=None, balanced=True):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(6, 21))
    d = d or int(rng.integers(1, 8))
    X = rng.standard_normal((n, d))
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    y[:2] = [1.0, -1.0]
    X += 0.7 * y[:, None] * rng.standard_normal(d)
    c = _sample_bounds(y, float(rng.choice([0.1, 1.0, 10.0])), "balanced" if balanced else None)
    return X, y, c


def finite_difference_error(cell, seed=0, d=3, T=4, hidden=2, batch=5, eps=1e-5):
    rng = np.random.default_rng(seed)
    m = RecurrentModel.init(cell, d, hidden, 3, seed=seed)
    for k in m.params:
        m.params[k] = rng.normal(0, 0.8, m.params[k].shape)
    X = rng.normal(size=(batch, T, d))
    y = rng.integers(0, 3, batch)
    _, g = loss_and_grad(m, X, y)
    worst = 0.0
    for name, v in m.params.items():
        for i in np.ndindex(v.shape):
            old = v[i]
            v[i] = old + eps
            lp, _ = loss_and_grad(m, X, y)
            v[i] = old - eps
            lm, _ = loss_and_grad(m, X, y)
            v[i] = old
            fd = (lp - lm) / (2 * eps)
            worst = max(worst, abs(fd - g[name][i]) / max(1e-8, abs(fd) + abs(g[name][i])))
    return worst


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE = {}


def record_criterion(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
