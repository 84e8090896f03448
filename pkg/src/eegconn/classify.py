"""Linear SVM, leave-one-clip-out evaluation with trial voting, decision fusion."""

import hashlib
import json
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .qp import ipm_dual, snap_feasible
from .selection import fisher_scores, select_top_k

log = logging.getLogger(__name__)

N_CLASSES = 3
DEFAULT_C = 1.0
DEFAULT_TOL = 1e-4
DEFAULT_MAX_PASSES = 100_000
_TRACE_CAP = 10_000


class ConvergenceWarning(UserWarning):
    pass


class FoldError(ValueError):
    """A cross-validation fold cannot be trained (e.g. a class is missing)."""


# ---------------------------------------------------------------------------
# Linear SVM
# ---------------------------------------------------------------------------

@dataclass
class BinarySolution:
    alpha: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)
    b: float
    n_iter: int
    converged: bool
    objective: float
    trace: np.ndarray = field(repr=False)


@dataclass
class LinearSvmModel:
    classes: np.ndarray
    coef: np.ndarray  # [n_classes, n_features]
    intercept: np.ndarray  # [n_classes]
    C: float
    tol: float
    max_passes: int
    class_weight: str
    solutions: list = field(default_factory=list, repr=False)
    fold: str = ""

    @property
    def n_features(self):
        return self.coef.shape[1]

    @property
    def converged(self):
        return all(s.converged for s in self.solutions)

    def decision_function(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"feature dimension {X.shape[-1]} does not match model ({self.n_features})")
        return X @ self.coef.T + self.intercept

    def predict(self, X):
        return predict(self, X)


def solve_binary(K, y, c, tol=DEFAULT_TOL, max_passes=DEFAULT_MAX_PASSES, Z=None):
    """Solve one soft-margin dual on Gram matrix ``K`` with per-sample bounds ``c``.

    ``y`` holds +1/-1. When the factor ``Z`` with ``K = X X'`` (``Z = diag(y) X``)
    is supplied, an interior-point pass provides the SMO starting point;
    otherwise SMO starts from zero. Returns dual variables, the bias, and
    the dual objective 0.5 a'Qa - e'a (minimisation form) logged once per pass.
    """
    K = np.ascontiguousarray(K, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    c = np.ascontiguousarray(c, dtype=np.float64)
    n = y.size
    trace = np.zeros(min(max_passes, _TRACE_CAP) + 1)
    if Z is None:
        alpha = np.zeros(n)
        grad = -np.ones(n)
        obj = 0.0
    else:
        a0, _, _, _ = ipm_dual(Z, y, c)
        alpha = snap_feasible(a0, y, c)
        grad = y * (K @ (y * alpha)) - 1.0
        obj = 0.5 * float(alpha @ (grad - 1.0))
    alpha, rho, n_iter, converged, n_trace = kernels.smo(
        K, y, c, float(tol), int(max_passes) * n, trace, alpha, grad, obj,
    )
    ay = alpha * y
    objective = 0.5 * float(ay @ K @ ay) - float(alpha.sum())
    return alpha, -float(rho), int(n_iter), bool(converged), objective, trace[:n_trace]


def _sample_bounds(y_bin, C, class_weight):
    if class_weight is None or class_weight == "none":
        return np.full(y_bin.size, float(C))
    if class_weight != "balanced":
        raise ValueError(f"unknown class_weight {class_weight!r}")
    n = y_bin.size
    n_pos = np.count_nonzero(y_bin > 0)
    n_neg = n - n_pos
    return np.where(y_bin > 0, C * n / (2.0 * n_pos), C * n / (2.0 * n_neg))


def train_linear_svm(features, labels, C=DEFAULT_C, tol=DEFAULT_TOL, max_passes=DEFAULT_MAX_PASSES,
                     class_weight="balanced", warm_start="ipm"):
    """One-vs-rest linear SVM, each binary problem solved exactly in the dual.

    Minimises 0.5 ||w||^2 + sum_i c_i hinge(y_i (w.x_i + b)) with an
    unregularised bias. ``class_weight="balanced"`` sets c_i = C n / (2 n_class(i))
    inside every binary problem; ``None`` uses c_i = C. ``warm_start="ipm"``
    starts SMO from an interior-point solution, ``None`` from zero; both
    stop on the same KKT criterion.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f"features {X.shape} and labels {y.shape} disagree")
    if not np.all(np.isfinite(X)):
        raise ValueError("features contain non-finite values")
    if C <= 0:
        raise ValueError("C must be positive")
    if warm_start not in ("ipm", None):
        raise ValueError(f"warm_start must be 'ipm' or None, got {warm_start!r}")
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("train_linear_svm needs at least 2 classes")

    K = X @ X.T
    coef = np.zeros((classes.size, X.shape[1]))
    intercept = np.zeros(classes.size)
    solutions = []
    for idx, cls in enumerate(classes):
        y_bin = np.where(y == cls, 1.0, -1.0)
        c = _sample_bounds(y_bin, C, class_weight)
        Z = y_bin[:, None] * X if warm_start == "ipm" else None
        alpha, b, n_iter, converged, objective, trace = solve_binary(K, y_bin, c, tol, max_passes, Z=Z)
        w = (alpha * y_bin) @ X
        coef[idx] = w
        intercept[idx] = b
        if not converged:
            warnings.warn(
                f"SVM class {cls} vs rest stopped at iteration cap ({n_iter} updates) before reaching tol={tol}",
                ConvergenceWarning,
            )
        solutions.append(BinarySolution(alpha, w, b, n_iter, converged, objective, trace))
    return LinearSvmModel(classes, coef, intercept, float(C), float(tol), int(max_passes),
                          str(class_weight), solutions)


def predict(model, features):
    """Class with the largest one-vs-rest score; ties go to the lower class index."""
    scores = model.decision_function(features)
    return model.classes[np.argmax(scores, axis=1)]


def vote_trial(window_labels, n_classes=N_CLASSES):
    """Modal label; ties go to the lower class index."""
    labels = np.asarray(window_labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("cannot vote on an empty label vector")
    counts = np.bincount(labels, minlength=n_classes)
    return int(np.argmax(counts))


class Standardizer:
    def __init__(self, X):
        self.mean = X.mean(axis=0)
        sd = X.std(axis=0)
        self.scale = np.where(sd > 0, sd, 1.0)

    def __call__(self, X):
        return (X - self.mean) / self.scale


def svm_trainer(C=DEFAULT_C, tol=DEFAULT_TOL, max_passes=DEFAULT_MAX_PASSES, class_weight="balanced",
                warm_start="ipm"):
    def fit(X, y):
        return train_linear_svm(X, y, C=C, tol=tol, max_passes=max_passes, class_weight=class_weight,
                                warm_start=warm_start)
    return fit


# ---------------------------------------------------------------------------
# Evaluation report
# ---------------------------------------------------------------------------

@dataclass
class TrialResult:
    subject: str
    fold: str
    session: int
    trial: int
    label: int
    predicted: int
    n_units: int
    train_fingerprint: str


@dataclass
class EvalReport:
    """Trial-level outcomes of a cross-validated run plus unit-level scores.

    A *unit* is whatever the classifier scores: a 2 s window for the SVM
    path, a feature sequence for the recurrent path. ``unit_scores`` rows
    align with ``unit_keys`` (subject, session, trial, index).
    """

    name: str
    trials: list
    unit_keys: list = field(repr=False)
    unit_labels: np.ndarray = field(repr=False)
    unit_scores: np.ndarray = field(repr=False)
    unit_folds: list = field(repr=False)
    fold_fingerprints: dict = field(default_factory=dict, repr=False)
    n_classes: int = N_CLASSES

    @classmethod
    def from_units(cls, name, keys, labels, scores, folds, fingerprints, n_classes=N_CLASSES):
        keys = [tuple(k) for k in keys]
        labels = np.asarray(labels, dtype=np.int64)
        scores = np.asarray(scores, dtype=np.float64)
        preds = np.argmax(scores, axis=1)
        groups = {}
        for i, k in enumerate(keys):
            groups.setdefault(k[:3], []).append(i)
        trials = []
        for tkey in sorted(groups, key=lambda k: (str(k[0]), k[1], k[2])):
            rows = groups[tkey]
            fold = folds[rows[0]]
            truth = set(labels[rows].tolist())
            if len(truth) != 1:
                raise ValueError(f"trial {tkey} has inconsistent labels {truth}")
            trials.append(TrialResult(
                str(tkey[0]), fold, int(tkey[1]), int(tkey[2]), int(labels[rows[0]]),
                vote_trial(preds[rows], n_classes), len(rows), fingerprints.get(fold, ""),
            ))
        return cls(name, trials, keys, labels, scores, list(folds), dict(fingerprints), n_classes)

    @property
    def subjects(self):
        return sorted({t.subject for t in self.trials})

    @property
    def subject_accuracy(self):
        acc = {}
        for s in self.subjects:
            rows = [t for t in self.trials if t.subject == s]
            acc[s] = sum(t.label == t.predicted for t in rows) / len(rows)
        return acc

    @property
    def accuracy(self):
        """Mean over subjects of per-subject trial accuracy."""
        return float(np.mean(list(self.subject_accuracy.values())))

    @property
    def std(self):
        """Population standard deviation across subjects."""
        return float(np.std(list(self.subject_accuracy.values())))

    @property
    def pooled_accuracy(self):
        return sum(t.label == t.predicted for t in self.trials) / len(self.trials)

    @property
    def confusion(self):
        m = np.zeros((self.n_classes, self.n_classes), dtype=np.int64)
        for t in self.trials:
            m[t.label, t.predicted] += 1
        return m

    def summary(self):
        return {
            "name": self.name,
            "mean_accuracy": self.accuracy,
            "std_accuracy": self.std,
            "pooled_accuracy": self.pooled_accuracy,
            "n_trials": len(self.trials),
            "per_subject": self.subject_accuracy,
            "confusion": self.confusion.tolist(),
        }

    def write_csv(self, path):
        lines = ["subject,fold,session,trial,label,predicted,correct,n_units,train_fingerprint"]
        for t in self.trials:
            lines.append(
                f"{t.subject},{t.fold},{t.session},{t.trial},{t.label},{t.predicted},"
                f"{int(t.label == t.predicted)},{t.n_units},{t.train_fingerprint}"
            )
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n")
        return path

    def write_json(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        return path


# ---------------------------------------------------------------------------
# Leave-one-out harness
# ---------------------------------------------------------------------------

def fingerprint_rows(table, idx):
    """Order-independent hash of the row keys selected by ``idx``."""
    keys = sorted(
        f"{table.subject[i]}|{table.session[i]}|{table.trial[i]}|{table.window[i]}" for i in np.asarray(idx)
    )
    return hashlib.sha256("\n".join(keys).encode()).hexdigest()[:16]


def fold_splits(table, mode="clip"):
    """Yield ``(fold_id, train_idx, test_idx)`` for a single-subject table.

    ``mode="clip"`` holds out one clip id across all sessions (one fold per
    clip); ``mode="session_trial"`` holds out one (session, clip) trial.
    """
    subjects = table.subjects()
    if len(subjects) != 1:
        raise ValueError(f"fold_splits expects one subject, got {subjects}")
    if mode == "clip":
        units = [(int(c),) for c in np.unique(table.trial)]
        member = lambda u: table.trial == u[0]  # noqa: E731
    elif mode == "session_trial":
        units = sorted({(int(s), int(c)) for s, c in zip(table.session, table.trial)})
        member = lambda u: (table.session == u[0]) & (table.trial == u[1])  # noqa: E731
    else:
        raise ValueError(f"unknown fold mode {mode!r}")
    for u in units:
        test = member(u)
        fold_id = f"{subjects[0]}/" + "-".join(str(v) for v in u)
        yield fold_id, np.flatnonzero(~test), np.flatnonzero(test)


def _fold_pipeline(Xtr, ytr, k, weighted_fisher):
    scaler = Standardizer(Xtr)
    Ztr = scaler(Xtr)
    if k is None or k >= Ztr.shape[1]:
        idx = np.arange(Ztr.shape[1])
    else:
        idx = select_top_k(fisher_scores(Ztr, ytr, weighted=weighted_fisher), k)
    return scaler, idx


def _check_classes(ytr, fold_id, n_classes):
    missing = sorted(set(range(n_classes)) - set(np.unique(ytr).tolist()))
    if missing:
        raise FoldError(f"fold {fold_id}: class(es) {missing} missing from training data")


def loo_evaluate(table, k=None, C=DEFAULT_C, mode="clip", trainer=None, weighted_fisher=False,
                 name=None, n_jobs=1, n_classes=N_CLASSES):
    """Leave-one-clip-out evaluation of a window feature table, pooled over subjects.

    In each fold the standardisation, the Fisher ranking and the classifier
    are fitted on training windows only. Window predictions of the held-out
    clip are voted per (session, clip) trial.
    """
    trainer = trainer or svm_trainer(C=C)
    jobs = []
    for subject in table.subjects():
        sub = table.for_subject(subject)
        rows = np.flatnonzero(table.subject == subject)
        for fold_id, tr, te in fold_splits(sub, mode):
            jobs.append((fold_id, sub, rows, tr, te))

    def run(job):
        fold_id, sub, rows, tr, te = job
        Xtr, ytr = sub.values[tr], sub.label[tr]
        _check_classes(ytr, fold_id, n_classes)
        scaler, idx = _fold_pipeline(Xtr, ytr, k, weighted_fisher)
        model = trainer(scaler(Xtr)[:, idx], ytr)
        scores = _full_scores(model, scaler(sub.values[te])[:, idx], n_classes)
        return rows[te], scores, fold_id, fingerprint_rows(sub, tr)

    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]

    scores = np.zeros((len(table), n_classes))
    folds = [""] * len(table)
    fingerprints = {}
    seen = np.zeros(len(table), dtype=bool)
    for test_rows, s, fold_id, fp in results:
        if seen[test_rows].any():
            raise RuntimeError("a window was tested in more than one fold")
        seen[test_rows] = True
        scores[test_rows] = s
        for r in test_rows:
            folds[r] = fold_id
        fingerprints[fold_id] = fp
    if not seen.all():
        raise RuntimeError("some windows were never tested")
    return EvalReport.from_units(
        name or f"{table.band}_{table.measure}", table.row_keys(), table.label, scores, folds, fingerprints, n_classes,
    )


def _full_scores(model, X, n_classes):
    """Decision values laid out over all ``n_classes`` columns."""
    raw = model.decision_function(X)
    classes = getattr(model, "classes", np.arange(n_classes))
    if raw.shape[1] == n_classes and np.array_equal(classes, np.arange(n_classes)):
        return raw
    out = np.full((raw.shape[0], n_classes), -np.inf)
    out[:, np.asarray(classes, dtype=np.int64)] = raw
    return out


# ---------------------------------------------------------------------------
# Decision-level fusion
# ---------------------------------------------------------------------------

def normalize_scores(scores):
    """Centre each unit's class scores and scale the model to unit RMS."""
    s = np.asarray(scores, dtype=np.float64)
    s = s - s.mean(axis=1, keepdims=True)
    rms = np.sqrt(np.mean(s * s))
    return s / rms if rms > 0 else s


def fuse_decision(reports, name="fused"):
    """Sum normalised unit scores across reports, then vote per trial."""
    reports = list(reports)
    if not reports:
        raise ValueError("nothing to fuse")
    ref = reports[0]
    for r in reports[1:]:
        if r.unit_keys != ref.unit_keys or not np.array_equal(r.unit_labels, ref.unit_labels):
            raise ValueError(f"key misalignment between reports {ref.name!r} and {r.name!r}")
    fused = sum(normalize_scores(r.unit_scores) for r in reports)
    return EvalReport.from_units(
        name, ref.unit_keys, ref.unit_labels, fused, ref.unit_folds, ref.fold_fingerprints, ref.n_classes,
    )
