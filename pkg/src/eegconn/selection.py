"""Fisher-score feature ranking, top-k selection and k sweeps.

The default score for feature i is

    F(i) = sum_k (mean_k,i - mean_i)^2  /  sum_k var_k,i

with ``var_k,i`` the unbiased (1/(n_k - 1)) within-class variance and an
*unweighted* numerator. ``weighted=True`` gives the common variant
sum_k n_k (mean_k,i - mean_i)^2 / sum_k n_k pvar_k,i (population variance).
"""

import hashlib
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

# Feature-count grids examined for connectivity features and for DE.
CONNECTIVITY_K_GRID = (100, 200, 300, 400, 500, 600, 700, 800, 1200)
DE_K_GRID = (10, 20, 30, 40, 50)
# Best k reported on the full 62-channel montage.
REPORTED_BEST_K = {"de": 40, "pearson": 700, "coherence": 200, "plv": 400}


@dataclass(frozen=True)
class FisherRanking:
    scores: np.ndarray = field(repr=False)
    order: np.ndarray = field(repr=False)
    fingerprint: str
    names: tuple = ()

    @property
    def dim(self):
        return self.scores.shape[0]

    def write_csv(self, path):
        rank = np.empty(self.dim, dtype=np.int64)
        rank[self.order] = np.arange(1, self.dim + 1)
        names = self.names or tuple(f"f{i}" for i in range(self.dim))
        lines = ["feature,score,rank"]
        lines += [f"{names[i]},{self.scores[i]!r},{rank[i]}" for i in range(self.dim)]
        Path(path).write_text("\n".join(lines) + "\n")
        return Path(path)


def split_fingerprint(features, labels):
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(features, dtype=np.float64).tobytes())
    h.update(np.ascontiguousarray(labels, dtype=np.int64).tobytes())
    return h.hexdigest()[:16]


def descending_order(scores):
    """Indices sorting ``scores`` high to low, ties to the lower index."""
    return np.lexsort((np.arange(scores.size), -scores))


def fisher_scores(features, labels, weighted=False, names=()):
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f"features {X.shape} and labels {y.shape} disagree")
    classes, counts = np.unique(y, return_counts=True)
    if classes.size < 2:
        raise ValueError("Fisher score needs at least 2 classes")
    if np.any(counts < 2):
        raise ValueError(f"every class needs >= 2 samples, got counts {dict(zip(classes.tolist(), counts.tolist()))}")

    grand = X.mean(axis=0)
    num = np.zeros(X.shape[1])
    den = np.zeros(X.shape[1])
    for cls, n_k in zip(classes, counts):
        Xk = X[y == cls]
        mk = Xk.mean(axis=0)
        ss = ((Xk - mk) ** 2).sum(axis=0)
        if weighted:
            num += n_k * (mk - grand) ** 2
            den += ss
        else:
            num += (mk - grand) ** 2
            den += ss / (n_k - 1)

    scores = np.zeros_like(num)
    ok = den > 0
    scores[ok] = num[ok] / den[ok]
    if not ok.all():
        warnings.warn(f"{int((~ok).sum())} feature(s) with zero within-class variance scored 0", RuntimeWarning)
    return FisherRanking(scores, descending_order(scores), split_fingerprint(X, y), tuple(names))


def select_top_k(ranking, k):
    """Sorted indices of the ``k`` best features under the ranking's order."""
    if not 1 <= k <= ranking.dim:
        raise ValueError(f"k={k} outside [1, {ranking.dim}]")
    return np.sort(ranking.order[:k])


def resolve_k_grid(k_grid, dim):
    """Drop grid values above ``dim``; fall back to ``[dim]`` when none remain."""
    kept = sorted({int(k) for k in k_grid if 1 <= int(k) <= dim})
    dropped = sorted({int(k) for k in k_grid} - set(kept))
    if dropped:
        log.info("k values %s exceed feature dimension %d; dropped", dropped, dim)
    return kept or [dim]


def k_sweep(table, k_grid, evaluator):
    """Accuracy for each ``k`` in ``k_grid``.

    ``evaluator(table, k)`` must run the full cross-validation and re-rank on
    each fold's training rows; it returns a scalar accuracy (or a report with
    an ``accuracy`` attribute).
    """
    k_grid = list(k_grid)
    if k_grid != sorted(k_grid):
        raise ValueError("k_grid must be sorted ascending")
    if not k_grid or k_grid[0] < 1 or k_grid[-1] > table.dim:
        raise ValueError(f"k_grid must lie within [1, {table.dim}]")
    out = {}
    for k in k_grid:
        res = evaluator(table, k)
        out[k] = float(getattr(res, "accuracy", res))
    return out
