"""Sliding-interval accuracy scans over trial time.

An interval [start, end) keeps the windows whose *start* time falls inside
it. ``end=None`` stands for the end of each trial, i.e. its last complete
window, so trials of different length resolve it differently.
"""

import csv
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .classify import DEFAULT_C, loo_evaluate
from .preprocess import WINDOW_S


@dataclass(frozen=True)
class IntervalSpec:
    start_s: float
    end_s: float = None  # None means "end of trial"

    def __post_init__(self):
        if self.start_s < 0:
            raise ValueError(f"interval start {self.start_s} is negative")
        if self.end_s is not None and not self.end_s > self.start_s:
            raise ValueError(f"interval end {self.end_s} must exceed start {self.start_s}")

    @property
    def label(self):
        end = "end" if self.end_s is None else f"{self.end_s:g}"
        return f"{self.start_s:g}-{end}"

    def check_aligned(self, window_len_s=WINDOW_S):
        for v in (self.start_s, self.end_s):
            if v is not None and not math.isclose(v / window_len_s, round(v / window_len_s), abs_tol=1e-9):
                raise ValueError(f"interval {self.label} is not aligned to {window_len_s:g} s windows")

    def window_range(self, n_windows, window_len_s=WINDOW_S):
        """Half-open window-index range ``[i0, i1)`` for a trial of ``n_windows``."""
        self.check_aligned(window_len_s)
        i0 = int(math.ceil(self.start_s / window_len_s - 1e-9))
        i1 = n_windows if self.end_s is None else min(n_windows, int(math.ceil(self.end_s / window_len_s - 1e-9)))
        return i0, i1

    def covered_by(self, n_windows, window_len_s=WINDOW_S):
        """True when a trial of ``n_windows`` spans the whole interval."""
        i0, i1 = self.window_range(n_windows, window_len_s)
        if i1 <= i0:
            return False
        return self.end_s is None or self.end_s <= n_windows * window_len_s + 1e-9


CANONICAL_INTERVALS = (
    IntervalSpec(0, 60), IntervalSpec(20, 80), IntervalSpec(40, 100), IntervalSpec(60, 120),
    IntervalSpec(80, 140), IntervalSpec(100, 160), IntervalSpec(120, 180), IntervalSpec(140, None),
)
WHOLE_TRIAL = IntervalSpec(0, None)


def parse_intervals(spec):
    """Interval list from ``"canonical"`` or comma-separated ``start:end`` pairs."""
    if isinstance(spec, (list, tuple)):
        items = [str(s) for s in spec]
    else:
        items = [s.strip() for s in str(spec).split(",") if s.strip()]
    out = []
    for item in items:
        if item == "canonical":
            out.extend(CANONICAL_INTERVALS)
            continue
        start, sep, end = item.partition(":")
        if not sep:
            raise ValueError(f"interval {item!r} is not of the form start:end")
        try:
            out.append(IntervalSpec(float(start), None if end.strip() == "end" else float(end)))
        except ValueError as exc:
            raise ValueError(f"bad interval {item!r}: {exc}") from None
    if not out:
        raise ValueError("empty interval list")
    return tuple(out)


def slice_windows(epochs, interval):
    """Windows of ``epochs`` whose start times lie in the interval."""
    n = epochs.first_window + epochs.n_windows
    i0, i1 = interval.window_range(n, epochs.window_len_s)
    i0, i1 = max(i0, epochs.first_window), min(i1, n)
    if i1 <= i0:
        raise ValueError(f"interval {interval.label} selects no windows of trial {epochs.key}")
    windows = epochs.windows[i0 - epochs.first_window:i1 - epochs.first_window]
    return replace(epochs, windows=windows, first_window=i0)


def slice_table(table, interval, window_len_s=WINDOW_S):
    """Rows of a window feature table inside ``interval``, trial by trial.

    Trials that do not span the interval are dropped with a warning.
    """
    keep = np.zeros(len(table), dtype=bool)
    short = []
    trial_ids = list(zip(table.subject.tolist(), table.session.tolist(), table.trial.tolist()))
    groups = {}
    for i, k in enumerate(trial_ids):
        groups.setdefault(k, []).append(i)
    for k, rows in groups.items():
        rows = np.asarray(rows)
        n_windows = int(table.window[rows].max()) + 1
        if not interval.covered_by(n_windows, window_len_s):
            short.append(k)
            continue
        i0, i1 = interval.window_range(n_windows, window_len_s)
        w = table.window[rows]
        keep[rows[(w >= i0) & (w < i1)]] = True
    if short:
        warnings.warn(f"interval {interval.label}: {len(short)} trial(s) too short, excluded (e.g. {short[0]})")
    if not keep.any():
        raise ValueError(f"interval {interval.label} selects no windows")
    return table.take(np.flatnonzero(keep))


@dataclass
class TemporalProfile:
    """Accuracy grids ``[subjects x intervals]``, one per feature type."""

    intervals: tuple
    subjects: tuple
    grids: dict  # measure -> ndarray
    reports: dict = field(default_factory=dict, repr=False)  # (measure, label) -> EvalReport

    @property
    def labels(self):
        return tuple(iv.label for iv in self.intervals)

    def interval_mean(self, measure):
        return self.grids[measure].mean(axis=0)

    def interval_std(self, measure):
        return self.grids[measure].std(axis=0)

    def best_interval(self, measure):
        """Per-subject index of the best interval; ties go to the earliest."""
        return np.argmax(self.grids[measure], axis=1)

    def approach1(self, measure):
        """Average over subjects first, then take the best interval."""
        means = self.interval_mean(measure)
        j = int(np.argmax(means))
        return float(means[j]), j

    def approach2(self, measure):
        """Best interval per subject, then average over subjects."""
        g = self.grids[measure]
        return float(np.mean(g[np.arange(g.shape[0]), self.best_interval(measure)]))

    def summary(self):
        out = {}
        for m in sorted(self.grids):
            a1, j = self.approach1(m)
            out[m] = {
                "intervals": list(self.labels),
                "mean": self.interval_mean(m).tolist(),
                "std": self.interval_std(m).tolist(),
                "approach1": a1,
                "approach1_interval": self.labels[j],
                "approach2": self.approach2(m),
                "best_interval": {s: self.labels[j] for s, j in zip(self.subjects, self.best_interval(m).tolist())},
            }
        return out


def temporal_scan(tables, intervals=CANONICAL_INTERVALS, k=None, C=DEFAULT_C, mode="clip",
                  window_len_s=WINDOW_S, n_jobs=1, evaluator=None):
    """Leave-one-out accuracy of every feature table restricted to each interval.

    ``tables`` maps a measure name to its window feature table. Fisher
    selection and standardisation are refitted inside every fold of every
    interval. ``k`` may be an int or a ``{measure: int}`` mapping.
    ``evaluator(table, k, C, mode)`` defaults to :func:`loo_evaluate`.
    """
    evaluator = evaluator or (lambda t, kk, c, md: loo_evaluate(t, k=kk, C=c, mode=md))
    measures = sorted(tables)
    subjects = tuple(sorted(set().union(*(t.subjects() for t in tables.values()))))
    jobs = [(m, iv) for m in measures for iv in intervals]

    def run(job):
        m, iv = job
        sub = slice_table(tables[m], iv, window_len_s)
        kk = k.get(m) if isinstance(k, dict) else k
        if kk is not None:
            kk = min(kk, sub.dim)
        rep = evaluator(sub, kk, C, mode)
        rep.name = f"{sub.band}_{m}_{iv.label}"
        return job, rep

    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            done = list(pool.map(run, jobs))
    else:
        done = [run(j) for j in jobs]

    grids = {m: np.full((len(subjects), len(intervals)), np.nan) for m in measures}
    reports = {}
    for (m, iv), rep in done:
        j = intervals.index(iv)
        acc = rep.subject_accuracy
        for i, s in enumerate(subjects):
            if s in acc:
                grids[m][i, j] = acc[s]
        reports[(m, iv.label)] = rep
    for m, g in grids.items():
        if np.isnan(g).any():
            raise ValueError(f"{m}: incomplete interval grid (a subject has no trial spanning some interval)")
    return TemporalProfile(tuple(intervals), subjects, grids, reports)


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

def write_grid_csv(profile, measure, path):
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject", *profile.labels])
        for s, row in zip(profile.subjects, profile.grids[measure]):
            w.writerow([s, *(repr(float(v)) for v in row)])
    return path


def read_grid_csv(path):
    """``(subjects, interval_labels, grid)`` from a grid CSV."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    labels = tuple(rows[0][1:])
    subjects = tuple(r[0] for r in rows[1:])
    grid = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=np.float64).reshape(len(subjects), len(labels))
    return subjects, labels, grid


def gray_level(acc):
    """Linear intensity map: accuracy 0 -> black (0), 1 -> white (255)."""
    return int(round(255 * min(max(float(acc), 0.0), 1.0)))


def grid_svg(profile, measure, cell=28):
    """SVG heatmap, subjects down, intervals across; brighter is more accurate."""
    g = profile.grids[measure]
    left, top = 48, 64
    width = left + cell * g.shape[1] + 8
    height = top + cell * g.shape[0] + 8
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="9">',
        f'<text x="{left}" y="12" font-size="11">{measure}: accuracy, gray = 255 * acc</text>',
    ]
    for j, lab in enumerate(profile.labels):
        x = left + cell * j + cell / 2
        parts.append(f'<text x="{x:g}" y="{top - 6}" text-anchor="end" transform="rotate(-60 {x:g} {top - 6})">{lab}</text>')
    for i, s in enumerate(profile.subjects):
        y = top + cell * i
        parts.append(f'<text x="{left - 4}" y="{y + cell / 2 + 3:g}" text-anchor="end">{s}</text>')
        for j in range(g.shape[1]):
            v = gray_level(g[i, j])
            parts.append(
                f'<rect x="{left + cell * j}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="rgb({v},{v},{v})"><title>{s} {profile.labels[j]}: {g[i, j]:.4f}</title></rect>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def export_interval_grid(profile, outdir, prefix="interval_grid"):
    """One CSV and one SVG per feature type; returns the written paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for m in sorted(profile.grids):
        written.append(write_grid_csv(profile, m, outdir / f"{prefix}_{m}.csv"))
        svg = outdir / f"{prefix}_{m}.svg"
        svg.write_text(grid_svg(profile, m))
        written.append(svg)
    return written
