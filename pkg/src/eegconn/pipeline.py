"""Dataset-level feature extraction: every trial through preprocessing and
every requested (band, measure) pair, collected into one table per pair."""

import logging
import time
from concurrent.futures import ThreadPoolExecutor

from .data import get_bands, load_recording
from .features import MEASURES, FeatureTable, epochs_table
from .preprocess import BROADBAND, TARGET_FS, WINDOW_S, preprocess_trial

log = logging.getLogger(__name__)


class TrialError(RuntimeError):
    """A computation failed for one trial; the message names the trial."""


def _resolve_bands(bands):
    table = get_bands()
    out = []
    for b in bands:
        if isinstance(b, str):
            if b not in table:
                raise ValueError(f"unknown band {b!r}; choose from {sorted(table)}")
            b = table[b]
        out.append(b)
    return out


def extract_trial(manifest, key, bands, measures, window_len_s=WINDOW_S, target_fs=TARGET_FS,
                  broadband=BROADBAND):
    """``{(band, measure): FeatureTable}`` for a single trial."""
    try:
        rec = load_recording(manifest, key)
        epochs = preprocess_trial(rec, bands, target_fs=target_fs, broadband=broadband, window_len_s=window_len_s)
        return {
            (b.name, m): epochs_table(epochs[b.name], m, manifest.channels)
            for b in bands for m in measures
        }
    except Exception as exc:
        raise TrialError(f"trial {key}: {exc}") from exc


def extract_features(manifest, bands=("gamma",), measures=MEASURES, window_len_s=WINDOW_S,
                     target_fs=TARGET_FS, broadband=BROADBAND, n_jobs=1):
    """Feature tables for every trial of ``manifest``.

    Returns ``{(band_name, measure): FeatureTable}`` with rows in manifest
    order, independent of ``n_jobs``.
    """
    bands = _resolve_bands(bands)
    for m in measures:
        if m not in MEASURES:
            raise ValueError(f"unknown measure {m!r}; choose from {MEASURES}")
    keys = manifest.keys()
    t0 = time.perf_counter()

    def run(key):
        return extract_trial(manifest, key, bands, measures, window_len_s, target_fs, broadband)

    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            per_trial = list(pool.map(run, keys))
    else:
        per_trial = []
        for i, key in enumerate(keys):
            per_trial.append(run(key))
            log.debug("extracted %s (%d/%d)", key, i + 1, len(keys))
    out = {
        (b.name, m): FeatureTable.concat(t[(b.name, m)] for t in per_trial)
        for b in bands for m in measures
    }
    log.info("extracted %d trials x %d tables in %.1f s", len(keys), len(out), time.perf_counter() - t0)
    return out
