"""Batch driver: ``eegconn <synth|extract|evaluate|temporal|rnn|report>``.

Configuration comes from built-in defaults, then an optional TOML file
(``--config``), then command-line flags; later sources win. Randomness
derives from the single root ``--seed``: the generator uses it as its
seed, each recurrent fold uses ``[seed, fold id bytes]``.

Every run writes ``run_<command>.json`` into the output directory with the
resolved configuration, the seed, the package version and the dataset
fingerprint; the config file, if any, is copied next to it unchanged. No
timestamps or absolute paths enter any written file, so identical
manifests mean identical outputs.

Exit status: 0 success, 1 invalid configuration or input, 2 failure
during computation.
"""

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import shutil
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .classify import DEFAULT_C, fuse_decision, loo_evaluate
from .data import BAND_NAMES, DataError, get_bands, load_manifest
from .features import CONNECTIVITY, MEASURES, FeatureTable
from .pipeline import extract_features
from .preprocess import WINDOW_S
from .recurrent import AUGMENT_SIGMAS, RecurrentModel, RnnEvalConfig, TrainConfig, loo_evaluate_rnn
from .selection import CONNECTIVITY_K_GRID, DE_K_GRID, REPORTED_BEST_K, resolve_k_grid
from .synth import Ramp, SynthConfig, generate
from .temporal import WHOLE_TRIAL, export_interval_grid, parse_intervals, temporal_scan

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("eegconn")

COMMANDS = ("synth", "extract", "evaluate", "temporal", "rnn", "report")


class ConfigError(ValueError):
    """Invalid configuration or missing input; maps to exit status 1."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclasses.dataclass
class RnnSettings:
    cell: str = "gru"
    hidden: int = 16
    band: str = "gamma"
    measures: tuple = CONNECTIVITY
    k: int = None
    epochs: int = 200
    learning_rate: float = 0.01
    batch_size: int = 32
    clip_norm: float = 5.0
    sequence_s: float = 180.0
    step_s: float = 2.0
    sigmas: tuple = AUGMENT_SIGMAS


@dataclasses.dataclass
class RunConfig:
    dataset: str = None  # defaults to <out>/dataset
    out: str = "run"
    seed: int = 0
    jobs: int = 1
    bands: tuple = BAND_NAMES
    band_scheme: str = "canonical"
    measures: tuple = MEASURES
    window_s: float = WINDOW_S
    fold_mode: str = "clip"
    C: float = DEFAULT_C
    k: dict = None  # per-measure selected-feature count; None = reported best k
    k_grid: dict = None  # per-measure sweep grid; None = built-in grids
    sweep_band: str = "gamma"
    fusion_band: str = "gamma"
    temporal_band: str = "gamma"
    intervals: str = "canonical"
    synth: dict = dataclasses.field(default_factory=dict)
    rnn: RnnSettings = dataclasses.field(default_factory=RnnSettings)

    @property
    def dataset_dir(self):
        return Path(self.dataset) if self.dataset else Path(self.out) / "dataset"

    def to_dict(self):
        d = dataclasses.asdict(self)
        d.pop("out")  # the output location does not change results
        d.pop("jobs")
        if self.dataset is None:
            d["dataset"] = "<out>/dataset"
        return _plain(d)


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in sorted(v.items(), key=lambda kv: str(kv[0]))}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, Path):
        return str(v)
    return v


def _check_keys(section, allowed, where):
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}; allowed: {sorted(allowed)}")


def _k_map(value, where):
    if value is None:
        return None
    if isinstance(value, int) and not isinstance(value, bool):
        return {m: int(value) for m in MEASURES}
    if isinstance(value, dict):
        _check_keys(value, MEASURES, where)
        return {m: int(v) for m, v in value.items()}
    raise ConfigError(f"{where}: expected an integer or a table of per-measure integers")


def _grid_map(value, where):
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        return {m: [int(v) for v in value] for m in MEASURES}
    if isinstance(value, dict):
        _check_keys(value, MEASURES, where)
        return {m: [int(v) for v in vs] for m, vs in value.items()}
    raise ConfigError(f"{where}: expected a list or a table of per-measure lists")


def _split(text):
    return tuple(s.strip() for s in str(text).split(",") if s.strip())


def load_config(path):
    """Parse a TOML config into ``(top-level dict, text)``."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: config file not found")
    text = path.read_text()
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return raw, text


def resolve_config(args):
    """Merge defaults, the optional config file and flags into a :class:`RunConfig`."""
    cfg = RunConfig()
    if args.config:
        raw, _ = load_config(args.config)
        fields = {f.name for f in dataclasses.fields(RunConfig)}
        _check_keys(raw, fields, str(args.config))
        for key, value in raw.items():
            if key == "rnn":
                if not isinstance(value, dict):
                    raise ConfigError(f"{args.config}: [rnn] must be a table")
                _check_keys(value, {f.name for f in dataclasses.fields(RnnSettings)}, f"{args.config} [rnn]")
                cfg.rnn = dataclasses.replace(cfg.rnn, **value)
            elif key == "synth":
                if not isinstance(value, dict):
                    raise ConfigError(f"{args.config}: [synth] must be a table")
                cfg.synth = dict(value)
            elif key == "k":
                cfg.k = _k_map(value, f"{args.config}: k")
            elif key == "k_grid":
                cfg.k_grid = _grid_map(value, f"{args.config}: k_grid")
            else:
                setattr(cfg, key, value)

    # flags win over the file
    for name in ("seed", "out", "jobs", "dataset", "C", "fold_mode", "intervals", "band_scheme"):
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, v)
    if getattr(args, "bands", None):
        cfg.bands = _split(args.bands)
    if getattr(args, "measures", None):
        cfg.measures = _split(args.measures)
    if getattr(args, "k", None) is not None:
        cfg.k = _k_map(int(args.k), "--k")
    if getattr(args, "band", None):
        if args.command == "temporal":
            cfg.temporal_band = args.band
        elif args.command == "rnn":
            cfg.rnn = dataclasses.replace(cfg.rnn, band=args.band)
    if args.command == "rnn":
        for name in ("cell", "hidden", "epochs"):
            v = getattr(args, name, None)
            if v is not None:
                cfg.rnn = dataclasses.replace(cfg.rnn, **{name: v})
        if getattr(args, "rnn_measures", None):
            cfg.rnn = dataclasses.replace(cfg.rnn, measures=_split(args.rnn_measures))
    if args.command == "synth":
        for flag, key in (("subjects", "n_subjects"), ("sessions", "n_sessions"), ("clips", "n_clips"),
                          ("channels", "n_channels"), ("trial_len", "trial_len_s"), ("noise", "noise")):
            v = getattr(args, flag, None)
            if v is not None:
                cfg.synth[key] = v
        if getattr(args, "kappa", None) is not None:
            cfg.synth["ramp"] = {"lo": args.kappa, "hi": args.kappa, "t0_s": 0.0, "t1_s": 0.0}
            cfg.synth["carryover"] = 0.0

    _validate(cfg)
    return cfg


def _validate(cfg):
    bands = get_bands(cfg.band_scheme)
    for b in (*cfg.bands, cfg.sweep_band, cfg.fusion_band, cfg.temporal_band, cfg.rnn.band):
        if b not in bands:
            raise ConfigError(f"unknown band {b!r}; choose from {list(bands)}")
    cfg.bands, cfg.measures = tuple(cfg.bands), tuple(cfg.measures)
    for m in (*cfg.measures, *cfg.rnn.measures):
        if m not in MEASURES:
            raise ConfigError(f"unknown measure {m!r}; choose from {list(MEASURES)}")
    if cfg.fold_mode not in ("clip", "session_trial"):
        raise ConfigError(f"fold_mode must be 'clip' or 'session_trial', got {cfg.fold_mode!r}")
    if not cfg.C > 0:
        raise ConfigError("C must be positive")
    if int(cfg.jobs) < 1:
        raise ConfigError("jobs must be >= 1")
    if not cfg.window_s > 0:
        raise ConfigError("window_s must be positive")
    try:
        parse_intervals(cfg.intervals)
    except ValueError as exc:
        raise ConfigError(f"intervals: {exc}") from None
    try:
        synth_config(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[synth]: {exc}") from None
    try:
        TrainConfig(cfg.rnn.learning_rate, cfg.rnn.epochs, cfg.rnn.batch_size, cfg.rnn.clip_norm)
    except ValueError as exc:
        raise ConfigError(f"[rnn]: {exc}") from None
    if cfg.rnn.cell not in ("vanilla", "gru") or cfg.rnn.hidden < 1:
        raise ConfigError("[rnn]: cell must be 'vanilla' or 'gru' and hidden >= 1")


def synth_config(cfg):
    kw = dict(cfg.synth)
    kw.setdefault("seed", cfg.seed)
    if isinstance(kw.get("ramp"), dict):
        kw["ramp"] = Ramp(**kw["ramp"])
    return SynthConfig(**kw)


# ---------------------------------------------------------------------------
# Run bookkeeping
# ---------------------------------------------------------------------------

def code_version():
    """Package version plus ``git describe`` of the source tree when available."""
    here = Path(__file__).resolve().parent
    try:
        desc = subprocess.run(
            ["git", "describe", "--always", "--dirty"], cwd=here, capture_output=True, text=True, timeout=10,
        ).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        desc = ""
    return f"{__version__}+{desc}" if desc else __version__


def dataset_fingerprint(manifest):
    h = hashlib.sha256()
    h.update(json.dumps(manifest.to_json(), sort_keys=True).encode())
    for t in manifest.trials:
        h.update((manifest.root / t.file).read_bytes())
    return h.hexdigest()[:16]


def write_run_manifest(cfg, command, args, fingerprint=None):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "command": command,
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "version": code_version(),
        "dataset_fingerprint": fingerprint,
    }
    (out / f"run_{command}.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    if args.config:
        shutil.copyfile(args.config, out / "config.toml")


def _write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return path


def _write_json(path, doc):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(doc), indent=2, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------------------
# Feature cache
# ---------------------------------------------------------------------------

def _feature_key(cfg, fingerprint, band, measure):
    b = get_bands(cfg.band_scheme)[band]
    text = f"{fingerprint}|{b.name}:{b.lo_hz}:{b.hi_hz}|{measure}|{cfg.window_s}|{__version__}"
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def load_tables(cfg, manifest, fingerprint, bands, measures):
    """Feature tables for ``bands x measures``, extracting only what the cache lacks."""
    fdir = Path(cfg.out) / "features"
    fdir.mkdir(parents=True, exist_ok=True)
    index_path = fdir / "index.json"
    index = json.loads(index_path.read_text()) if index_path.exists() else {}
    out, todo = {}, []
    for b in bands:
        for m in measures:
            key = _feature_key(cfg, fingerprint, b, m)
            path = fdir / f"{b}_{m}.csv"
            if index.get(f"{b}_{m}") == key and path.exists():
                out[(b, m)] = FeatureTable.read_csv(path, measure=m, band=b)
                log.info("cache hit %s", path.name)
            else:
                todo.append((b, m))
    if todo:
        need_b = sorted({b for b, _ in todo}, key=BAND_NAMES.index)
        need_m = [m for m in MEASURES if m in {m for _, m in todo}]
        all_bands = get_bands(cfg.band_scheme)
        fresh = extract_features(manifest, [all_bands[b] for b in need_b], need_m,
                                 window_len_s=cfg.window_s, n_jobs=int(cfg.jobs))
        for (b, m), table in fresh.items():
            if (b, m) not in todo:
                continue
            path = fdir / f"{b}_{m}.csv"
            table.to_csv(path)
            # read back so cached and fresh runs see identical values
            out[(b, m)] = FeatureTable.read_csv(path, measure=m, band=b)
            index[f"{b}_{m}"] = _feature_key(cfg, fingerprint, b, m)
        index_path.write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")
    return out


def _k_for(cfg, measure, dim):
    want = (cfg.k or {}).get(measure, REPORTED_BEST_K[measure])
    return None if want >= dim else int(want)


def _grid_for(cfg, measure, dim):
    grid = (cfg.k_grid or {}).get(measure)
    if grid is None:
        grid = DE_K_GRID if measure == "de" else CONNECTIVITY_K_GRID
    return resolve_k_grid(grid, dim)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _open_dataset(cfg):
    try:
        manifest = load_manifest(cfg.dataset_dir)
    except DataError as exc:
        raise ConfigError(str(exc)) from None
    return manifest, dataset_fingerprint(manifest)


def cmd_synth(cfg, args):
    scfg = synth_config(cfg)
    t0 = time.perf_counter()
    manifest = generate(scfg, cfg.dataset_dir)
    log.info("wrote %d trials to %s in %.1f s", len(manifest.trials), cfg.dataset_dir, time.perf_counter() - t0)
    _write_json(Path(cfg.out) / "synth_config.json", scfg.to_dict())
    return dataset_fingerprint(manifest)


def cmd_extract(cfg, args):
    manifest, fp = _open_dataset(cfg)
    load_tables(cfg, manifest, fp, cfg.bands, cfg.measures)
    return fp


def _evaluate_table(cfg, table, k):
    return loo_evaluate(table, k=k, C=cfg.C, mode=cfg.fold_mode, n_jobs=int(cfg.jobs))


def cmd_evaluate(cfg, args):
    manifest, fp = _open_dataset(cfg)
    tables = load_tables(cfg, manifest, fp, cfg.bands, cfg.measures)
    rdir = Path(cfg.out) / "evaluate"
    rows, reports = [], {}
    for b in cfg.bands:
        for m in cfg.measures:
            t = tables[(b, m)]
            k = _k_for(cfg, m, t.dim)
            rep = _evaluate_table(cfg, t, k)
            reports[(b, m)] = rep
            rep.write_csv(rdir / f"{b}_{m}.csv")
            rep.write_json(rdir / f"{b}_{m}.json")
            rows.append((m, b, t.dim, k or t.dim, rep.accuracy, rep.std, rep.pooled_accuracy))
            log.info("%s/%s k=%s: %.3f +- %.3f", b, m, k or t.dim, rep.accuracy, rep.std)
    _write_csv(rdir / "band_table.csv", ["measure", "band", "dim", "k", "mean", "std", "pooled"], rows)

    sweep = []
    if cfg.sweep_band in cfg.bands:
        for m in cfg.measures:
            t = tables[(cfg.sweep_band, m)]
            for k in _grid_for(cfg, m, t.dim):
                rep = _evaluate_table(cfg, t, None if k >= t.dim else k)
                sweep.append((m, cfg.sweep_band, k, rep.accuracy, rep.std))
        no_sel = [(m, cfg.sweep_band, "all", r.accuracy, r.std) for m in cfg.measures
                  for r in [_evaluate_table(cfg, tables[(cfg.sweep_band, m)], None)]]
        _write_csv(rdir / "k_sweep.csv", ["measure", "band", "k", "mean", "std"], sweep + no_sel)

    fusion = []
    fb = cfg.fusion_band
    if fb in cfg.bands and "de" in cfg.measures:
        conn = [m for m in CONNECTIVITY if m in cfg.measures]
        for m in conn:
            rep = fuse_decision([reports[(fb, "de")], reports[(fb, m)]], name=f"{fb}_de+{m}")
            fusion.append((f"de+{m}", fb, reports[(fb, m)].accuracy, reports[(fb, "de")].accuracy,
                           rep.accuracy, rep.std))
        if len(conn) > 1:
            rep = fuse_decision([reports[(fb, m)] for m in ("de", *conn)], name=f"{fb}_all")
            fusion.append(("de+" + "+".join(conn), fb, np.nan, reports[(fb, "de")].accuracy, rep.accuracy, rep.std))
        _write_csv(rdir / "fusion.csv", ["fusion", "band", "connectivity_mean", "de_mean", "mean", "std"], fusion)
    return fp


def cmd_temporal(cfg, args):
    manifest, fp = _open_dataset(cfg)
    band = cfg.temporal_band
    tables = load_tables(cfg, manifest, fp, [band], cfg.measures)
    intervals = parse_intervals(cfg.intervals)
    by_measure = {m: tables[(band, m)] for m in cfg.measures}
    ks = {m: _k_for(cfg, m, t.dim) for m, t in by_measure.items()}
    prof = temporal_scan(
        by_measure, intervals, k=ks, C=cfg.C, mode=cfg.fold_mode, window_len_s=cfg.window_s, n_jobs=int(cfg.jobs),
    )
    tdir = Path(cfg.out) / "temporal"
    export_interval_grid(prof, tdir)
    whole = {m: _evaluate_table(cfg, t, ks[m]) for m, t in by_measure.items()}
    rows = []
    for m in cfg.measures:
        for lab, mean, std in zip(prof.labels, prof.interval_mean(m), prof.interval_std(m)):
            rows.append((m, lab, mean, std))
        rows.append((m, WHOLE_TRIAL.label, whole[m].accuracy, whole[m].std))
    _write_csv(tdir / "interval_table.csv", ["measure", "interval", "mean", "std"], rows)
    appr = []
    for m in cfg.measures:
        a1, j = prof.approach1(m)
        appr.append((m, a1, prof.labels[j], prof.approach2(m), prof.approach2(m) - a1))
    _write_csv(tdir / "approaches.csv", ["measure", "approach1", "approach1_interval", "approach2", "gain"], appr)
    summary = prof.summary()
    for m in cfg.measures:
        summary[m]["whole_trial"] = whole[m].accuracy
    _write_json(tdir / "summary.json", summary)
    return fp


def cmd_rnn(cfg, args):
    manifest, fp = _open_dataset(cfg)
    rs = cfg.rnn
    tables = load_tables(cfg, manifest, fp, [rs.band], rs.measures)
    rdir = Path(cfg.out) / "rnn"
    rows = []
    for m in rs.measures:
        t = tables[(rs.band, m)]
        k = rs.k if rs.k is not None and rs.k < t.dim else None
        ecfg = RnnEvalConfig(
            cell=rs.cell, hidden=rs.hidden, k=k, sequence_s=rs.sequence_s, step_s=rs.step_s,
            sigmas=tuple(rs.sigmas), mode=cfg.fold_mode, seed=cfg.seed,
            train=TrainConfig(rs.learning_rate, rs.epochs, rs.batch_size, rs.clip_norm),
        )
        curves, models = {}, {}
        rep = loo_evaluate_rnn(t, ecfg, n_jobs=int(cfg.jobs), curves=curves, models=models)
        svm = _evaluate_table(cfg, t, k)
        rep.write_csv(rdir / f"{rs.band}_{m}_{rs.cell}.csv")
        rep.write_json(rdir / f"{rs.band}_{m}_{rs.cell}.json")
        _write_csv(rdir / f"loss_{rs.band}_{m}_{rs.cell}.csv", ["fold", "epoch", "loss"],
                   [(f, i + 1, float(v)) for f in sorted(curves) for i, v in enumerate(curves[f])])
        mdir = rdir / "models" / f"{rs.band}_{m}_{rs.cell}"
        mdir.mkdir(parents=True, exist_ok=True)
        for f in sorted(models):
            models[f].save(mdir / (f.replace("/", "_") + ".bin"))
        rows.append((m, rs.band, k or t.dim, svm.accuracy, svm.std, rep.accuracy, rep.std, svm.accuracy - rep.accuracy))
    _write_csv(rdir / "comparison.csv",
               ["measure", "band", "k", "svm_mean", "svm_std", "rnn_mean", "rnn_std", "svm_minus_rnn"], rows)
    return fp


def _read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def _md_table(rows):
    head, body = rows[0], rows[1:]
    fmt = []
    for r in body:
        cells = []
        for v in r:
            try:
                f = float(v)
                cells.append(v if v.isdigit() else ("" if np.isnan(f) else f"{f:.4f}"))
            except ValueError:
                cells.append(v)
        fmt.append(cells)
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    lines += ["| " + " | ".join(r) + " |" for r in fmt]
    return "\n".join(lines)


def cmd_report(cfg, args):
    out = Path(cfg.out)
    sections = [
        ("Accuracy by band and feature", out / "evaluate" / "band_table.csv"),
        ("Feature-count sweep", out / "evaluate" / "k_sweep.csv"),
        ("Decision-level fusion", out / "evaluate" / "fusion.csv"),
        ("Accuracy by time interval", out / "temporal" / "interval_table.csv"),
        ("Best interval: averaged vs per subject", out / "temporal" / "approaches.csv"),
        ("SVM vs recurrent model", out / "rnn" / "comparison.csv"),
    ]
    parts = ["# Run report", ""]
    found = 0
    for title, path in sections:
        if path.exists():
            found += 1
            parts += [f"## {title}", "", f"Source: `{path.relative_to(out)}`", "", _md_table(_read_rows(path)), ""]
    if not found:
        raise ConfigError(f"{out}: no results to report; run evaluate, temporal or rnn first")
    (out / "report.md").write_text("\n".join(parts))
    return None


_HANDLERS = {
    "synth": cmd_synth, "extract": cmd_extract, "evaluate": cmd_evaluate,
    "temporal": cmd_temporal, "rnn": cmd_rnn, "report": cmd_report,
}


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _global_flags(p, suppress):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="TOML configuration file")
    p.add_argument("--seed", type=int, default=d, help="root random seed")
    p.add_argument("--out", default=d, help="output directory")
    p.add_argument("--jobs", type=int, default=d, help="worker threads")
    p.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS if suppress else 0)


def build_parser():
    p = argparse.ArgumentParser(prog="eegconn", description="EEG connectivity emotion-classification pipeline")
    _global_flags(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True)
    data_flags = argparse.ArgumentParser(add_help=False)
    data_flags.add_argument("--dataset", help="dataset directory (default <out>/dataset)")
    data_flags.add_argument("--band-scheme", dest="band_scheme", choices=["canonical", "alternate"])

    s = sub.add_parser("synth", help="generate a synthetic dataset", parents=[data_flags])
    s.add_argument("--subjects", type=int)
    s.add_argument("--sessions", type=int)
    s.add_argument("--clips", type=int)
    s.add_argument("--channels", type=int)
    s.add_argument("--trial-len", dest="trial_len", type=float, help="seconds")
    s.add_argument("--noise", type=float)
    s.add_argument("--kappa", type=float, help="constant coupling (e.g. 0 for a null dataset)")

    for name, hlp in (("extract", "compute feature CSVs"), ("evaluate", "leave-one-out evaluation reports")):
        c = sub.add_parser(name, help=hlp, parents=[data_flags])
        c.add_argument("--bands", help="comma-separated band names")
        c.add_argument("--measures", help="comma-separated: de,pearson,coherence,plv")
        if name == "evaluate":
            c.add_argument("--k", type=int, help="selected features for every measure")
            c.add_argument("-C", dest="C", type=float, help="SVM regularisation")
            c.add_argument("--fold-mode", dest="fold_mode", choices=["clip", "session_trial"])

    t = sub.add_parser("temporal", help="sliding-interval accuracy scan", parents=[data_flags])
    t.add_argument("--band")
    t.add_argument("--measures")
    t.add_argument("--intervals", help="'canonical' or start:end pairs, e.g. 0:60,140:end")
    t.add_argument("--k", type=int)
    t.add_argument("-C", dest="C", type=float)
    t.add_argument("--fold-mode", dest="fold_mode", choices=["clip", "session_trial"])

    r = sub.add_parser("rnn", help="recurrent baseline vs SVM", parents=[data_flags])
    r.add_argument("--band")
    r.add_argument("--measures", dest="rnn_measures")
    r.add_argument("--cell", choices=["vanilla", "gru"])
    r.add_argument("--hidden", type=int)
    r.add_argument("--epochs", type=int)
    r.add_argument("--fold-mode", dest="fold_mode", choices=["clip", "session_trial"])

    sub.add_parser("report", help="collect tables into report.md")
    for c in sub.choices.values():
        _global_flags(c, suppress=True)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    verbosity = getattr(args, "verbose", 0) or 0
    logging.basicConfig(
        level=logging.WARNING - 10 * min(verbosity, 2), stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = resolve_config(args)
        Path(cfg.out).mkdir(parents=True, exist_ok=True)
    except (ConfigError, ValueError, TypeError, OSError) as exc:
        print(f"eegconn: error: {exc}", file=sys.stderr)
        return 1
    try:
        fp = _HANDLERS[args.command](cfg, args)
        write_run_manifest(cfg, args.command, args, fp)
    except ConfigError as exc:
        print(f"eegconn: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - any failure past validation is a compute error
        log.debug("compute failure", exc_info=True)
        print(f"eegconn: compute error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
