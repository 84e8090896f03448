"""Domain types, the on-disk dataset layout, and ingestion.

Dataset layout
--------------
A dataset directory holds ``manifest.json``::

    {
      "fs_hz": 200.0,
      "channels": ["FP1", "FPZ", ...],
      "trials": [
        {"subject": "s01", "session": 1, "trial": 1, "label": "positive",
         "file": "s01_1_01.f32", "n_samples": 48000},
        ...
      ]
    }

and one data file per trial. ``.f32`` files are raw little-endian float32,
channel-major (all of channel 0, then channel 1, ...), no header. ``.csv``
files have a header row of channel names and one row per sample.

Labels may be given as the strings ``negative``/``neutral``/``positive`` or
as the integers 0/1/2.
"""

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np


class DataError(ValueError):
    """Invalid dataset content (manifest or trial payload)."""


class EmotionLabel(enum.IntEnum):
    NEGATIVE = 0
    NEUTRAL = 1
    POSITIVE = 2

    @classmethod
    def parse(cls, value):
        """Accept an ``EmotionLabel``, its integer code, or its lowercase name."""
        if isinstance(value, cls):
            return value
        if isinstance(value, bool):
            raise DataError(f"unknown label {value!r}")
        if isinstance(value, (int, np.integer)):
            try:
                return cls(int(value))
            except ValueError:
                raise DataError(f"unknown label {value!r}") from None
        if isinstance(value, str):
            key = value.strip().upper()
            if key in cls.__members__:
                return cls[key]
            if key.lstrip("-").isdigit():
                return cls.parse(int(key))
        raise DataError(f"unknown label {value!r}")


@dataclass(frozen=True)
class Band:
    name: str
    lo_hz: float
    hi_hz: float

    def __post_init__(self):
        if not 0 < self.lo_hz < self.hi_hz:
            raise ValueError(f"band {self.name}: need 0 < lo < hi, got {self.lo_hz}, {self.hi_hz}")

    def check(self, fs_hz):
        if self.hi_hz > fs_hz / 2:
            raise ValueError(f"band {self.name}: upper edge {self.hi_hz} Hz exceeds Nyquist {fs_hz / 2} Hz")
        return self


# Edges used for the preprocessing band split (default) and the alternative
# table with integer-closed edges, selectable with scheme="alternate".
_BAND_TABLES = {
    "canonical": {
        "delta": (1.0, 4.0),
        "theta": (4.0, 8.0),
        "alpha": (8.0, 14.0),
        "beta": (14.0, 31.0),
        "gamma": (31.0, 50.0),
    },
    "alternate": {
        "delta": (1.0, 3.0),
        "theta": (4.0, 7.0),
        "alpha": (8.0, 13.0),
        "beta": (14.0, 30.0),
        "gamma": (31.0, 50.0),
    },
}

BAND_NAMES = ("delta", "theta", "alpha", "beta", "gamma")


def get_bands(scheme="canonical"):
    """Return ``{name: Band}`` for the requested edge table."""
    try:
        table = _BAND_TABLES[scheme]
    except KeyError:
        raise ValueError(f"unknown band scheme {scheme!r}; choose from {sorted(_BAND_TABLES)}") from None
    return {name: Band(name, lo, hi) for name, (lo, hi) in table.items()}


def get_band(name, scheme="canonical"):
    bands = get_bands(scheme)
    if name not in bands:
        raise ValueError(f"unknown band {name!r}; choose from {list(bands)}")
    return bands[name]


TrialKey = tuple  # (subject_id, session_id, trial_id)


@dataclass(frozen=True)
class Recording:
    subject_id: str
    session_id: int
    trial_id: int
    label: EmotionLabel
    fs_hz: float
    channels: tuple
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64, copy=True)
        if samples.ndim != 2:
            raise DataError(f"samples must be 2-D [channels x samples], got shape {samples.shape}")
        if not self.fs_hz > 0:
            raise DataError(f"fs_hz must be positive, got {self.fs_hz}")
        n_ch, n = samples.shape
        if n_ch < 2:
            raise DataError(f"need at least 2 channels, got {n_ch}")
        if n_ch != len(self.channels):
            raise DataError(f"{len(self.channels)} channel names for {n_ch} rows")
        if len(set(self.channels)) != len(self.channels):
            raise DataError("channel names must be unique")
        if n < self.fs_hz * 2:
            raise DataError(f"need at least one 2 s window ({self.fs_hz * 2:g} samples), got {n}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "label", EmotionLabel.parse(self.label))

    @property
    def key(self):
        return (self.subject_id, self.session_id, self.trial_id)

    @property
    def n_samples(self):
        return self.samples.shape[1]

    def with_samples(self, samples, fs_hz=None):
        """Copy of this recording with new samples (and optionally a new rate)."""
        return Recording(
            self.subject_id, self.session_id, self.trial_id, self.label,
            self.fs_hz if fs_hz is None else fs_hz, self.channels, samples,
        )


@dataclass(frozen=True)
class TrialEntry:
    subject: str
    session: int
    trial: int
    label: EmotionLabel
    file: str
    n_samples: int

    @property
    def key(self):
        return (self.subject, self.session, self.trial)


@dataclass(frozen=True)
class DatasetManifest:
    root: Path
    fs_hz: float
    channels: tuple
    trials: tuple

    def keys(self):
        return [t.key for t in self.trials]

    def entry(self, key):
        for t in self.trials:
            if t.key == tuple(key):
                return t
        raise KeyError(f"trial {key!r} not in manifest")

    def subjects(self):
        return sorted({t.subject for t in self.trials})

    def to_json(self):
        return {
            "fs_hz": self.fs_hz,
            "channels": list(self.channels),
            "trials": [
                {
                    "subject": t.subject, "session": t.session, "trial": t.trial,
                    "label": t.label.name.lower(), "file": t.file, "n_samples": t.n_samples,
                }
                for t in self.trials
            ],
        }


def _parse_int(value, what, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise DataError(f"{where}: {what} must be an integer, got {value!r}")
    return int(value)


def _line_of(text, pos):
    return text.count("\n", 0, pos) + 1


def _trial_lines(text):
    """Best-effort line numbers of each object inside the ``trials`` array."""
    start = text.find('"trials"')
    if start < 0:
        return []
    lines = []
    depth = 0
    in_str = False
    escape = False
    for pos in range(text.find("[", start), len(text)):
        ch = text[pos]
        if in_str:
            if escape:
                escape = False
            elif ch == "\\":
                escape = True
            elif ch == '"':
                in_str = False
            continue
        if ch == '"':
            in_str = True
        elif ch in "[{":
            depth += 1
            if ch == "{" and depth == 2:
                lines.append(_line_of(text, pos))
        elif ch in "]}":
            depth -= 1
            if depth == 0:
                break
    return lines


def load_manifest(path):
    """Parse and validate a dataset manifest.

    ``path`` may be the ``manifest.json`` file or the dataset directory.
    Every problem is reported as :class:`DataError` naming the file and the
    line of the offending trial entry.
    """
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    if not path.exists():
        raise DataError(f"{path}: manifest not found")
    text = path.read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(raw, dict):
        raise DataError(f"{path}: top level must be an object")
    for name in ("fs_hz", "channels", "trials"):
        if name not in raw:
            raise DataError(f"{path}: missing field {name!r}")

    fs = raw["fs_hz"]
    if isinstance(fs, bool) or not isinstance(fs, (int, float)) or not fs > 0:
        raise DataError(f"{path}: fs_hz must be a positive number, got {fs!r}")
    channels = raw["channels"]
    if not isinstance(channels, list) or not all(isinstance(c, str) for c in channels):
        raise DataError(f"{path}: channels must be an array of strings")
    if len(channels) < 2:
        raise DataError(f"{path}: need at least 2 channels")
    if len(set(channels)) != len(channels):
        raise DataError(f"{path}: duplicate channel names")
    if not isinstance(raw["trials"], list):
        raise DataError(f"{path}: trials must be an array")

    lines = _trial_lines(text)
    root = path.parent
    entries = []
    seen = {}
    for idx, item in enumerate(raw["trials"]):
        where = f"{path}:{lines[idx]}" if idx < len(lines) else f"{path}: trials[{idx}]"
        if not isinstance(item, dict):
            raise DataError(f"{where}: trial entry must be an object")
        missing = [k for k in ("subject", "session", "trial", "label", "file", "n_samples") if k not in item]
        if missing:
            raise DataError(f"{where}: missing field(s) {missing}")
        session = _parse_int(item["session"], "session", where)
        trial = _parse_int(item["trial"], "trial", where)
        n_samples = _parse_int(item["n_samples"], "n_samples", where)
        if session < 1 or trial < 1:
            raise DataError(f"{where}: session and trial ids start at 1")
        if n_samples < 2 * fs:
            raise DataError(f"{where}: n_samples={n_samples} shorter than one 2 s window")
        try:
            label = EmotionLabel.parse(item["label"])
        except DataError:
            raise DataError(f"{where}: unknown label {item['label']!r}") from None
        key = (str(item["subject"]), session, trial)
        if key in seen:
            raise DataError(f"{where}: duplicate trial key {key} (first at {seen[key]})")
        seen[key] = where
        file = str(item["file"])
        if not (root / file).is_file():
            raise DataError(f"{where}: missing data file {file!r}")
        entries.append(TrialEntry(key[0], session, trial, label, file, n_samples))

    return DatasetManifest(root, float(fs), tuple(channels), tuple(entries))


def write_manifest(manifest, path=None):
    path = Path(path) if path is not None else manifest.root / "manifest.json"
    path.write_text(json.dumps(manifest.to_json(), indent=2) + "\n")
    return path


def write_recording(path, samples):
    """Write ``[n_channels x n_samples]`` as channel-major little-endian float32."""
    samples = np.asarray(samples)
    if samples.ndim != 2:
        raise DataError(f"samples must be 2-D, got shape {samples.shape}")
    np.ascontiguousarray(samples, dtype="<f4").tofile(path)
    return Path(path)


def _read_f32(path, n_ch, n_samples):
    raw = Path(path).read_bytes()
    expected = 4 * n_ch * n_samples
    if len(raw) < expected:
        raise DataError(f"{path}: truncated payload ({len(raw)} bytes, expected {expected})")
    if len(raw) != expected:
        raise DataError(f"{path}: shape mismatch ({len(raw)} bytes, manifest implies {expected})")
    return np.frombuffer(raw, dtype="<f4").reshape(n_ch, n_samples)


def _read_csv(path, channels, n_samples):
    with open(path) as fh:
        header = [h.strip() for h in fh.readline().strip().split(",")]
        if header != list(channels):
            raise DataError(f"{path}:1: header {header[:4]}... does not match manifest channels")
        data = np.loadtxt(fh, delimiter=",", ndmin=2, dtype=np.float64)
    if data.shape[1] != len(channels):
        raise DataError(f"{path}: {data.shape[1]} columns for {len(channels)} channels")
    if data.shape[0] < n_samples:
        raise DataError(f"{path}: truncated payload ({data.shape[0]} rows, expected {n_samples})")
    if data.shape[0] != n_samples:
        raise DataError(f"{path}: shape mismatch ({data.shape[0]} rows, manifest says {n_samples})")
    return data.T


def load_recording(manifest, key):
    """Read one trial's samples as a :class:`Recording`."""
    entry = manifest.entry(key)
    path = manifest.root / entry.file
    if path.suffix.lower() == ".csv":
        samples = _read_csv(path, manifest.channels, entry.n_samples)
    else:
        samples = _read_f32(path, len(manifest.channels), entry.n_samples)
    return Recording(
        entry.subject, entry.session, entry.trial, entry.label,
        manifest.fs_hz, manifest.channels, samples,
    )


def iter_recordings(manifest, subject: Optional[str] = None):
    for entry in manifest.trials:
        if subject is None or entry.subject == subject:
            yield load_recording(manifest, entry.key)
