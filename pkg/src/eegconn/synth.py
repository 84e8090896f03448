"""Synthetic multichannel EEG with planted, class-dependent phase coupling.

Every channel is a sum of band-limited oscillators, one per band, each a
carrier at the band centre whose phase performs a random walk; the walk is
confined to the band by a zero-phase band-pass. On top sits white noise.

For a trial of class c, each channel pair in c's template shares a common
oscillator in the coupling band. With coupling strength ``kappa(t)`` the
coupling-band component of channel a is

    sqrt(1 - kappa) * own_a(t) + sqrt(kappa) * shared(t)

so its power does not depend on ``kappa`` and the pair's in-band
correlation equals ``kappa``. ``kappa(t)`` follows a ramp over trial time,
scaled by a per-trial gain that models clip-to-clip variation in how
strongly the stimulus engages the subject.

Optionally a state left over from before the clip lingers at its start:
the template of a class drawn independently of the trial's label is mixed
in with strength ``carryover * (1 - f(t))`` that fades as the clip's own
state builds. By default f is the ramp's progress from 0 to 1; with
``linger_s`` set, f rises linearly from trial onset to ``linger_s``. Being independent
of the label, the lingering template is pure structured nuisance. It is on
by default (0.8 fading out over the first 140 s): the early windows then
mislead a classifier trained on whole trials, which is what makes the late
interval beat the whole signal. Pass ``carryover=0`` for plain ramped or
constant coupling. When a
channel sits in several active pairs, each pair's share is taken from that
channel's own oscillator, keeping the band power fixed.
"""

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal

from .data import DatasetManifest, EmotionLabel, TrialEntry, get_band, get_bands, write_manifest, write_recording
from .preprocess import FILTER_ORDER

_TEMPLATE_STREAM = 0x7E3A


@dataclass(frozen=True)
class Ramp:
    """Piecewise-linear coupling profile: ``lo`` before ``t0_s``, ``hi`` after ``t1_s``."""

    lo: float = 0.1
    hi: float = 0.9
    t0_s: float = 60.0
    t1_s: float = 140.0

    def __post_init__(self):
        if not (0.0 <= self.lo <= 1.0 and 0.0 <= self.hi <= 1.0):
            raise ValueError("ramp levels must lie in [0, 1]")
        if self.hi < self.lo:
            raise ValueError("ramp must be non-decreasing (hi >= lo)")
        if self.t1_s < self.t0_s:
            raise ValueError("ramp end precedes its start")

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        return self.lo + (self.hi - self.lo) * self.progress(t)

    def progress(self, t):
        """Fraction of the ramp completed at time ``t`` (0 before, 1 after)."""
        t = np.asarray(t, dtype=np.float64)
        if self.t1_s == self.t0_s:
            return np.where(t < self.t0_s, 0.0, 1.0)
        return np.clip((t - self.t0_s) / (self.t1_s - self.t0_s), 0.0, 1.0)

    @classmethod
    def constant(cls, kappa):
        return cls(kappa, kappa, 0.0, 0.0)


@dataclass(frozen=True)
class SynthConfig:
    n_subjects: int = 3
    n_sessions: int = 1
    n_clips: int = 15
    trial_len_s: float = 240.0
    fs_hz: float = 200.0
    n_channels: int = 16
    pairs_per_class: int = 4
    coupling_band: str = "gamma"
    ramp: Ramp = field(default_factory=Ramp)
    gain_spread: float = 0.5  # per-trial kappa multiplier ~ U(1 - spread, 1)
    carryover: float = 0.8  # initial strength of the lingering (label-independent) template
    linger_s: float = 140.0  # fade-out time of the lingering template; None follows the ramp
    noise: float = 1.0  # white-noise std relative to one oscillator's std
    linewidth: float = 0.5  # phase-walk linewidth as a fraction of the bandwidth
    seed: int = 0

    def __post_init__(self):
        for name in ("n_subjects", "n_sessions", "n_clips", "n_channels", "pairs_per_class"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
        if self.n_clips < 3:
            raise ValueError("need at least 3 clips (one per class)")
        if 3 * self.pairs_per_class > self.n_channels * (self.n_channels - 1) // 2:
            raise ValueError("not enough channel pairs for distinct class templates")
        if not self.trial_len_s >= 2.0 or not self.fs_hz > 0:
            raise ValueError("trial_len_s must be >= 2 and fs_hz positive")
        if not 0.0 <= self.gain_spread <= 1.0:
            raise ValueError("gain_spread must lie in [0, 1]")
        if isinstance(self.ramp, dict):
            object.__setattr__(self, "ramp", Ramp(**self.ramp))
        if self.linger_s is not None and not self.linger_s > 0:
            raise ValueError("linger_s must be positive")
        # coupling plus lingering is piecewise linear, so its peak sits on a breakpoint
        knots = np.array([0.0, self.ramp.t0_s, self.ramp.t1_s, self.linger_s or 0.0])
        peak = float(np.max(self.ramp(knots) + self.carryover * (1.0 - _fade_progress(self, knots))))
        if self.carryover < 0 or peak > 1.0 + 1e-12:
            raise ValueError(f"carryover must be >= 0 and coupling plus lingering <= 1 (peak {peak:.3g})")
        if self.noise < 0 or self.linewidth <= 0:
            raise ValueError("noise must be >= 0 and linewidth > 0")
        band = get_band(self.coupling_band)
        band.check(self.fs_hz)

    @property
    def n_samples(self):
        return int(round(self.trial_len_s * self.fs_hz))

    def channel_names(self):
        return tuple(f"ch{i:02d}" for i in range(self.n_channels))

    def to_dict(self):
        return asdict(self)


def clip_labels(n_clips):
    """Balanced class order for the clips: 0, 1, 2, 0, 1, 2, ..."""
    return [EmotionLabel(c % 3) for c in range(n_clips)]


def class_templates(config):
    """Planted channel pairs per class, as a ``[3, pairs_per_class, 2]`` array.

    Pairs within a class touch distinct channels where possible; no pair is
    shared between classes.
    """
    rng = np.random.default_rng([config.seed, _TEMPLATE_STREAM])
    n = config.n_channels
    used = set()
    out = np.zeros((3, config.pairs_per_class, 2), dtype=np.int64)
    for cls in range(3):
        chans = set()
        for p in range(config.pairs_per_class):
            for attempt in range(10_000):
                a, b = sorted(rng.choice(n, size=2, replace=False).tolist())
                # fall back to overlapping pairs when a disjoint one cannot be found
                disjoint = a not in chans and b not in chans or attempt >= 1000
                if (a, b) not in used and (disjoint or len(chans) >= n - 1):
                    break
            else:  # pragma: no cover - guarded by the config check
                raise RuntimeError("could not place class template pairs")
            used.add((a, b))
            chans.update((a, b))
            out[cls, p] = (a, b)
    return out


def _oscillators(rng, n_osc, n_samples, fs, band, linewidth):
    """``n_osc`` unit-variance band-limited oscillators confined to ``band``."""
    centre = 0.5 * (band.lo_hz + band.hi_hz)
    hi = min(band.hi_hz, 0.999 * fs / 2)
    width_hz = linewidth * (hi - band.lo_hz)
    # Wiener phase noise with diffusion D has a Lorentzian line of FWHM D / pi.
    step = np.sqrt(2.0 * np.pi * width_hz / fs)
    phase = np.cumsum(step * rng.standard_normal((n_osc, n_samples)), axis=1)
    phase += rng.uniform(0, 2 * np.pi, size=(n_osc, 1))
    t = np.arange(n_samples) / fs
    x = np.cos(2 * np.pi * centre * t + phase)
    sos = signal.butter(FILTER_ORDER, [band.lo_hz, hi], btype="bandpass", output="sos", fs=fs)
    x = signal.sosfiltfilt(sos, x, axis=-1)
    x /= x.std(axis=1, keepdims=True)
    return x


def _fade_progress(config, t):
    if config.linger_s is None:
        return config.ramp.progress(t)
    return np.clip(t / config.linger_s, 0.0, 1.0)


def trial_rng(config, subject, session, clip):
    return np.random.default_rng([config.seed, subject, session, clip])


def simulate_trial(config, label, rng, templates=None):
    """One trial's ``[n_channels x n_samples]`` signal and its per-sample kappa."""
    templates = class_templates(config) if templates is None else templates
    n, fs, ch = config.n_samples, config.fs_hz, config.n_channels
    coupling = get_band(config.coupling_band)
    t = np.arange(n) / fs
    x = np.zeros((ch, n))
    kappa = None
    for band in get_bands().values():
        if band.lo_hz >= fs / 2:
            continue
        osc = _oscillators(rng, ch, n, fs, band, config.linewidth)
        if band.name == coupling.name:
            gain = rng.uniform(1.0 - config.gain_spread, 1.0)
            lingering = int(rng.integers(3))
            kappa = gain * config.ramp(t)
            mixes = [(p, kappa) for p in templates[int(label)]]
            if config.carryover > 0:
                linger = config.carryover * (1.0 - _fade_progress(config, t))
                mixes += [(p, linger) for p in templates[lingering]]
            shared = _oscillators(rng, len(mixes), n, fs, band, config.linewidth)
            own = np.ones((ch, n))
            mixed = np.zeros((ch, n))
            for ((a, b), k), s in zip(mixes, shared):
                for c in (a, b):
                    own[c] -= k
                    mixed[c] += np.sqrt(k) * s
            osc = np.sqrt(np.clip(own, 0.0, 1.0)) * osc + mixed
        x += osc
    if config.noise > 0:
        x += config.noise * rng.standard_normal((ch, n))
    return x, kappa


def generate(config, root):
    """Write a dataset (manifest + little-endian f32 files) under ``root``.

    Output is a pure function of ``config``: each trial draws from its own
    generator seeded by ``(seed, subject, session, clip)``, so trials can be
    produced in any order.
    """
    root = Path(root)
    (root / "data").mkdir(parents=True, exist_ok=True)
    templates = class_templates(config)
    labels = clip_labels(config.n_clips)
    entries = []
    for s in range(config.n_subjects):
        subject = f"s{s + 1:02d}"
        for sess in range(1, config.n_sessions + 1):
            for clip in range(1, config.n_clips + 1):
                label = labels[clip - 1]
                x, _ = simulate_trial(config, label, trial_rng(config, s, sess, clip), templates)
                rel = f"data/{subject}_{sess}_{clip:02d}.f32"
                write_recording(root / rel, x)
                entries.append(TrialEntry(subject, sess, clip, label, rel, config.n_samples))
    manifest = DatasetManifest(root, float(config.fs_hz), config.channel_names(), tuple(entries))
    write_manifest(manifest)
    return manifest


def planted_pairs(config, label=None):
    """Planted pairs as (i, j) tuples, for one class or all classes."""
    t = class_templates(config)
    rows = t.reshape(-1, 2) if label is None else t[int(label)]
    return [tuple(int(v) for v in r) for r in rows]
