"""Small recurrent classifiers over sequences of window feature vectors.

Two cells are provided. The vanilla cell is

    h_t = sigmoid(W_x x_t + W_h h_{t-1} + b_h)

and the GRU cell uses an update gate z, a reset gate r and a candidate
state c:

    z_t = sigmoid(W_z x_t + U_z h_{t-1} + b_z)
    r_t = sigmoid(W_r x_t + U_r h_{t-1} + b_r)
    c_t = tanh(W_c x_t + U_c (r_t * h_{t-1}) + b_c)
    h_t = (1 - z_t) * h_{t-1} + z_t * c_t

Both start from h_0 = 0 and classify from the final state through a
softmax layer, y = softmax(W_y h_T + b_y). Training minimises the mean
cross-entropy by mini-batch gradient descent with backpropagation through
time and global-norm gradient clipping.

Everything here is batched numpy: inputs are ``[batch, T, d]`` and weight
matrices act on row vectors (``x @ W.T``).
"""

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit, log_softmax, softmax

from .classify import EvalReport, Standardizer, _check_classes, fingerprint_rows, fold_splits
from .selection import fisher_scores, select_top_k

log = logging.getLogger(__name__)

SEQUENCE_S = 180.0
STEP_S = 2.0
AUGMENT_SIGMAS = (0.001, 0.004, 0.008, 0.012)

_PARAM_NAMES = {
    "vanilla": ("W_x", "W_h", "b_h", "W_y", "b_y"),
    "gru": ("W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_c", "U_c", "b_c", "W_y", "b_y"),
}


class TrainingError(RuntimeError):
    """Training diverged; the message echoes the configuration."""


class NonFiniteError(FloatingPointError):
    """A forward pass produced a non-finite activation."""


# ---------------------------------------------------------------------------
# Sequences
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SequenceSample:
    features: np.ndarray = field(repr=False)  # [T, d]
    label: int
    key: tuple  # (subject, session, trial)
    offset: int  # trial window index of step 0
    sigma: float = 0.0  # augmentation noise level, 0 for originals

    @property
    def length(self):
        return self.features.shape[0]


def _trial_blocks(table):
    """``{trial_key: rows sorted by window}``, checking windows are contiguous."""
    blocks = {}
    for i, k in enumerate(table.trial_keys()):
        blocks.setdefault(k, []).append(i)
    out = {}
    for k in sorted(blocks, key=lambda k: (str(k[0]), k[1], k[2])):
        rows = np.asarray(blocks[k])
        rows = rows[np.argsort(table.window[rows], kind="stable")]
        w = table.window[rows]
        if np.any(np.diff(w) != 1):
            raise ValueError(f"trial {k}: window indices are not contiguous")
        out[k] = rows
    return out


def make_sequences(table, window_len_s=SEQUENCE_S, step_s=STEP_S, epoch_s=2.0):
    """Overlapping fixed-length sequences from each trial of a window table.

    A sequence spans ``window_len_s`` of consecutive windows; successive
    sequences start ``step_s`` apart. Step ``k`` of a sequence starting at
    offset ``o`` is the trial's window ``o + k``.
    """
    T = int(round(window_len_s / epoch_s))
    step = int(round(step_s / epoch_s))
    if T < 1 or step < 1:
        raise ValueError("sequence length and step must cover at least one window")
    out = []
    for k, rows in _trial_blocks(table).items():
        if rows.size < T:
            raise ValueError(f"trial {k} has {rows.size} windows, shorter than one {T}-window sequence")
        x = table.values[rows]
        first = int(table.window[rows[0]])
        label = int(table.label[rows[0]])
        for start in range(0, rows.size - T + 1, step):
            out.append(SequenceSample(x[start:start + T], label, k, first + start))
    return out


def augment_gaussian(samples, sigmas=AUGMENT_SIGMAS, seed=0):
    """Originals followed by one noisy copy per sigma, each element perturbed by N(0, sigma^2)."""
    sigmas = tuple(float(s) for s in sigmas)
    if any(s <= 0 for s in sigmas):
        raise ValueError("augmentation sigmas must be positive")
    samples = list(samples)
    rng = np.random.default_rng(seed)
    out = list(samples)
    for sigma in sigmas:
        for s in samples:
            noisy = s.features + sigma * rng.standard_normal(s.features.shape)
            out.append(SequenceSample(noisy, s.label, s.key, s.offset, sigma))
    return out


def stack(samples):
    X = np.stack([s.features for s in samples])
    y = np.array([s.label for s in samples], dtype=np.int64)
    return X, y


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 200
    batch_size: int = 32
    clip_norm: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0 or self.epochs < 0 or self.batch_size < 1:
            raise ValueError("learning_rate and epochs must be >= 0, batch_size >= 1")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive (or None)")


@dataclass
class RecurrentModel:
    cell: str
    n_inputs: int
    hidden: int
    n_classes: int
    params: dict = field(repr=False)

    def __post_init__(self):
        if self.cell not in _PARAM_NAMES:
            raise ValueError(f"unknown cell {self.cell!r}; choose from {sorted(_PARAM_NAMES)}")
        if self.hidden < 1 or self.n_inputs < 1 or self.n_classes < 2:
            raise ValueError("hidden size and input size must be positive, n_classes >= 2")
        shapes = param_shapes(self.cell, self.n_inputs, self.hidden, self.n_classes)
        for name, shape in shapes.items():
            p = self.params.get(name)
            if p is None or p.shape != shape:
                raise ValueError(f"parameter {name} must have shape {shape}")
            if not np.all(np.isfinite(p)):
                raise ValueError(f"parameter {name} has non-finite entries")

    @classmethod
    def init(cls, cell, n_inputs, hidden=16, n_classes=3, seed=0):
        """Uniform(-1/sqrt(hidden), 1/sqrt(hidden)) weights, zero biases."""
        rng = np.random.default_rng(seed)
        bound = 1.0 / np.sqrt(hidden)
        params = {}
        for name, shape in param_shapes(cell, n_inputs, hidden, n_classes).items():
            if name.startswith("b_"):
                params[name] = np.zeros(shape)
            else:
                params[name] = rng.uniform(-bound, bound, size=shape)
        return cls(cell, n_inputs, hidden, n_classes, params)

    @property
    def names(self):
        return _PARAM_NAMES[self.cell]

    def copy(self):
        return RecurrentModel(self.cell, self.n_inputs, self.hidden, self.n_classes,
                              {k: v.copy() for k, v in self.params.items()})

    def flat(self):
        return np.concatenate([self.params[n].ravel() for n in self.names])

    def with_flat(self, vec):
        vec = np.asarray(vec, dtype=np.float64)
        shapes = param_shapes(self.cell, self.n_inputs, self.hidden, self.n_classes)
        params, at = {}, 0
        for n in self.names:
            size = int(np.prod(shapes[n]))
            params[n] = vec[at:at + size].reshape(shapes[n]).copy()
            at += size
        if at != vec.size:
            raise ValueError(f"flat vector has {vec.size} entries, model needs {at}")
        return RecurrentModel(self.cell, self.n_inputs, self.hidden, self.n_classes, params)

    def save(self, path):
        """Write ``path`` (float64 little-endian blob) and ``path.json`` (shapes)."""
        path = Path(path)
        np.ascontiguousarray(self.flat(), dtype="<f8").tofile(path)
        shapes = param_shapes(self.cell, self.n_inputs, self.hidden, self.n_classes)
        desc = {
            "cell": self.cell, "n_inputs": self.n_inputs, "hidden": self.hidden, "n_classes": self.n_classes,
            "dtype": "<f8", "params": [{"name": n, "shape": list(shapes[n])} for n in self.names],
        }
        Path(str(path) + ".json").write_text(json.dumps(desc, indent=2) + "\n")
        return path

    @classmethod
    def load(cls, path):
        path = Path(path)
        desc = json.loads(Path(str(path) + ".json").read_text())
        vec = np.fromfile(path, dtype=desc.get("dtype", "<f8")).astype(np.float64)
        shell = cls.init(desc["cell"], desc["n_inputs"], desc["hidden"], desc["n_classes"])
        return shell.with_flat(vec)


def param_shapes(cell, n_inputs, hidden, n_classes):
    d, h, o = n_inputs, hidden, n_classes
    if cell == "vanilla":
        return {"W_x": (h, d), "W_h": (h, h), "b_h": (h,), "W_y": (o, h), "b_y": (o,)}
    if cell == "gru":
        shapes = {}
        for g in ("z", "r", "c"):
            shapes[f"W_{g}"] = (h, d)
            shapes[f"U_{g}"] = (h, h)
            shapes[f"b_{g}"] = (h,)
        shapes["W_y"] = (o, h)
        shapes["b_y"] = (o,)
        return shapes
    raise ValueError(f"unknown cell {cell!r}")


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------

def _check_input(model, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[2] != model.n_inputs:
        raise ValueError(f"expected input [batch, T, {model.n_inputs}], got {X.shape}")
    return X


def _check_finite(h, t):
    if not np.all(np.isfinite(h)):
        raise NonFiniteError(f"non-finite hidden state at step {t}")


def forward(model, X):
    """Class probabilities ``[batch, n_classes]`` and the cache for :func:`backward`."""
    X = _check_input(model, X)
    p = model.params
    B, T, _ = X.shape
    H = model.hidden
    h = np.zeros((B, H))
    cache = {"X": X, "h": [h]}
    if model.cell == "vanilla":
        xin = X @ p["W_x"].T + p["b_h"]  # input terms for every step at once
        for t in range(T):
            h = expit(xin[:, t] + h @ p["W_h"].T)
            _check_finite(h, t)
            cache["h"].append(h)
    else:
        xz = X @ p["W_z"].T + p["b_z"]
        xr = X @ p["W_r"].T + p["b_r"]
        xc = X @ p["W_c"].T + p["b_c"]
        cache.update(z=[], r=[], c=[])
        for t in range(T):
            z = expit(xz[:, t] + h @ p["U_z"].T)
            r = expit(xr[:, t] + h @ p["U_r"].T)
            c = np.tanh(xc[:, t] + (r * h) @ p["U_c"].T)
            h = (1.0 - z) * h + z * c
            _check_finite(h, t)
            cache["z"].append(z)
            cache["r"].append(r)
            cache["c"].append(c)
            cache["h"].append(h)
    logits = h @ p["W_y"].T + p["b_y"]
    cache["logits"] = logits
    return softmax(logits, axis=1), cache


def loss_and_grad(model, X, y):
    """Mean cross-entropy over the batch and its gradient for every parameter."""
    probs, cache = forward(model, X)
    X = cache["X"]
    y = np.asarray(y, dtype=np.int64)
    B, T, _ = X.shape
    p = model.params
    logp = log_softmax(cache["logits"], axis=1)
    loss = -float(np.mean(logp[np.arange(B), y]))

    g = {n: np.zeros_like(v) for n, v in p.items()}
    dlogits = probs.copy()
    dlogits[np.arange(B), y] -= 1.0
    dlogits /= B
    hs = cache["h"]
    g["W_y"] = dlogits.T @ hs[-1]
    g["b_y"] = dlogits.sum(axis=0)
    dh = dlogits @ p["W_y"]

    if model.cell == "vanilla":
        da_all = np.empty((B, T, model.hidden))
        for t in range(T - 1, -1, -1):
            h = hs[t + 1]
            da = dh * h * (1.0 - h)
            da_all[:, t] = da
            g["W_h"] += da.T @ hs[t]
            dh = da @ p["W_h"]
        g["W_x"] = np.einsum("bth,btd->hd", da_all, X)
        g["b_h"] = da_all.sum(axis=(0, 1))
    else:
        daz_all = np.empty((B, T, model.hidden))
        dar_all = np.empty_like(daz_all)
        dac_all = np.empty_like(daz_all)
        for t in range(T - 1, -1, -1):
            h_prev = hs[t]
            z, r, c = cache["z"][t], cache["r"][t], cache["c"][t]
            dz = dh * (c - h_prev)
            dc = dh * z
            dh_prev = dh * (1.0 - z)
            dac = dc * (1.0 - c * c)
            g["U_c"] += dac.T @ (r * h_prev)
            drh = dac @ p["U_c"]
            dr = drh * h_prev
            dh_prev += drh * r
            daz = dz * z * (1.0 - z)
            dar = dr * r * (1.0 - r)
            g["U_z"] += daz.T @ h_prev
            g["U_r"] += dar.T @ h_prev
            dh_prev += daz @ p["U_z"] + dar @ p["U_r"]
            daz_all[:, t], dar_all[:, t], dac_all[:, t] = daz, dar, dac
            dh = dh_prev
        for gate, da_all in (("z", daz_all), ("r", dar_all), ("c", dac_all)):
            g[f"W_{gate}"] = np.einsum("bth,btd->hd", da_all, X)
            g[f"b_{gate}"] = da_all.sum(axis=(0, 1))
    return loss, g


def predict_proba(model, X, batch_size=512):
    X = _check_input(model, X)
    out = [forward(model, X[i:i + batch_size])[0] for i in range(0, X.shape[0], batch_size)]
    return np.concatenate(out, axis=0)


def predict(model, X):
    """Most probable class; ties go to the lower class index."""
    return np.argmax(predict_proba(model, X), axis=1)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def _clip(grads, max_norm):
    if max_norm is None:
        return grads, None
    norm = float(np.sqrt(sum(float(np.sum(v * v)) for v in grads.values())))
    if norm > max_norm:
        scale = max_norm / norm
        grads = {k: v * scale for k, v in grads.items()}
    return grads, norm


def train(model, X, y, config=None):
    """Mini-batch gradient descent; returns a trained copy and the per-epoch mean loss.

    Batches are drawn from a permutation seeded by ``config.seed`` each epoch.
    """
    config = config or TrainConfig()
    X = _check_input(model, X)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y disagree in length")
    missing = sorted(set(range(model.n_classes)) - set(np.unique(y).tolist()))
    if missing:
        raise ValueError(f"training data has no samples of class(es) {missing}")
    model = model.copy()
    rng = np.random.default_rng(config.seed)
    curve = []
    n = X.shape[0]
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for i in range(0, n, config.batch_size):
            idx = order[i:i + config.batch_size]
            loss, grads = loss_and_grad(model, X[idx], y[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"loss became {loss} at epoch {epoch}; config {asdict(config)}")
            grads, _ = _clip(grads, config.clip_norm)
            for k in model.params:
                model.params[k] -= config.learning_rate * grads[k]
            total += loss * idx.size
        curve.append(total / n)
    return model, np.asarray(curve)


def write_loss_curve(curve, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss"])
        for i, v in enumerate(curve):
            w.writerow([i + 1, repr(float(v))])
    return Path(path)


# ---------------------------------------------------------------------------
# Leave-one-out harness
# ---------------------------------------------------------------------------

@dataclass
class RnnEvalConfig:
    cell: str = "gru"
    hidden: int = 16
    k: int = None  # Fisher-selected features per fold, None for all
    sequence_s: float = SEQUENCE_S
    step_s: float = STEP_S
    sigmas: tuple = AUGMENT_SIGMAS
    train: TrainConfig = field(default_factory=TrainConfig)
    mode: str = "clip"
    seed: int = 0


def _fold_seed(seed, fold_id):
    return [int(seed), *fold_id.encode()]


def loo_evaluate_rnn(table, config=None, name=None, n_jobs=1, n_classes=3, curves=None, models=None):
    """Leave-one-clip-out evaluation of a recurrent classifier on feature sequences.

    Folds, standardisation and Fisher selection follow the SVM harness;
    augmentation is applied to training sequences only. Each test trial is
    labelled by voting over its sequences' predictions. Dicts passed as
    ``curves`` and ``models`` receive each fold's loss curve and model.
    """
    config = config or RnnEvalConfig()
    jobs = []
    for subject in table.subjects():
        sub = table.for_subject(subject)
        for fold_id, tr, te in fold_splits(sub, config.mode):
            jobs.append((fold_id, sub, tr, te))

    def run(job):
        fold_id, sub, tr, te = job
        ytr = sub.label[tr]
        _check_classes(ytr, fold_id, n_classes)
        scaler = Standardizer(sub.values[tr])
        Ztr = scaler(sub.values[tr])
        if config.k is None or config.k >= Ztr.shape[1]:
            idx = np.arange(Ztr.shape[1])
        else:
            idx = select_top_k(fisher_scores(Ztr, ytr), config.k)
        train_tab = sub.take(tr).with_values(Ztr[:, idx], names=[sub.names[i] for i in idx])
        test_tab = sub.take(te).with_values(scaler(sub.values[te])[:, idx], names=[sub.names[i] for i in idx])
        seeds = _fold_seed(config.seed, fold_id)
        train_seq = augment_gaussian(make_sequences(train_tab, config.sequence_s, config.step_s),
                                     config.sigmas, seed=seeds)
        test_seq = make_sequences(test_tab, config.sequence_s, config.step_s)
        test_keys = {s.key for s in test_seq}
        if any(s.key in test_keys for s in train_seq):
            raise RuntimeError(f"fold {fold_id}: held-out trial leaked into training sequences")
        Xtr, ytr_seq = stack(train_seq)
        model = RecurrentModel.init(config.cell, idx.size, config.hidden, n_classes, seed=seeds)
        tcfg = TrainConfig(**{**asdict(config.train), "seed": int(np.random.default_rng(seeds).integers(2**31))})
        model, curve = train(model, Xtr, ytr_seq, tcfg)
        Xte, _ = stack(test_seq)
        probs = predict_proba(model, Xte)
        keys = [(*s.key, s.offset) for s in test_seq]
        return fold_id, keys, [s.label for s in test_seq], probs, fingerprint_rows(sub, tr), curve, model

    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]

    keys, labels, scores, folds, fps = [], [], [], [], {}
    for fold_id, k, lab, probs, fp, curve, model in results:
        keys += k
        labels += lab
        scores.append(probs)
        folds += [fold_id] * len(k)
        fps[fold_id] = fp
        if curves is not None:
            curves[fold_id] = curve
        if models is not None:
            models[fold_id] = model
    return EvalReport.from_units(
        name or f"{table.band}_{table.measure}_{config.cell}", keys, labels, np.concatenate(scores, axis=0),
        folds, fps, n_classes,
    )
