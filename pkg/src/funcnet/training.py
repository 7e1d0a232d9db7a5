"""Training loop, evaluation over recordings, and the reference baselines."""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import platform
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .exceptions import ConfigError, DataError, NumericError
from .metrics import MetricsReport, evaluate_recordings
from .optim import Adam
from .pipeline import RecordingSession, WindowSpec, make_windows, window_end_indices
from .tensor import Tensor, mse_loss

log = logging.getLogger(__name__)

DATASETS = ("consumer", "eegeyenet")


@dataclass
class TrainConfig:
    learning_rate: float = 0.0008
    batch_size: int = 384
    max_epochs: int = 30
    early_stopping_patience: int | None = None
    seed: int = 0
    repeats: int = 1
    dataset: str = "consumer"
    filtering: str = "filtered"
    window_size: int = 512
    train_stride: int = 1
    standardize: bool = False
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7

    @classmethod
    def for_dataset(cls, dataset: str, **overrides) -> "TrainConfig":
        if dataset == "consumer":
            base = cls()
        elif dataset == "eegeyenet":
            base = cls(learning_rate=0.0001, batch_size=64, max_epochs=50, early_stopping_patience=20,
                       repeats=5, dataset="eegeyenet", window_size=500)
        else:
            raise ConfigError(f"unknown dataset '{dataset}'; choose from {DATASETS}")
        for key, value in overrides.items():
            if not hasattr(base, key):
                raise ConfigError(f"unknown training option '{key}'")
            setattr(base, key, value)
        base.validate()
        return base

    def validate(self) -> None:
        if self.learning_rate < 0 or self.batch_size < 1 or self.max_epochs < 0 or self.repeats < 1:
            raise ConfigError("learning_rate >= 0, batch_size >= 1, max_epochs >= 0, repeats >= 1 required")
        if self.filtering not in ("filtered", "unfiltered"):
            raise ConfigError("filtering must be 'filtered' or 'unfiltered'")
        if self.early_stopping_patience is not None and self.early_stopping_patience < 1:
            raise ConfigError("early_stopping_patience must be >= 1")


@dataclass
class History:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int | None = None
    stopped_early: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def _loss_on(model, x, y, batch_size) -> float:
    pred = model.predict(x, batch_size=max(batch_size, 256))
    return float(np.mean((pred.astype(np.float64) - y) ** 2))


def train(model, x_train: np.ndarray, y_train: np.ndarray, config: TrainConfig,
          x_val: np.ndarray | None = None, y_val: np.ndarray | None = None) -> History:
    """Mini-batch Adam on the mean squared error.

    Each epoch visits a seeded permutation of the training windows; the last
    partial batch is kept. With early stopping the parameters of the epoch
    with the lowest validation loss are restored at the end.
    """
    if len(x_train) == 0:
        raise DataError("empty training set")
    if len(x_train) != len(y_train):
        raise DataError("training windows and targets differ in length")
    use_val = x_val is not None and len(x_val) > 0
    if config.early_stopping_patience is not None and not use_val:
        raise ConfigError("early stopping needs validation data")

    rng = np.random.default_rng(config.seed)
    dtype = model.dtype
    y_train = np.asarray(y_train, dtype=np.float64)
    opt = Adam(model.named_parameters(), config.learning_rate, config.beta1, config.beta2, config.epsilon)
    history = History()
    best = (np.inf, None)
    stale = 0
    n = len(x_train)
    for epoch in range(config.max_epochs):
        model.train()
        order = rng.permutation(n)
        running = 0.0
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = np.sort(order[start:start + config.batch_size])
            xb = Tensor(np.asarray(x_train[idx], dtype=dtype))
            loss = mse_loss(model(xb), y_train[idx].astype(dtype))
            value = float(loss.data)
            if not np.isfinite(value):
                raise NumericError(f"non-finite loss at epoch {epoch + 1}, batch {b + 1}")
            loss.backward()
            opt.step()
            running += value * len(idx)
        history.train_loss.append(running / n)
        if use_val:
            val = _loss_on(model, x_val, np.asarray(y_val, dtype=np.float64), config.batch_size)
            history.val_loss.append(val)
            if val < best[0]:
                best = (val, copy.deepcopy(model.state_dict()) if config.early_stopping_patience else None)
                history.best_epoch = epoch + 1
                stale = 0
            else:
                stale += 1
            log.info("epoch %d: train %.5g, val %.5g", epoch + 1, history.train_loss[-1], val)
            if config.early_stopping_patience and stale >= config.early_stopping_patience:
                history.stopped_early = True
                break
        else:
            log.info("epoch %d: train %.5g", epoch + 1, history.train_loss[-1])
    if config.early_stopping_patience and best[1] is not None:
        model.load_state_dict(best[1])
    model.eval()
    return history


# --------------------------------------------------------------------------
# recording-level evaluation
# --------------------------------------------------------------------------

def predict_recording(predictor, session: RecordingSession, window_size: int,
                      batch_size: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Stride-1 predictions for every sample that ends a full window.

    Returns ``(end_indices, predictions)``. Predictors exposing
    ``predict_recording`` (the baselines) are asked directly.
    """
    ends = window_end_indices(session.steps, WindowSpec(window_size, 1))
    if hasattr(predictor, "predict_recording"):
        return ends, np.asarray(predictor.predict_recording(session, window_size))
    x, _ = make_windows(session, WindowSpec(window_size, 1))
    preds = [predictor.predict(x[i:i + batch_size]) for i in range(0, len(x), batch_size)]
    return ends, np.concatenate(preds) if preds else np.empty((0, 2))


def evaluate(predictor, sessions, window_size: int, precision_normalization: str = "n",
             unit_factor: float = 1.0) -> MetricsReport:
    """Metrics over test recordings; the first ``window_size - 1`` samples carry no prediction."""
    pairs = []
    for s in sessions:
        if s.steps < window_size + 1:
            log.warning("%s: recording shorter than the window; skipped", s.key)
            continue
        ends, preds = predict_recording(predictor, s, window_size)
        pairs.append((s.key, s.stimulus[ends], preds))
    if not pairs:
        raise DataError("no recording long enough to evaluate")
    return evaluate_recordings(pairs, precision_normalization, unit_factor)


# --------------------------------------------------------------------------
# baselines
# --------------------------------------------------------------------------

class MeanBaseline(RegressorMixin, BaseEstimator):
    """Predicts the mean training-set stimulus position everywhere."""

    def fit(self, X, y):
        y = np.asarray(y, dtype=np.float64)
        if y.ndim != 2 or y.shape[1] != 2 or len(y) == 0:
            raise DataError("targets must be a non-empty (n, 2) array")
        self.mean_ = y.mean(axis=0)
        return self

    def predict(self, X):
        return np.tile(self.mean_, (len(X), 1))

    def predict_recording(self, session, window_size):
        n = len(window_end_indices(session.steps, WindowSpec(window_size, 1)))
        return np.tile(self.mean_, (n, 1))


class RandomBaseline(RegressorMixin, BaseEstimator):
    """I.i.d. uniform guesses inside a box (by default the training targets' bounding box)."""

    def __init__(self, bounds=None, random_state=0):
        self.bounds = bounds
        self.random_state = random_state

    def fit(self, X=None, y=None):
        if self.bounds is not None:
            lo, hi = np.asarray(self.bounds, dtype=np.float64)
        elif y is not None and len(y):
            y = np.asarray(y, dtype=np.float64)
            lo, hi = y.min(axis=0), y.max(axis=0)
        else:
            raise ConfigError("random baseline needs bounds or training targets")
        self.low_, self.high_ = np.asarray(lo), np.asarray(hi)
        self.rng_ = np.random.default_rng(self.random_state)
        return self

    def predict(self, X):
        return self.rng_.uniform(self.low_, self.high_, size=(len(X), 2))

    def predict_recording(self, session, window_size):
        n = len(window_end_indices(session.steps, WindowSpec(window_size, 1)))
        return self.rng_.uniform(self.low_, self.high_, size=(n, 2))


class WebcamBaseline(RegressorMixin, BaseEstimator):
    """Replays the webcam eye tracker's gaze track as the prediction."""

    def fit(self, X=None, y=None):
        self.fitted_ = True
        return self

    def predict_recording(self, session, window_size):
        if session.webcam_gaze is None:
            raise DataError(f"{session.key}: no gaze track for the webcam baseline")
        return session.webcam_gaze[window_end_indices(session.steps, WindowSpec(window_size, 1))]


BASELINES = {"mean": MeanBaseline, "random": RandomBaseline, "webcam": WebcamBaseline}


def run_baseline(kind: str, train_sessions, test_sessions, window_size: int = 512, seed: int = 0,
                 bounds=None, precision_normalization: str = "n") -> MetricsReport:
    """Fit a baseline on the training recordings' stimulus track and score it."""
    if kind not in BASELINES:
        raise ConfigError(f"unknown baseline '{kind}'; choose from {sorted(BASELINES)}")
    targets = np.concatenate([s.stimulus for s in train_sessions]) if train_sessions else np.empty((0, 2))
    if kind == "random":
        est = RandomBaseline(bounds=bounds, random_state=seed).fit(None, targets)
    elif kind == "mean":
        est = MeanBaseline().fit(None, targets)
    else:
        est = WebcamBaseline().fit()
    return evaluate(est, test_sessions, window_size, precision_normalization)


# --------------------------------------------------------------------------
# run manifests
# --------------------------------------------------------------------------

def code_digest() -> str:
    """Content hash over this package's source files."""
    h = hashlib.sha256()
    for path in sorted(Path(__file__).parent.glob("*.py")):
        h.update(path.name.encode())
        h.update(path.read_bytes())
    return h.hexdigest()[:16]


def write_manifest(out_dir, config: dict, seed: int, split_digest: str | None = None, **extra) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"config": config, "seed": seed, "split_digest": split_digest, "code_digest": code_digest(),
           "python": platform.python_version(), "numpy": np.__version__} | extra
    path = out / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, default=str))
    return path
