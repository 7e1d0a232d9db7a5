"""scikit-learn compatible wrappers around the networks and the EEG filter chain."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import DataError
from .models import build_model, model_spec
from .pipeline import FilterConfig, RecordingSession, WindowSpec, filter_eeg, make_windows
from .training import TrainConfig, train


def check_windows(X, window_size: int | None = None, channels: int | None = None,
                  dtype=np.float32) -> np.ndarray:
    """Validate a stack of EEG windows shaped ``(n, steps, channels)``."""
    X = np.asarray(X)
    if X.ndim != 3:
        raise DataError(f"expected windows shaped (n, steps, channels), got {X.shape}")
    if not np.issubdtype(X.dtype, np.number):
        raise DataError("windows must be numeric")
    if window_size is not None and X.shape[1] != window_size:
        raise DataError(f"windows have {X.shape[1]} steps, model expects {window_size}")
    if channels is not None and X.shape[2] != channels:
        raise DataError(f"windows have {X.shape[2]} channels, model expects {channels}")
    X = X.astype(dtype, copy=False)
    if not np.all(np.isfinite(X)):
        raise DataError("windows contain NaN or infinite values")
    return X


def check_targets(y, n: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (n, 2):
        raise DataError(f"targets must have shape ({n}, 2), got {y.shape}")
    if not np.all(np.isfinite(y)):
        raise DataError("targets contain NaN or infinite values")
    return y


class FNNRegressor(RegressorMixin, BaseEstimator):
    """Scalar-on-function regressor: EEG window -> 2-D screen position.

    ``architecture`` names any registered model (``min_functional``,
    ``fully_functional``, ``func_body``, their ``*_control`` twins or
    ``spatial_filter_cnn``). The window length and channel count are taken
    from the training data.
    """

    def __init__(self, architecture="min_functional", learning_rate=0.0008, batch_size=384, epochs=30,
                 early_stopping_patience=None, standardize=False, random_state=0, dtype="float32"):
        self.architecture = architecture
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.early_stopping_patience = early_stopping_patience
        self.standardize = standardize
        self.random_state = random_state
        self.dtype = dtype

    def _scale(self, X):
        if not self.standardize:
            return X
        return ((X - self.channel_mean_) / self.channel_scale_).astype(X.dtype)

    def fit(self, X, y, X_val=None, y_val=None):
        X = check_windows(X, dtype=self.dtype)
        y = check_targets(y, len(X))
        _, steps, channels = X.shape
        if self.standardize:
            self.channel_mean_ = X.mean(axis=(0, 1))
            std = X.std(axis=(0, 1))
            self.channel_scale_ = np.where(std > 0, std, 1.0)
        X = self._scale(X)
        if X_val is not None:
            X_val = self._scale(check_windows(X_val, steps, channels, self.dtype))
            y_val = check_targets(y_val, len(X_val))
        self.model_ = build_model(model_spec(self.architecture, steps, channels), self.random_state, self.dtype)
        config = TrainConfig(learning_rate=self.learning_rate, batch_size=self.batch_size,
                             max_epochs=self.epochs, early_stopping_patience=self.early_stopping_patience,
                             seed=self.random_state, window_size=steps, standardize=self.standardize)
        config.validate()
        self.history_ = train(self.model_, X, y, config, X_val, y_val)
        self.n_features_in_ = channels
        self.window_size_ = steps
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = self._scale(check_windows(X, self.window_size_, self.n_features_in_, self.dtype))
        return self.model_.predict(X).astype(np.float64)


class EEGFilter(TransformerMixin, BaseEstimator):
    """Mains notches followed by a bandpass, applied along the time axis.

    Accepts a ``(steps, channels)`` recording or a ``(n, steps, channels)``
    stack of windows (filtered independently). Stateless: ``fit`` only
    validates the configuration.
    """

    def __init__(self, notch_freqs=(50.0, 60.0), notch_q=30.0, band=(0.5, 40.0), order=4,
                 sample_rate=256.0, zero_phase=False, enabled=True):
        self.notch_freqs = notch_freqs
        self.notch_q = notch_q
        self.band = band
        self.order = order
        self.sample_rate = sample_rate
        self.zero_phase = zero_phase
        self.enabled = enabled

    def _config(self) -> FilterConfig:
        return FilterConfig(self.enabled, tuple(self.notch_freqs), self.notch_q, tuple(self.band),
                            self.order, self.zero_phase)

    def fit(self, X, y=None):
        # Runs the coefficient design so a bad configuration fails early.
        filter_eeg(np.zeros((8, 1)), self._config(), self.sample_rate)
        self.config_ = self._config()
        return self

    def transform(self, X):
        check_is_fitted(self, "config_")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2:
            return filter_eeg(X, self.config_, self.sample_rate)
        if X.ndim == 3:
            return np.stack([filter_eeg(w, self.config_, self.sample_rate) for w in X])
        raise DataError(f"expected 2-D or 3-D input, got {X.shape}")


class SlidingWindows(TransformerMixin, BaseEstimator):
    """Turn one recording's EEG ``(steps, channels)`` into ``(n, window_size, channels)`` windows.

    Use :func:`funcnet.pipeline.make_windows` when the matching targets are needed.
    """

    def __init__(self, window_size=512, stride=1):
        self.window_size = window_size
        self.stride = stride

    def fit(self, X, y=None):
        self.spec_ = WindowSpec(self.window_size, self.stride)
        return self

    def transform(self, X):
        check_is_fitted(self, "spec_")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise DataError(f"expected a (steps, channels) recording, got {X.shape}")
        session = RecordingSession(X, np.zeros((len(X), 2)))
        return np.ascontiguousarray(make_windows(session, self.spec_)[0])
