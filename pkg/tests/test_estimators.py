import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from conftest import synthetic_session
from funcnet.estimators import EEGFilter, FNNRegressor, SlidingWindows, check_targets, check_windows
from funcnet.exceptions import ConfigError, DataError
from funcnet.pipeline import WindowSpec, filter_eeg, make_windows


def test_check_windows():
    assert check_windows(np.zeros((2, 8, 3), dtype=np.float64)).dtype == np.float32
    with pytest.raises(DataError):
        check_windows(np.zeros((8, 3)))
    with pytest.raises(DataError):
        check_windows(np.zeros((2, 8, 3)), window_size=9)
    bad = np.zeros((1, 4, 2))
    bad[0, 1, 1] = np.nan
    with pytest.raises(DataError, match="NaN"):
        check_windows(bad)
    with pytest.raises(DataError):
        check_targets(np.zeros((3, 3)), 3)


def test_regressor_params_and_clone():
    est = FNNRegressor(architecture="func_body", learning_rate=1e-3, random_state=4)
    params = est.get_params()
    assert params["architecture"] == "func_body" and params["random_state"] == 4
    twin = clone(est)
    assert twin.get_params() == params and twin is not est
    with pytest.raises(NotFittedError):
        est.predict(np.zeros((1, 128, 4)))


def test_regressor_fit_predict_and_reproducible():
    rng = np.random.default_rng(0)
    X, y = rng.normal(size=(12, 128, 4)), rng.normal(size=(12, 2))
    a = FNNRegressor(epochs=1, batch_size=6, standardize=True).fit(X, y)
    b = FNNRegressor(epochs=1, batch_size=6, standardize=True).fit(X, y)
    pa = a.predict(X[:3])
    assert pa.shape == (3, 2) and pa.dtype == np.float64
    np.testing.assert_array_equal(pa, b.predict(X[:3]))
    assert a.n_features_in_ == 4 and a.window_size_ == 128 and len(a.history_.train_loss) == 1
    with pytest.raises(DataError):
        a.predict(X[:, :100])
    assert np.isfinite(a.score(X, y))


def test_regressor_rejects_bad_config():
    X, y = np.zeros((4, 128, 4)), np.zeros((4, 2))
    with pytest.raises(ConfigError):
        FNNRegressor(architecture="nope").fit(X, y)
    with pytest.raises(ConfigError):
        FNNRegressor(batch_size=0).fit(X, y)


def test_filter_transformer_matches_function():
    s = synthetic_session(600)
    f = EEGFilter().fit(s.eeg)
    np.testing.assert_array_equal(f.transform(s.eeg), filter_eeg(s.eeg))
    stack = np.stack([s.eeg[:300], s.eeg[300:]])
    np.testing.assert_array_equal(f.transform(stack)[1], filter_eeg(s.eeg[300:]))
    off = EEGFilter(enabled=False).fit(s.eeg)
    np.testing.assert_array_equal(off.transform(s.eeg), s.eeg)
    with pytest.raises(ConfigError):
        EEGFilter(band=(40.0, 0.5)).fit(s.eeg)


def test_sliding_windows_pipeline():
    s = synthetic_session(700)
    pipe = make_pipeline(EEGFilter(), SlidingWindows(window_size=256, stride=100))
    out = pipe.fit_transform(s.eeg)
    x, _ = make_windows(type(s)(filter_eeg(s.eeg), s.stimulus), WindowSpec(256, 100))
    assert out.shape == (5, 256, 4) and out.flags.c_contiguous
    np.testing.assert_array_equal(out, x)
    with pytest.raises(DataError):
        SlidingWindows().fit(None).transform(np.zeros((2, 3, 4)))
