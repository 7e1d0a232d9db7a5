import json
import logging

import numpy as np
import pytest

from conftest import channel_mean_task, small_spec, synthetic_session
from funcnet.exceptions import ConfigError, DataError, NumericError
from funcnet.metrics import med
from funcnet.models import build_model
from funcnet.training import (MeanBaseline, RandomBaseline, TrainConfig, WebcamBaseline, evaluate,
                              predict_recording, run_baseline, train, write_manifest)

FAST = dict(learning_rate=0.01, batch_size=32)


def fresh(seed=0):
    return build_model(small_spec(), seed)


def test_defaults_per_dataset():
    c = TrainConfig.for_dataset("consumer")
    assert (c.learning_rate, c.batch_size, c.max_epochs, c.window_size, c.early_stopping_patience) == \
        (0.0008, 384, 30, 512, None)
    e = TrainConfig.for_dataset("eegeyenet")
    assert (e.learning_rate, e.batch_size, e.max_epochs, e.early_stopping_patience, e.window_size, e.repeats) == \
        (0.0001, 64, 50, 20, 500, 5)
    assert (c.beta1, c.beta2, c.epsilon) == (0.9, 0.999, 1e-7)
    with pytest.raises(ConfigError):
        TrainConfig.for_dataset("mnist")
    with pytest.raises(ConfigError):
        TrainConfig.for_dataset("consumer", momentum=0.5)


def test_channel_mean_task_learned():
    x, y = channel_mean_task()
    history = train(fresh(), x, y, TrainConfig(max_epochs=20, **FAST))
    assert min(history.train_loss) < 0.01
    assert all(np.isfinite(history.train_loss))


def test_lr_zero_keeps_parameters():
    x, y = channel_mean_task(n=64)
    model = fresh()
    before = {k: v for k, v in model.state_dict().items() if not k.startswith("buffer:")}
    train(model, x, y, TrainConfig(max_epochs=2, learning_rate=0.0, batch_size=16))
    after = model.state_dict()
    assert all(np.array_equal(before[k], after[k]) for k in before)


def test_same_seed_same_history():
    x, y = channel_mean_task(n=128)
    h1 = train(fresh(), x, y, TrainConfig(max_epochs=3, seed=5, **FAST))
    h2 = train(fresh(), x, y, TrainConfig(max_epochs=3, seed=5, **FAST))
    assert h1.train_loss == h2.train_loss


def test_runs_exactly_max_epochs_without_early_stopping():
    x, y = channel_mean_task(n=64)
    h = train(fresh(), x, y, TrainConfig(max_epochs=4, **FAST), x, y)
    assert len(h.train_loss) == len(h.val_loss) == 4 and not h.stopped_early


def test_early_stopping_restores_best():
    x, y = channel_mean_task(n=128)
    xv, yv = channel_mean_task(n=64, seed=1)
    yv = yv + 50.0  # unreachable validation targets: loss stops improving quickly
    model = fresh()
    h = train(model, x, y, TrainConfig(max_epochs=40, early_stopping_patience=2, **FAST), xv, yv)
    assert h.stopped_early and len(h.val_loss) == h.best_epoch + 2
    restored = np.mean((model.predict(xv) - yv) ** 2)
    assert restored == pytest.approx(min(h.val_loss), rel=1e-5)


def test_early_stopping_needs_validation():
    x, y = channel_mean_task(n=16)
    with pytest.raises(ConfigError):
        train(fresh(), x, y, TrainConfig(max_epochs=1, early_stopping_patience=3))


def test_non_finite_loss_aborts_with_position():
    x, y = channel_mean_task(n=64)
    y[40] = np.nan
    with pytest.raises(NumericError, match=r"epoch 1, batch \d"):
        train(fresh(), x, y, TrainConfig(max_epochs=1, batch_size=16))


def test_empty_training_set():
    with pytest.raises(DataError):
        train(fresh(), np.zeros((0, 64, 3), np.float32), np.zeros((0, 2)), TrainConfig())


# evaluation ---------------------------------------------------------------

class Oracle:
    """Predicts the true stimulus at each window end."""

    def __init__(self, session):
        self.session = session

    def predict_recording(self, session, window_size):
        return session.stimulus[window_size - 1:]


def test_perfect_predictor_report():
    sessions = [synthetic_session(300, seed=i, participant_id=i, task="level1_smooth") for i in range(3)]
    r = evaluate(Oracle(None), sessions, 128)
    assert r.med == 0 and r.corr_x == pytest.approx(1) and r.corr_y == pytest.approx(1)
    assert set(r.n_per_recording.values()) == {300 - 127}


def test_prediction_alignment_uses_window_end():
    s = synthetic_session(200)
    model = build_model(small_spec(128, 4), 0)
    ends, preds = predict_recording(model, s, 128)
    assert ends[0] == 127 and ends[-1] == 199 and len(preds) == 73
    np.testing.assert_allclose(preds[5], model.predict(s.eeg[5:133][None].astype(np.float32))[0], atol=1e-6)


def test_short_recordings_skipped(caplog):
    sessions = [synthetic_session(300, seed=1, participant_id=1), synthetic_session(100, participant_id=2)]
    with caplog.at_level(logging.WARNING):
        r = evaluate(MeanBaseline().fit(None, np.zeros((3, 2))), sessions, 128)
    assert list(r.n_per_recording) == ["P1:None"] and "shorter" in caplog.text
    with pytest.raises(DataError):
        evaluate(MeanBaseline().fit(None, np.zeros((3, 2))), sessions[1:], 128)


def test_aggregate_matches_concatenation():
    sessions = [synthetic_session(260 + 40 * i, seed=i, participant_id=i) for i in range(3)]
    base = MeanBaseline().fit(None, np.array([[1.0, -2.0]]))
    r = evaluate(base, sessions, 128)
    truth = np.concatenate([s.stimulus[127:] for s in sessions])
    assert abs(r.med - med(truth, np.tile([1.0, -2.0], (len(truth), 1)))) < 1e-12


# baselines ----------------------------------------------------------------

def test_mean_baseline_is_training_mean_with_zero_correlation():
    train_s = [synthetic_session(300, seed=i) for i in range(3)]
    test_s = [synthetic_session(300, seed=9, participant_id=9)]
    r = run_baseline("mean", train_s, test_s, 128)
    assert r.corr_x == 0 and r.corr_y == 0
    mean = np.concatenate([s.stimulus for s in train_s]).mean(axis=0)
    assert r.med == pytest.approx(med(test_s[0].stimulus[127:], np.tile(mean, (173, 1))))


def test_random_baseline_worse_than_mean_and_seeded():
    # several stimulus cycles per recording, so the training mean sits near the centre
    train_s = [synthetic_session(3000, seed=i) for i in range(4)]
    test_s = [synthetic_session(3000, seed=10 + i, participant_id=i) for i in range(2)]
    rand = run_baseline("random", train_s, test_s, 128, seed=3)
    assert rand.med > run_baseline("mean", train_s, test_s, 128).med
    assert run_baseline("random", train_s, test_s, 128, seed=3).med == rand.med


def test_random_baseline_bounds():
    b = RandomBaseline(bounds=[[0, 0], [1, 2]], random_state=0).fit()
    p = b.predict(np.zeros(1000))
    assert p.min() >= 0 and p[:, 0].max() <= 1 and p[:, 1].max() <= 2
    with pytest.raises(ConfigError):
        RandomBaseline().fit()


def test_webcam_baseline_replays_gaze():
    s = synthetic_session(300)
    np.testing.assert_array_equal(WebcamBaseline().fit().predict_recording(s, 128), s.webcam_gaze[127:])
    s.webcam_gaze = None
    with pytest.raises(DataError):
        WebcamBaseline().fit().predict_recording(s, 128)


def test_unknown_baseline():
    with pytest.raises(ConfigError):
        run_baseline("oracle", [], [], 128)


def test_manifest(tmp_path):
    path = write_manifest(tmp_path, {"training": {"learning_rate": 0.0008}}, 7, "abc", task="t")
    doc = json.loads(path.read_text())
    assert doc["seed"] == 7 and doc["split_digest"] == "abc" and len(doc["code_digest"]) == 16
    assert doc["config"]["training"]["learning_rate"] == 0.0008
