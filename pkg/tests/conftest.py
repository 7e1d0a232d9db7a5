import json

import numpy as np
import pytest

from funcnet.pipeline import TASKS, RecordingSession, write_session


def synthetic_session(steps=400, seed=0, participant_id=None, task=None):
    """Stimulus wanders smoothly; EEG carries a noisy copy of it plus a 50 Hz hum."""
    rng = np.random.default_rng(seed)
    t = np.arange(steps) / 256.0
    stim = np.column_stack([np.sin(2 * np.pi * 0.3 * t + seed), np.cos(2 * np.pi * 0.2 * t + seed)]) * 100
    eeg = np.column_stack([stim[:, 0], stim[:, 1], stim[:, 0] - stim[:, 1], rng.normal(size=steps)]) * 0.1
    eeg += 5 * np.sin(2 * np.pi * 50 * t)[:, None] + rng.normal(scale=0.5, size=(steps, 4))
    gaze = stim + rng.normal(scale=10, size=stim.shape)
    # round to float32 so caches reproduce the values exactly
    f32 = lambda a: a.astype(np.float32).astype(np.float64)
    return RecordingSession(f32(eeg), f32(stim), f32(gaze), participant_id, task)


def write_dataset(root, participants=(1, 3, 5, 6, 7, 8), test=(7, 8), steps=400, tasks=TASKS):
    root.mkdir(parents=True, exist_ok=True)
    for pid in participants:
        for k, task in enumerate(tasks):
            folder = root / f"P{pid:02d}"
            folder.mkdir(exist_ok=True)
            write_session(synthetic_session(steps, seed=pid * 10 + k), folder / f"{task}.csv")
    if test is not None:
        (root / "split.json").write_text(json.dumps({"test": list(test)}))
    return root


@pytest.fixture
def dataset(tmp_path):
    return write_dataset(tmp_path / "data")


def channel_mean_task(n=512, steps=64, channels=3, noise=0.01, seed=0):
    """Windows whose targets are the window means of channels 0 and 1, plus Gaussian noise."""
    rng = np.random.default_rng(seed)
    offsets = rng.uniform(-1, 1, size=(n, 1, channels))
    x = (offsets + rng.normal(size=(n, steps, channels))).astype(np.float32)
    y = x[:, :, :2].astype(np.float64).mean(axis=1) + rng.normal(scale=noise, size=(n, 2))
    return x, y


def small_spec(steps=64, channels=3):
    from funcnet.models import LayerSpec, ModelSpec
    return ModelSpec("channel_mean", channels, steps, [
        LayerSpec("conv1d", {"filters": 8, "kernel_size": 1}),
        LayerSpec("global_avgpool"),
        LayerSpec("dense", {"neurons": 2}),
    ])


# acceptance report --------------------------------------------------------

_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Records one ``criterion N: STATUS detail`` line for the end-of-run summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(criterion, status, detail=""):
        line = f"criterion {criterion}: {status} {detail}".rstrip()
        lines.append(line)
        print(line)
        return line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: s.split(":")[0]):
            terminalreporter.write_line(line)
