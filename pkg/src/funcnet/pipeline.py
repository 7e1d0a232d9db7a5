"""Recording ingestion, EEG filtering, sliding windows and train/test splits."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import signal as sps

from .exceptions import ConfigError, DataError

log = logging.getLogger(__name__)

SAMPLE_RATE = 256.0
TASKS = ("level1_saccades", "level1_smooth", "level2_saccades", "level2_smooth")
VALIDATION_PARTICIPANTS = (1, 20, 28, 42, 52, 69)
EXCLUDED_PARTICIPANTS = (2, 4, 16, 17, 18, 19, 20, 62, 63, 64, 65, 66, 67, 79)
EXCLUDED_RECORDINGS = ((50, "level1_saccades"),)
TEST_RECORDINGS_PER_TASK = 12


@dataclass(frozen=True)
class ColumnMap:
    eeg: tuple[str, ...] = ("TP9", "TP10", "AF7", "AF8")
    stimulus: tuple[str, str] = ("Stimulus_x", "Stimulus_y")
    gaze: tuple[str, str] | None = ("Gaze_x", "Gaze_y")

    @property
    def columns(self) -> tuple[str, ...]:
        return self.eeg + self.stimulus + (self.gaze or ())


@dataclass
class RecordingSession:
    eeg: np.ndarray
    stimulus: np.ndarray
    webcam_gaze: np.ndarray | None = None
    participant_id: int | None = None
    task: str | None = None
    sample_rate: float = SAMPLE_RATE

    def __post_init__(self):
        self.eeg = np.asarray(self.eeg, dtype=np.float64)
        self.stimulus = np.asarray(self.stimulus, dtype=np.float64)
        if self.webcam_gaze is not None:
            self.webcam_gaze = np.asarray(self.webcam_gaze, dtype=np.float64)
        steps = self.eeg.shape[0]
        tracks = [("stimulus", self.stimulus)]
        if self.webcam_gaze is not None:
            tracks.append(("webcam_gaze", self.webcam_gaze))
        for name, arr in tracks:
            if arr.shape != (steps, 2):
                raise DataError(f"{name} has shape {arr.shape}, expected ({steps}, 2)")

    @property
    def steps(self) -> int:
        return self.eeg.shape[0]

    @property
    def key(self) -> str:
        return f"P{self.participant_id}:{self.task}"


def load_recording(path, column_map: ColumnMap = ColumnMap(), participant_id=None, task=None,
                   delimiter: str = ",") -> RecordingSession:
    """Read one comma-separated recording with a header row."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"recording not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        wanted = column_map.columns
        missing = [c for c in wanted if c not in header]
        if missing:
            raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
        idx = [header.index(c) for c in wanted]
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            values = []
            for col, i in zip(wanted, idx):
                cell = row[i] if i < len(row) else ""
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"{path}: row {line_no}, column {col}: non-numeric value {cell!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: row {line_no}, column {col}: non-finite value {cell!r}")
                values.append(v)
            rows.append(values)
    data = np.array(rows, dtype=np.float64).reshape(-1, len(wanted))
    n_eeg = len(column_map.eeg)
    gaze = data[:, n_eeg + 2:n_eeg + 4] if column_map.gaze else None
    return RecordingSession(data[:, :n_eeg], data[:, n_eeg:n_eeg + 2], gaze, participant_id, task)


def write_session(session: RecordingSession, path, column_map: ColumnMap = ColumnMap()) -> None:
    cols = [session.eeg, session.stimulus]
    if column_map.gaze:
        if session.webcam_gaze is None:
            raise DataError("column map names gaze columns but the session has no gaze track")
        cols.append(session.webcam_gaze)
    data = np.hstack(cols)
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(column_map.columns)
        for row in data:
            writer.writerow([repr(float(v)) for v in row])


# --------------------------------------------------------------------------
# filtering
# --------------------------------------------------------------------------

def _check_stable(a: np.ndarray, what: str) -> None:
    if np.any(np.abs(np.roots(a)) >= 1.0):
        raise ConfigError(f"{what}: unstable filter (pole magnitude >= 1)")


def notch_coefficients(freq: float, q: float = 30.0, fs: float = SAMPLE_RATE):
    if not 0 < freq < fs / 2:
        raise ConfigError(f"notch frequency {freq} Hz must lie in (0, {fs / 2}) Hz")
    if q <= 0:
        raise ConfigError("notch quality factor must be positive")
    b, a = sps.iirnotch(freq, q, fs=fs)
    _check_stable(a, f"notch({freq} Hz)")
    return b, a


def bandpass_sos(low: float, high: float, order: int = 4, fs: float = SAMPLE_RATE) -> np.ndarray:
    if not 0 < low < high < fs / 2:
        raise ConfigError(f"bandpass edges must satisfy 0 < low < high < {fs / 2} Hz, got {low}, {high}")
    if order < 1:
        raise ConfigError("filter order must be >= 1")
    sos = sps.butter(order, [low, high], btype="bandpass", fs=fs, output="sos")
    for section in sos:
        _check_stable(section[3:], f"bandpass({low}-{high} Hz)")
    return sos


def apply_notch(x: np.ndarray, freq: float, q: float = 30.0, fs: float = SAMPLE_RATE,
                zero_phase: bool = False) -> np.ndarray:
    """Second-order IIR notch along axis 0 (time), channel by channel."""
    b, a = notch_coefficients(freq, q, fs)
    x = np.asarray(x, dtype=np.float64)
    return sps.filtfilt(b, a, x, axis=0) if zero_phase else sps.lfilter(b, a, x, axis=0)


def apply_bandpass(x: np.ndarray, low: float, high: float, order: int = 4, fs: float = SAMPLE_RATE,
                   zero_phase: bool = False) -> np.ndarray:
    """Butterworth bandpass along axis 0; causal unless ``zero_phase``."""
    sos = bandpass_sos(low, high, order, fs)
    x = np.asarray(x, dtype=np.float64)
    return sps.sosfiltfilt(sos, x, axis=0) if zero_phase else sps.sosfilt(sos, x, axis=0)


@dataclass(frozen=True)
class FilterConfig:
    enabled: bool = True
    notch_freqs: tuple[float, ...] = (50.0, 60.0)
    notch_q: float = 30.0
    band: tuple[float, float] = (0.5, 40.0)
    order: int = 4
    zero_phase: bool = False


def filter_eeg(eeg: np.ndarray, config: FilterConfig = FilterConfig(), fs: float = SAMPLE_RATE) -> np.ndarray:
    """Notch at each mains frequency, then bandpass. Disabled config returns a copy."""
    out = np.array(eeg, dtype=np.float64)
    if not config.enabled:
        return out
    for freq in config.notch_freqs:
        out = apply_notch(out, freq, config.notch_q, fs, config.zero_phase)
    return apply_bandpass(out, *config.band, config.order, fs, config.zero_phase)


def filter_session(session: RecordingSession, config: FilterConfig = FilterConfig()) -> RecordingSession:
    return RecordingSession(filter_eeg(session.eeg, config, session.sample_rate), session.stimulus.copy(),
                            None if session.webcam_gaze is None else session.webcam_gaze.copy(),
                            session.participant_id, session.task, session.sample_rate)


# --------------------------------------------------------------------------
# windows
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class WindowSpec:
    window_size: int = 512
    stride: int = 1

    def __post_init__(self):
        if self.window_size < 1 or self.stride < 1:
            raise ConfigError("window_size and stride must be >= 1")


def window_end_indices(steps: int, spec: WindowSpec) -> np.ndarray:
    if steps < spec.window_size:
        return np.empty(0, dtype=np.int64)
    return np.arange(spec.window_size - 1, steps, spec.stride, dtype=np.int64)


def make_windows(session: RecordingSession, spec: WindowSpec) -> tuple[np.ndarray, np.ndarray]:
    """Windows of EEG and the stimulus position at each window's last sample.

    Returns ``(X, y)`` with shapes ``(n, window_size, channels)`` and ``(n, 2)``;
    ``X`` is a read-only strided view into the session.
    """
    w = spec.window_size
    if session.steps < w:
        log.warning("%s: %d samples is shorter than the %d-sample window; no windows",
                    session.key, session.steps, w)
        return (np.empty((0, w, session.eeg.shape[1])), np.empty((0, 2)))
    view = sliding_window_view(session.eeg, w, axis=0)[::spec.stride]  # (n, ch, w)
    ends = window_end_indices(session.steps, spec)
    return view.transpose(0, 2, 1), session.stimulus[ends]


def stack_windows(sessions, spec: WindowSpec) -> tuple[np.ndarray, np.ndarray]:
    xs, ys = zip(*(make_windows(s, spec) for s in sessions)) if sessions else ((), ())
    if not xs:
        raise DataError("no sessions to window")
    return np.concatenate(xs), np.concatenate(ys)


# --------------------------------------------------------------------------
# splits
# --------------------------------------------------------------------------

DEFAULT_PATTERN = r"(?:p|participant)?_?(?P<participant>\d+)[_\-/](?P<task>level[12][_\-]?(?:saccades|smooth))\.csv$"


def normalize_task(raw: str) -> str:
    t = raw.lower().replace("-", "_")
    t = re.sub(r"level([12])_?", r"level\1_", t)
    if t not in TASKS:
        raise DataError(f"unrecognized task '{raw}'")
    return t


@dataclass
class SplitManifest:
    train: dict[str, list[Path]] = field(default_factory=dict)
    validation: dict[str, list[Path]] = field(default_factory=dict)
    test: dict[str, list[Path]] = field(default_factory=dict)
    validation_participants: tuple[int, ...] = VALIDATION_PARTICIPANTS
    excluded_participants: tuple[int, ...] = EXCLUDED_PARTICIPANTS
    source: str = "derived"

    def check_disjoint(self) -> None:
        for task in TASKS:
            train = set(self.train.get(task, [])) | set(self.validation.get(task, []))
            overlap = train & set(self.test.get(task, []))
            if overlap:
                raise DataError(f"{task}: {len(overlap)} recording(s) in both train and test, "
                                f"e.g. {sorted(overlap)[0]}")

    def digest(self) -> str:
        doc = {part: {t: sorted(str(p) for p in v) for t, v in getattr(self, part).items()}
               for part in ("train", "validation", "test")}
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {part: {t: [str(p) for p in v] for t, v in getattr(self, part).items()}
                for part in ("train", "validation", "test")} | {"source": self.source}


def discover_recordings(root, pattern: str = DEFAULT_PATTERN) -> dict[tuple[int, str], Path]:
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset root {root} is not a directory")
    rx = re.compile(pattern, re.IGNORECASE)
    found = {}
    for path in sorted(root.rglob("*.csv")):
        m = rx.search(path.relative_to(root).as_posix())
        if m:
            found[(int(m["participant"]), normalize_task(m["task"]))] = path
    return found


def _published_split(root: Path) -> dict | None:
    path = root / "split.json"
    if not path.is_file():
        return None
    doc = json.loads(path.read_text())
    if "test" not in doc:
        raise DataError(f"{path}: expected a 'test' entry")
    return doc


def build_split(root, pattern: str = DEFAULT_PATTERN,
                validation_participants=VALIDATION_PARTICIPANTS,
                excluded_participants=EXCLUDED_PARTICIPANTS,
                excluded_recordings=EXCLUDED_RECORDINGS,
                test_fraction: float = 0.1, seed: int = 0,
                expected_test: int | None = TEST_RECORDINGS_PER_TASK) -> SplitManifest:
    """Assign every recording under ``root`` to train, validation or test.

    A ``split.json`` at the root (``{"test": [ids]}`` or
    ``{"test": {task: [ids]}}``) takes precedence over the seeded
    participant-level split.
    """
    root = Path(root)
    recordings = discover_recordings(root, pattern)
    if not recordings:
        raise DataError(f"no recordings matching the file pattern under {root}")
    excluded = set(excluded_participants)
    for pid in validation_participants:
        if pid in excluded:
            log.warning("validation participant %d is on the exclusion list; it is dropped", pid)
    usable = {k: v for k, v in recordings.items()
              if k[0] not in excluded and k not in set(map(tuple, excluded_recordings))}
    participants = sorted({pid for pid, _ in usable})

    published = _published_split(root)
    if published is not None:
        test_ids = published["test"]
        source = "published"
    else:
        rng = np.random.default_rng(seed)
        n_test = max(1, int(round(test_fraction * len(participants))))
        test_ids = sorted(int(p) for p in rng.permutation(participants)[:n_test])
        source = "derived"

    manifest = SplitManifest(validation_participants=tuple(validation_participants),
                             excluded_participants=tuple(sorted(excluded)), source=source)
    val = set(validation_participants)
    for task in TASKS:
        ids = test_ids.get(task, []) if isinstance(test_ids, dict) else test_ids
        tset = {int(i) for i in ids}
        entries = sorted((pid, path) for (pid, t), path in usable.items() if t == task)
        manifest.test[task] = [p for pid, p in entries if pid in tset]
        manifest.validation[task] = [p for pid, p in entries if pid in val and pid not in tset]
        manifest.train[task] = [p for pid, p in entries if pid not in val and pid not in tset]
        if expected_test is not None and len(manifest.test[task]) != expected_test:
            raise DataError(f"{task}: {len(manifest.test[task])} test recordings, expected {expected_test}")
    manifest.check_disjoint()
    return manifest


def participant_of(path, pattern: str = DEFAULT_PATTERN) -> int | None:
    m = re.search(pattern, Path(path).as_posix(), re.IGNORECASE)
    return int(m["participant"]) if m else None


def task_of(path, pattern: str = DEFAULT_PATTERN) -> str | None:
    m = re.search(pattern, Path(path).as_posix(), re.IGNORECASE)
    return normalize_task(m["task"]) if m else None


# --------------------------------------------------------------------------
# binary cache: b"FNET" | u16 version | u32 steps | u16 channels | f32 LE payload
# --------------------------------------------------------------------------

CACHE_MAGIC = b"FNET"
CACHE_VERSION = 1
_HEADER = struct.Struct("<4sHIH")


class CacheError(DataError):
    pass


def write_cache(path, data: np.ndarray) -> None:
    data = np.asarray(data)
    if data.ndim != 2:
        raise DataError("cache payload must be a (steps, channels) matrix")
    steps, channels = data.shape
    with Path(path).open("wb") as fh:
        fh.write(_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, steps, channels))
        fh.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


def read_cache(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CacheError(f"{path}: truncated header")
    magic, version, steps, channels = _HEADER.unpack_from(raw)
    if magic != CACHE_MAGIC:
        raise CacheError(f"{path}: bad magic {magic!r}")
    if version != CACHE_VERSION:
        raise CacheError(f"{path}: unsupported cache version {version}")
    payload = raw[_HEADER.size:]
    if len(payload) != 4 * steps * channels:
        raise CacheError(f"{path}: payload holds {len(payload)} bytes, header implies {4 * steps * channels}")
    return np.frombuffer(payload, dtype="<f4").reshape(steps, channels).astype(np.float64)


def session_to_matrix(session: RecordingSession) -> np.ndarray:
    cols = [session.eeg, session.stimulus]
    if session.webcam_gaze is not None:
        cols.append(session.webcam_gaze)
    return np.hstack(cols)


def session_from_matrix(data: np.ndarray, n_eeg: int, has_gaze: bool = True, **meta) -> RecordingSession:
    gaze = data[:, n_eeg + 2:n_eeg + 4] if has_gaze else None
    return RecordingSession(data[:, :n_eeg], data[:, n_eeg:n_eeg + 2], gaze, **meta)


def load_eegeyenet(path, x_key: str = "EEG", y_key: str = "labels") -> tuple[np.ndarray, np.ndarray]:
    """Load pre-windowed EEGEyeNet arrays (``(n, 500, 128)`` windows, ``(n, 2)`` positions).

    Extra leading label columns (such as a trial id) are dropped so the last
    two columns are the screen position.
    """
    with np.load(path, allow_pickle=False) as archive:
        if x_key not in archive or y_key not in archive:
            raise DataError(f"{path}: expected arrays '{x_key}' and '{y_key}'")
        x = np.asarray(archive[x_key], dtype=np.float32)
        y = np.asarray(archive[y_key], dtype=np.float64)
    if x.ndim != 3 or y.ndim != 2 or len(x) != len(y) or y.shape[1] < 2:
        raise DataError(f"{path}: inconsistent shapes {x.shape} / {y.shape}")
    if x.shape[1] < x.shape[2]:
        x = x.transpose(0, 2, 1)
    return x, y[:, -2:]


class WindowDataset:
    """Lazy stack of windows over several recordings.

    Indexing with an int array or a slice gathers ``(n, window_size, channels)``
    windows on demand, so stride-1 training sets never materialize in full.
    """

    def __init__(self, sessions, spec: WindowSpec, dtype=np.float32):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        self._eeg = []
        starts, owners, targets = [], [], []
        for k, s in enumerate(sessions):
            ends = window_end_indices(s.steps, spec)
            if ends.size == 0:
                log.warning("%s: shorter than the window; skipped", s.key)
                continue
            self._eeg.append(np.asarray(s.eeg, dtype=self.dtype))
            starts.append(ends - (spec.window_size - 1))
            owners.append(np.full(ends.size, len(self._eeg) - 1))
            targets.append(s.stimulus[ends])
        if not self._eeg:
            raise DataError("no recording yields a full window")
        self._starts = np.concatenate(starts)
        self._owners = np.concatenate(owners)
        self.targets = np.concatenate(targets)
        self.channels = self._eeg[0].shape[1]

    def __len__(self) -> int:
        return len(self._starts)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (len(self), self.spec.window_size, self.channels)

    def __getitem__(self, idx) -> np.ndarray:
        if isinstance(idx, slice):
            idx = np.arange(len(self))[idx]
        idx = np.atleast_1d(np.asarray(idx))
        out = np.empty((idx.size, self.spec.window_size, self.channels), dtype=self.dtype)
        offsets = np.arange(self.spec.window_size)
        for owner in np.unique(self._owners[idx]):
            sel = np.nonzero(self._owners[idx] == owner)[0]
            rows = self._starts[idx[sel]][:, None] + offsets
            out[sel] = self._eeg[owner][rows]
        return out
