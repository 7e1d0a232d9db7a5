"""INI-style run configuration with typed defaults and strict key checking."""

from __future__ import annotations

import configparser
import os
from pathlib import Path

from .exceptions import ConfigError
from .pipeline import DEFAULT_PATTERN, ColumnMap, FilterConfig, TEST_RECORDINGS_PER_TASK
from .training import TrainConfig

DATA_ROOT_ENV = "FUNCNET_DATA_ROOT"

# Every option with its default; the type of the default fixes the parser.
DEFAULTS: dict[str, dict[str, object]] = {
    "dataset": {
        "name": "consumer",
        "root": "",
        "file_pattern": DEFAULT_PATTERN,
        "eeg_columns": "TP9,TP10,AF7,AF8",
        "stimulus_columns": "Stimulus_x,Stimulus_y",
        "gaze_columns": "Gaze_x,Gaze_y",
        "filtering": "filtered",
        "notch_q": 30.0,
        "filter_order": 4,
        "zero_phase": False,
        "cache_dir": "",
        "test_recordings": TEST_RECORDINGS_PER_TASK,
        "split_seed": 0,
    },
    "model": {
        "name": "min_functional",
        "window_size": 512,
    },
    "training": {
        "learning_rate": 0.0008,
        "batch_size": 384,
        "epochs": 30,
        "early_stopping_patience": 0,
        "seed": 0,
        "repeats": 1,
        "train_stride": 1,
        "standardize": False,
        "max_train_recordings": 0,
    },
    "evaluation": {
        "tasks": "level1_saccades,level1_smooth,level2_saccades,level2_smooth",
        "precision_normalization": "n",
        "unit_factor": 1.0,
        "random_bounds": "",
    },
    "output": {
        "dir": "runs/latest",
    },
}

# Values that differ from the consumer defaults when dataset.name = eegeyenet.
EEGEYENET_DEFAULTS = {
    ("model", "window_size"): 500,
    ("training", "learning_rate"): 0.0001,
    ("training", "batch_size"): 64,
    ("training", "epochs"): 50,
    ("training", "early_stopping_patience"): 20,
    ("training", "repeats"): 5,
    ("evaluation", "unit_factor"): 0.5,
}


def _coerce(section: str, key: str, raw: str, default):
    try:
        if isinstance(default, bool):
            lowered = raw.strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as {type(default).__name__}") from None
    return raw.strip()


class RunConfig:
    """Resolved configuration: defaults, then the file, then explicit overrides."""

    def __init__(self, values: dict[str, dict[str, object]]):
        self.values = values

    def __getitem__(self, section: str) -> dict[str, object]:
        return self.values[section]

    @classmethod
    def load(cls, path=None, overrides: dict[tuple[str, str], object] | None = None) -> "RunConfig":
        given: dict[tuple[str, str], object] = {}
        if path is not None:
            parser = configparser.ConfigParser(interpolation=None)
            parser.optionxform = str
            if not Path(path).is_file():
                raise ConfigError(f"config file not found: {path}")
            try:
                parser.read(path)
            except configparser.Error as exc:
                raise ConfigError(f"{path}: {exc}") from exc
            for section in parser.sections():
                if section not in DEFAULTS:
                    raise ConfigError(f"{path}: unknown section [{section}]")
                for key, raw in parser.items(section):
                    if key not in DEFAULTS[section]:
                        raise ConfigError(f"{path}: unknown key '{key}' in [{section}]")
                    given[(section, key)] = _coerce(section, key, raw, DEFAULTS[section][key])
        for (section, key), value in (overrides or {}).items():
            if section not in DEFAULTS or key not in DEFAULTS[section]:
                raise ConfigError(f"unknown option {section}.{key}")
            given[(section, key)] = value

        values = {s: dict(opts) for s, opts in DEFAULTS.items()}
        dataset = given.get(("dataset", "name"), values["dataset"]["name"])
        if dataset not in ("consumer", "eegeyenet"):
            raise ConfigError(f"[dataset] name must be 'consumer' or 'eegeyenet', got {dataset!r}")
        if dataset == "eegeyenet":
            for (section, key), value in EEGEYENET_DEFAULTS.items():
                values[section][key] = value
        for (section, key), value in given.items():
            values[section][key] = value
        if os.environ.get(DATA_ROOT_ENV) and ("dataset", "root") not in (overrides or {}):
            values["dataset"]["root"] = os.environ[DATA_ROOT_ENV]
        cfg = cls(values)
        cfg.train_config()
        if values["dataset"]["filtering"] not in ("filtered", "unfiltered"):
            raise ConfigError("[dataset] filtering must be 'filtered' or 'unfiltered'")
        return cfg

    def write(self, path) -> None:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        for section, opts in self.values.items():
            parser[section] = {k: str(v) for k, v in opts.items()}
        with Path(path).open("w") as fh:
            parser.write(fh)

    def to_dict(self) -> dict:
        return {s: dict(o) for s, o in self.values.items()}

    # typed views ---------------------------------------------------------
    def column_map(self) -> ColumnMap:
        d = self["dataset"]
        split = lambda s: tuple(c.strip() for c in str(s).split(",") if c.strip())
        gaze = split(d["gaze_columns"])
        stim = split(d["stimulus_columns"])
        if len(stim) != 2 or (gaze and len(gaze) != 2):
            raise ConfigError("stimulus_columns and gaze_columns must name two columns each")
        return ColumnMap(split(d["eeg_columns"]), stim, gaze or None)

    def filter_config(self) -> FilterConfig:
        d = self["dataset"]
        return FilterConfig(enabled=d["filtering"] == "filtered", notch_q=d["notch_q"],
                            order=d["filter_order"], zero_phase=d["zero_phase"])

    def train_config(self) -> TrainConfig:
        t = self["training"]
        cfg = TrainConfig(learning_rate=t["learning_rate"], batch_size=t["batch_size"], max_epochs=t["epochs"],
                          early_stopping_patience=t["early_stopping_patience"] or None, seed=t["seed"],
                          repeats=t["repeats"], dataset=self["dataset"]["name"],
                          filtering=self["dataset"]["filtering"], window_size=self["model"]["window_size"],
                          train_stride=t["train_stride"], standardize=t["standardize"])
        cfg.validate()
        if cfg.train_stride < 1:
            raise ConfigError("train_stride must be >= 1")
        return cfg

    def tasks(self) -> list[str]:
        return [t.strip() for t in str(self["evaluation"]["tasks"]).split(",") if t.strip()]
