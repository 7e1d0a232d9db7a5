"""Command-line entry point: ``funcnet {preprocess,train,evaluate,audit,gradcheck}``."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .config import RunConfig
from .exceptions import ConfigError, DataError, NumericError
from .gradcheck import layer_suite
from .metrics import REPORT_FIELDS, evaluate_recordings, summarize_repeats
from .models import (CONTROL_OF, MODEL_SPECS, REPORTED_TOTALS, Model, build_model, count_parameters,
                     model_spec)
from .pipeline import (CacheError, RecordingSession, SplitManifest, TASKS, WindowDataset, WindowSpec,
                       build_split, filter_session, load_eegeyenet, load_recording, participant_of,
                       read_cache, session_from_matrix, session_to_matrix, task_of, write_cache)
from .training import BASELINES, evaluate, run_baseline, train, write_manifest

log = logging.getLogger("funcnet")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _resolve(args) -> RunConfig:
    overrides = {}
    if args.seed is not None:
        overrides[("training", "seed")] = args.seed
    if args.stride is not None:
        overrides[("training", "train_stride")] = args.stride
    if args.unfiltered:
        overrides[("dataset", "filtering")] = "unfiltered"
    if args.model is not None:
        overrides[("model", "name")] = args.model
    if args.out is not None:
        overrides[("output", "dir")] = str(args.out)
    if getattr(args, "task", None):
        overrides[("evaluation", "tasks")] = args.task
    return RunConfig.load(args.config, overrides)


def _data_root(cfg: RunConfig) -> Path:
    root = cfg["dataset"]["root"]
    if not root:
        raise ConfigError("dataset root is not set ([dataset] root or FUNCNET_DATA_ROOT)")
    return Path(root)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    cfg.write(out / "config.ini")
    return out


def _cache_dir(cfg: RunConfig) -> Path:
    d = cfg["dataset"]["cache_dir"]
    return Path(d) if d else Path(cfg["output"]["dir"]) / "cache"


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _cache_paths(cfg: RunConfig, root: Path, source: Path) -> tuple[Path, Path]:
    variant = cfg["dataset"]["filtering"]
    rel = source.relative_to(root).with_suffix("")
    base = _cache_dir(cfg) / variant / rel
    return base.with_suffix(".fnet"), base.with_suffix(".json")


def _cache_meta(cfg: RunConfig, source: Path) -> dict:
    cmap = cfg.column_map()
    return {"source_sha256": _file_digest(source), "filter": asdict(cfg.filter_config()),
            "columns": list(cmap.columns), "n_eeg": len(cmap.eeg), "has_gaze": bool(cmap.gaze)}


def preprocess_one(cfg: RunConfig, root: Path, source: Path) -> str:
    """Write the filtered cache for one recording; returns 'written', 'kept' or 'regenerated'."""
    cache, sidecar = _cache_paths(cfg, root, source)
    meta = _cache_meta(cfg, source)
    status = "written"
    if cache.exists() and sidecar.exists():
        try:
            read_cache(cache)
            if json.loads(sidecar.read_text()) == meta:
                return "kept"
        except CacheError as exc:
            log.warning("corrupt cache %s (%s); regenerating", cache, exc)
            status = "regenerated"
    session = load_recording(source, cfg.column_map())
    session = filter_session(session, cfg.filter_config())
    cache.parent.mkdir(parents=True, exist_ok=True)
    write_cache(cache, session_to_matrix(session))
    sidecar.write_text(json.dumps(meta, indent=2))
    return status


def load_session(cfg: RunConfig, root: Path, source: Path) -> RecordingSession:
    """Recording with the configured filtering, read from the cache when it is current."""
    pattern = cfg["dataset"]["file_pattern"]
    meta = {"participant_id": participant_of(source.relative_to(root), pattern),
            "task": task_of(source.relative_to(root), pattern)}
    cache, sidecar = _cache_paths(cfg, root, source)
    if cache.exists() and sidecar.exists():
        try:
            info = json.loads(sidecar.read_text())
            if info == _cache_meta(cfg, source):
                return session_from_matrix(read_cache(cache), info["n_eeg"], info["has_gaze"], **meta)
        except CacheError as exc:
            log.warning("ignoring corrupt cache %s: %s", cache, exc)
    session = load_recording(source, cfg.column_map(), **meta)
    return filter_session(session, cfg.filter_config())


def _split(cfg: RunConfig) -> SplitManifest:
    d = cfg["dataset"]
    return build_split(_data_root(cfg), d["file_pattern"], seed=d["split_seed"],
                       expected_test=d["test_recordings"] or None)


def _random_bounds(cfg: RunConfig):
    raw = str(cfg["evaluation"]["random_bounds"]).strip()
    if not raw:
        return None
    vals = [float(v) for v in raw.split(",")]
    if len(vals) != 4:
        raise ConfigError("random_bounds must be 'xmin,ymin,xmax,ymax'")
    return [vals[:2], vals[2:]]


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_preprocess(args) -> int:
    cfg = _resolve(args)
    root = _data_root(cfg)
    _out_dir(cfg)
    from .pipeline import discover_recordings
    counts = {"written": 0, "kept": 0, "regenerated": 0}
    for source in discover_recordings(root, cfg["dataset"]["file_pattern"]).values():
        counts[preprocess_one(cfg, root, source)] += 1
    print(f"preprocess: {counts['written']} written, {counts['kept']} unchanged, "
          f"{counts['regenerated']} regenerated -> {_cache_dir(cfg)}")
    return EXIT_OK


def _train_task(cfg: RunConfig, out: Path, x_train, y_train, x_val, y_val, channels: int,
                split_digest: str | None, task: str) -> None:
    tc = cfg.train_config()
    spec = model_spec(cfg["model"]["name"], cfg["model"]["window_size"], channels)
    histories = []
    for r in range(tc.repeats):
        tc_r = cfg.train_config()
        tc_r.seed = tc.seed + r
        model = build_model(spec, tc_r.seed)
        history = train(model, x_train, y_train, tc_r, x_val, y_val)
        model.save(out / f"model_r{r}.npz")
        histories.append(history.to_dict() | {"seed": tc_r.seed})
        print(f"{task} repeat {r}: final train mse {history.train_loss[-1]:.5g}"
              if history.train_loss else f"{task} repeat {r}: no epochs run")
    (out / "history.json").write_text(json.dumps(histories, indent=2))
    write_manifest(out, cfg.to_dict(), tc.seed, split_digest, task=task, model=spec.to_dict(),
                   n_train_windows=len(x_train), train_config=asdict(tc))


def cmd_train(args) -> int:
    cfg = _resolve(args)
    out = _out_dir(cfg)
    window = cfg["model"]["window_size"]
    if cfg["dataset"]["name"] == "eegeyenet":
        root = _data_root(cfg)
        x_tr, y_tr = load_eegeyenet(root / "train.npz")
        x_va, y_va = load_eegeyenet(root / "val.npz") if (root / "val.npz").exists() else (None, None)
        _train_task(cfg, out, x_tr, y_tr, x_va, y_va, x_tr.shape[2], None, "eegeyenet")
        return EXIT_OK
    root = _data_root(cfg)
    split = _split(cfg)
    stride = cfg["training"]["train_stride"]
    limit = cfg["training"]["max_train_recordings"]
    for task in cfg.tasks():
        if task not in TASKS:
            raise ConfigError(f"unknown task '{task}'")
        train_paths = split.train[task][:limit] if limit else split.train[task]
        train_set = WindowDataset([load_session(cfg, root, p) for p in train_paths], WindowSpec(window, stride))
        val_paths = split.validation[task]
        val_set = (WindowDataset([load_session(cfg, root, p) for p in val_paths], WindowSpec(window, stride))
                   if val_paths else None)
        task_out = out / task
        task_out.mkdir(exist_ok=True)
        _train_task(cfg, task_out, train_set, train_set.targets, val_set,
                    None if val_set is None else val_set.targets, train_set.channels, split.digest(), task)
    return EXIT_OK


def _write_report(path: Path, report, **extra) -> None:
    path.write_text(json.dumps(report.to_dict() | extra, indent=2))


def cmd_evaluate(args) -> int:
    cfg = _resolve(args)
    out = _out_dir(cfg)
    ev = cfg["evaluation"]
    window = cfg["model"]["window_size"]
    norm = ev["precision_normalization"]
    if cfg["dataset"]["name"] == "eegeyenet":
        root = _data_root(cfg)
        x_te, y_te = load_eegeyenet(root / "test.npz")
        reports = []
        for path in sorted(out.glob("model_r*.npz")):
            model = Model.load(path)
            pred = model.predict(x_te)
            reports.append(evaluate_recordings([("test", y_te, pred)], norm, ev["unit_factor"]))
            _write_report(out / f"report_{path.stem}.json", reports[-1])
        if not reports:
            raise DataError(f"no trained models under {out}")
        (out / "summary.json").write_text(json.dumps(summarize_repeats(reports), indent=2))
        return EXIT_OK

    root = _data_root(cfg)
    split = _split(cfg)
    for task in cfg.tasks():
        test = [load_session(cfg, root, p) for p in split.test[task]]
        task_out = out / task
        task_out.mkdir(exist_ok=True)
        if args.baseline:
            fit_on = [load_session(cfg, root, p) for p in split.train[task] + split.validation[task]]
            report = run_baseline(args.baseline, fit_on, test, window, cfg["training"]["seed"],
                                  _random_bounds(cfg), norm)
            _write_report(task_out / f"report_{args.baseline}.json", report)
            print(f"{task} {args.baseline}: MED {report.med:.4g}, precision {report.precision:.4g}, "
                  f"corr {report.corr_x:.3f}/{report.corr_y:.3f}")
            continue
        model_paths = [Path(args.model_path)] if args.model_path else sorted(task_out.glob("model_r*.npz"))
        if not model_paths:
            raise DataError(f"no trained model for {task} under {task_out}")
        reports = []
        for path in model_paths:
            model = Model.load(path)
            reports.append(evaluate(model, test, window, norm))
            _write_report(task_out / f"report_{path.stem}.json", reports[-1])
            print(f"{task} {path.stem}: MED {reports[-1].med:.4g}, precision {reports[-1].precision:.4g}")
        if len(reports) > 1:
            (task_out / "summary.json").write_text(json.dumps(summarize_repeats(reports), indent=2))
    write_manifest(out, cfg.to_dict(), cfg["training"]["seed"], split.digest(), command="evaluate",
                   baseline=args.baseline, report_fields=list(REPORT_FIELDS))
    return EXIT_OK


def audit_model(name: str, window: int, channels: int = 4) -> dict:
    report = count_parameters(build_model(model_spec(name, window, channels)))
    entry = {"model": name, "window_size": window, "total": report.total,
             "layers": [{"path": p, "type": k, "params": c} for p, k, c in report.rows]}
    if name in REPORTED_TOTALS:
        ref = REPORTED_TOTALS[name]
        entry["reported_total"] = ref
        entry["deviation"] = report.total / ref - 1.0
    if name in CONTROL_OF:
        twin = count_parameters(build_model(model_spec(CONTROL_OF[name], window, channels))).total
        entry["control_total"] = twin
    entry["table"] = report.format_table()
    return entry


def reconciling_window(name: str, channels: int = 4, candidates=(128, 256, 384, 500, 512, 768, 1000, 1024, 2048)):
    """First candidate window whose total lies within 1% of the reported one."""
    ref = REPORTED_TOTALS[name]
    for window in candidates:
        total = count_parameters(build_model(model_spec(name, window, channels))).total
        if abs(total / ref - 1.0) <= 0.01:
            return window, total
    return None


def cmd_audit(args) -> int:
    names = [args.model] if args.model else list(MODEL_SPECS)
    results = []
    for name in names:
        entry = audit_model(name, args.window, args.channels)
        results.append({k: v for k, v in entry.items() if k != "table"})
        print(f"== {name} (window {args.window}, {args.channels} channels)")
        print(entry["table"])
        if "reported_total" in entry:
            print(f"reported total {entry['reported_total']:,}; deviation {100 * entry['deviation']:+.3f}%")
            if abs(entry["deviation"]) > 0.01:
                match = reconciling_window(name, args.channels)
                if match:
                    print(f"total is window-dependent; window {match[0]} gives {match[1]:,}")
        if "control_total" in entry:
            print(f"control twin total {entry['control_total']:,}")
        print()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "audit.json").write_text(json.dumps(results, indent=2))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    reports = layer_suite(seed=args.seed or 0)
    ok = True
    for name, rep in reports.items():
        status = "PASS" if rep.passed else "FAIL"
        ok &= rep.passed
        detail = rep.failure or f"max rel err {rep.worst:.2e}"
        print(f"{status} {name}: {detail}")
    return EXIT_OK if ok else EXIT_NUMERIC


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI run configuration")
    common.add_argument("--task", choices=TASKS, help="restrict to one task")
    common.add_argument("--model", choices=sorted(MODEL_SPECS), help="architecture name")
    common.add_argument("--seed", type=int)
    common.add_argument("--stride", type=int, help="training window stride in samples")
    common.add_argument("--unfiltered", action="store_true", help="skip notch and bandpass filtering")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="funcnet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("preprocess", parents=[common], help="filter recordings into the binary cache")
    sub.add_parser("train", parents=[common], help="train a model per task")
    p = sub.add_parser("evaluate", parents=[common], help="score trained models or a baseline")
    p.add_argument("--baseline", choices=sorted(BASELINES))
    p.add_argument("--model-path", help="evaluate this model file instead of the run directory's")
    p = sub.add_parser("audit", parents=[common], help="per-layer trainable parameter table")
    p.add_argument("--window", type=int, default=512)
    p.add_argument("--channels", type=int, default=4)
    sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient checks")
    return parser


COMMANDS = {"preprocess": cmd_preprocess, "train": cmd_train, "evaluate": cmd_evaluate,
            "audit": cmd_audit, "gradcheck": cmd_gradcheck}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
