"""Command-line entry point.

    eegdeep {synth,preprocess,train,grid,subjects} --config run.json [--jobs N] [--seed S] [--out DIR]

Relative paths in the config resolve against the config file's directory.
Outputs are assembled in a staging directory and moved into ``--out`` only
when the command succeeds.  Failures print one JSON line to stderr,
``{"error": <kind>, "message": <text>}``, and exit nonzero.
"""

import argparse
import copy
from dataclasses import asdict, fields
import json
import os
from pathlib import Path
import shutil
import sys
import tempfile

from . import report
from .data import ConfigError, DataError, SplitSpec, load_trialset, remove_nan_trials, save_trialset, split, synth_trialset
from .dsp import DownsampleSpec, mean_subtract, preprocess_rnn
from .models import CNN_GRID, CnnHyper, MixedSpec, Model, STACKED_DROPOUT, STACKED_UNITS, build_cnn, build_mixed, build_stacked
from .npyio import NpyFormatError
from .training import TrainConfig, TrainingError, grid_search, subject_study, train

FAMILIES = ("cnn", "lstm", "gru", "mixed")
FAMILY_MEAN_MODE = {"cnn": "examples", "mixed": "time", "lstm": None, "gru": None}
FAMILY_TRAIN_DEFAULTS = {
    "cnn": {"optimizer": "adam", "epochs": 100},
    "mixed": {"optimizer": "adam", "epochs": 100},
    "lstm": {"optimizer": "rmsprop", "epochs": 150},
    "gru": {"optimizer": "rmsprop", "epochs": 150},
}
REPORT_FORMATS = {"csv", "svg"}
SYNTH_KEYS = {"n_per_class", "seed", "n_samples", "noise_sigma", "noise_by_subject", "phase_per_trial"}


def _make(cls, block, where, **extra):
    """Instantiate a config dataclass, reporting stray keys as a config error."""
    known = {f.name for f in fields(cls)} - set(extra)
    unknown = set(block) - known
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")
    return cls(**block, **extra)


def load_config(path, overrides=None):
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    return normalize_config(raw, path.parent, overrides or {})


def normalize_config(raw, base_dir=Path("."), overrides=None):
    """Fill family defaults, apply CLI overrides and validate consistency."""
    cfg = copy.deepcopy(raw)
    overrides = overrides or {}
    family = cfg.get("family", "cnn")
    if family not in FAMILIES:
        raise ConfigError(f"family must be one of {FAMILIES}, got {family!r}")
    cfg["family"] = family

    paths = {k: v for k, v in cfg.get("paths", {}).items() if v is not None}
    for k, v in paths.items():
        paths[k] = str((Path(base_dir) / v) if not Path(v).is_absolute() else Path(v))
    if overrides.get("out"):
        paths["out"] = overrides["out"]
    paths.setdefault("out", str(Path(base_dir) / "out"))
    cfg["paths"] = paths

    pre = dict(cfg.get("preprocess", {}))
    pre.setdefault("cutoff_hz", 5.0)
    pre.setdefault("sample_rate_hz", 250.0)
    if "mean_subtract" not in pre:
        pre["mean_subtract"] = FAMILY_MEAN_MODE[family]
    m = pre.get("downsample")
    if family in ("cnn", "mixed"):
        if m is not None:
            raise ConfigError(f"family={family!r} forbids preprocess.downsample (got {m})")
        if pre["mean_subtract"] != FAMILY_MEAN_MODE[family]:
            raise ConfigError(
                f"family={family!r} requires preprocess.mean_subtract="
                f"{FAMILY_MEAN_MODE[family]!r}, got {pre['mean_subtract']!r}"
            )
    else:
        if not isinstance(m, int) or not 25 <= m <= 800:
            raise ConfigError(f"family={family!r} requires preprocess.downsample in [25, 800], got {m!r}")
        if pre["mean_subtract"] is not None:
            raise ConfigError(
                f"family={family!r} forbids preprocess.mean_subtract (got {pre['mean_subtract']!r})"
            )
    cfg["preprocess"] = pre

    tr = dict(FAMILY_TRAIN_DEFAULTS[family])
    tr.update(cfg.get("train", {}))
    sp = dict(cfg.get("split", {}))
    sy = dict(cfg.get("synth", {}))
    if overrides.get("seed") is not None:
        for block in (tr, sp, sy):
            block["seed"] = overrides["seed"]
    cfg["train"] = asdict(_make(TrainConfig, tr, "train"))
    sp.setdefault("seed", cfg["train"]["seed"])
    cfg["split"] = asdict(_make(SplitSpec, sp, "split"))
    sy.setdefault("n_per_class", 50)
    sy.setdefault("seed", cfg["train"]["seed"])
    sy.setdefault("n_samples", 1000)
    sy.setdefault("noise_sigma", 0.5)
    sy.setdefault("noise_by_subject", None)
    sy.setdefault("phase_per_trial", False)
    unknown = set(sy) - SYNTH_KEYS
    if unknown:
        raise ConfigError(f"unknown synth keys: {sorted(unknown)}")
    cfg["synth"] = sy

    formats = set(cfg.get("reports", ["csv", "svg"]))
    if not formats <= REPORT_FORMATS or "csv" not in formats:
        raise ConfigError(f"reports must include 'csv' and be a subset of {sorted(REPORT_FORMATS)}")
    cfg["reports"] = sorted(formats)
    cfg["model"] = dict(cfg.get("model", {}))
    grid = cfg.get("grid")
    if grid is not None:
        bad = set(grid) - set(CNN_GRID)
        if bad:
            raise ConfigError(f"unknown grid axes: {sorted(bad)}")
        cfg["grid"] = {k: tuple(v) for k, v in grid.items()}
    return cfg


def _require_inputs(cfg):
    p = cfg["paths"]
    for key in ("trials", "labels"):
        if key not in p:
            raise ConfigError(f"paths.{key} is required")
    for key in ("trials", "labels", "subjects"):
        if key in p and not Path(p[key]).is_file():
            raise FileNotFoundError(f"paths.{key}: no such file {p[key]}")


def load_data(cfg):
    _require_inputs(cfg)
    p = cfg["paths"]
    ts = load_trialset(p["trials"], p["labels"], p.get("subjects"), cfg["preprocess"]["sample_rate_hz"])
    return remove_nan_trials(ts)


def preprocess(ts, cfg):
    pre = cfg["preprocess"]
    if cfg["family"] in ("lstm", "gru"):
        spec = DownsampleSpec(pre["downsample"], pre["cutoff_hz"], pre["sample_rate_hz"])
        if spec.m > ts.x.shape[-1]:
            raise ConfigError(f"preprocess.downsample={spec.m} exceeds trial length {ts.x.shape[-1]}")
        return preprocess_rnn(ts, spec)
    return ts.with_x(mean_subtract(ts.x, pre["mean_subtract"]))


def build_spec(cfg, ts):
    family, opts = cfg["family"], cfg["model"]
    n_samples = ts.x.shape[-1]
    if family == "cnn":
        h = _make(CnnHyper, opts, "model", batch_size=cfg["train"]["batch_size"], lr=cfg["train"]["lr"])
        return build_cnn(h, n_samples=n_samples)
    if family == "mixed":
        return build_mixed(_make(MixedSpec, opts, "model"), n_samples=n_samples)
    if set(opts) - {"units", "dropouts"}:
        raise ConfigError(f"unknown model keys: {sorted(set(opts) - {'units', 'dropouts'})}")
    return build_stacked(
        family, n_steps=n_samples,
        units=tuple(opts.get("units", STACKED_UNITS)),
        dropouts=tuple(opts.get("dropouts", STACKED_DROPOUT)),
    )


def _manifest(cfg, **extra):
    m = {
        "family": cfg["family"],
        "seed": cfg["train"]["seed"],
        "downsample": cfg["preprocess"].get("downsample"),
        "cutoff_hz": cfg["preprocess"]["cutoff_hz"],
        "mean_subtract": cfg["preprocess"]["mean_subtract"],
        "split": cfg["split"],
        "train": cfg["train"],
    }
    m.update(extra)
    return m


def _write_json(path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=list) + "\n")


def cmd_synth(cfg, stage, jobs=1):
    sy = cfg["synth"]
    ts = synth_trialset(
        int(sy["n_per_class"]), seed=int(sy["seed"]), n_samples=int(sy["n_samples"]),
        noise_by_subject=sy["noise_by_subject"], noise_sigma=float(sy["noise_sigma"]),
        phase_per_trial=bool(sy["phase_per_trial"]),
    )
    save_trialset(ts, stage)
    _write_json(stage / "manifest.json", dict(
        sy, command="synth", shape=list(ts.x.shape), sample_rate_hz=ts.sample_rate_hz,
    ))


def cmd_preprocess(cfg, stage, jobs=1):
    ts = preprocess(load_data(cfg), cfg)
    save_trialset(ts, stage)
    _write_json(stage / "manifest.json", _manifest(
        cfg, command="preprocess", shape=list(ts.x.shape), sample_rate_hz=ts.sample_rate_hz,
        sources={k: v for k, v in cfg["paths"].items() if k != "out"},
    ))


def _splits(cfg):
    ts = preprocess(load_data(cfg), cfg)
    return ts, split(ts, SplitSpec(**cfg["split"]))


def cmd_train(cfg, stage, jobs=1):
    ts, (train_set, val_set, test_set) = _splits(cfg)
    spec = build_spec(cfg, ts)
    tcfg = TrainConfig(**cfg["train"])
    model = Model(spec, seed=tcfg.seed)
    record = train(model, train_set, val_set, test_set, tcfg)
    report.write_history_csv(record, stage / "history.csv")
    report.write_summary_csv([record], stage / "summary.csv")
    if "svg" in cfg["reports"]:
        report.plot_history(record, stage / "loss.svg", stage / "accuracy.svg")
    model.save(stage / "checkpoint")
    _write_json(stage / "manifest.json", _manifest(
        cfg, command="train", model=spec.name, param_count=model.param_count(),
        sizes={"train": len(train_set), "val": len(val_set), "test": len(test_set)},
    ))


def cmd_grid(cfg, stage, jobs=1):
    if cfg["family"] != "cnn":
        raise ConfigError(f"grid search is defined for family='cnn', got family={cfg['family']!r}")
    _, data = _splits(cfg)
    rows = grid_search(TrainConfig(**cfg["train"]), data, restrict=cfg.get("grid"), jobs=jobs)
    report.write_grid_csv(rows, stage / "grid.csv")
    if "svg" in cfg["reports"]:
        report.plot_grid(rows, stage / "grid.svg")
    _write_json(stage / "manifest.json", _manifest(cfg, command="grid", runs=len(rows), grid=cfg.get("grid")))


def cmd_subjects(cfg, stage, jobs=1):
    ts = preprocess(load_data(cfg), cfg)
    spec = build_spec(cfg, ts)
    rows = subject_study(ts, spec, TrainConfig(**cfg["train"]), SplitSpec(**cfg["split"]))
    report.write_subjects_csv(rows, stage / "subjects.csv")
    report.write_summary_csv([r.record for r in rows], stage / "summary.csv")
    if "svg" in cfg["reports"]:
        report.plot_subjects(rows, stage / "subjects.svg")
    _write_json(stage / "manifest.json", _manifest(cfg, command="subjects", model=spec.name))


COMMANDS = {
    "synth": cmd_synth,
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "grid": cmd_grid,
    "subjects": cmd_subjects,
}


def run(command, cfg, jobs=1):
    """Run one command, publishing its outputs into ``cfg['paths']['out']`` on success."""
    out = Path(cfg["paths"]["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".stage-", dir=out.parent))
    try:
        COMMANDS[command](cfg, stage, jobs=jobs)
        out.mkdir(parents=True, exist_ok=True)
        for item in sorted(stage.iterdir()):
            target = out / item.name
            if target.is_dir():
                shutil.rmtree(target)
            os.replace(item, target)
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    return out


def _parser():
    p = argparse.ArgumentParser(prog="eegdeep", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON configuration file")
    p.add_argument("--jobs", type=int, default=1, help="parallel runs for grid search")
    p.add_argument("--seed", type=int, default=None, help="override every seed in the config")
    p.add_argument("--out", default=None, help="override paths.out")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config, {"seed": args.seed, "out": args.out})
        out = run(args.command, cfg, jobs=max(1, args.jobs))
    except (ConfigError, DataError, NpyFormatError, FileNotFoundError, TrainingError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1
    print(json.dumps({"ok": True, "command": args.command, "out": str(out)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
