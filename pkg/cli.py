"""
cli.py

Command line surface of the toolkit. Every command resolves its configuration,
creates a run directory under the output root, records itself in the run registry
and maps failures to exit codes.

Commands:
- synth: Generate a synthetic corpus and its manifest.
- manifest: Build a manifest from a corpus directory ('class-dirs' or 'esc' layout).
- stats: Corpus summary for a manifest and split.
- preprocess: Write frame caches of the train and test splits.
- train: Train a dnn/cnn (or custom) network; writes a checkpoint, metrics CSV and run record.
- eval: Evaluate a checkpoint with probability or majority voting.
- compare: Train and evaluate the architecture x feature-mode grid.
- runs: List the run registry, or plot the learning curves of registry runs (--plot).

Key Classes:
- RunConfig: Resolved configuration of a pipeline command.

Key Functions:
- main(argv): Parse, dispatch and return the exit code
  (0 success, 2 usage/config, 3 numeric failure, 1 other).
- configure_logging(output_root, level)
- resolve_config(args, command): CLI flags > --config file > preset defaults.

Dependencies:
- argparse, json, hashlib, logging, concurrent.futures
- numpy, pandas
- every toolkit module

Usage:
    python AudioEventApp.py synth --classes 4 --clips 40 --seconds 1 --seed 7 --out corpus/
    python AudioEventApp.py train --arch dnn --features freq --manifest corpus/manifest.csv
    python AudioEventApp.py eval --checkpoint runs/<run>/model.ckpt --manifest corpus/manifest.csv
Environment variable AER_OUTPUT_ROOT sets the output root (default 'runs').
"""
import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime
from pathlib import Path

import numpy as np
import pandas as pd

from compare_graph import comparison_graph, load_data_from_database
from create_pdf import create_pdf
from dataset import alternate_split, corpus_statistics, kfold_split, load_manifest, \
    manifest_from_directory, save_manifest, synth_corpus, validation_split, LAYOUTS, RECIPE_SETS
from db_model import REGISTRY_FILE, make_session
from errors import AudioEventError, ConfigError, DivergenceError, NonFiniteError
from evaluator import evaluate, VotingMethod
from frontend import build_frame_set, feature_length, read_frame_cache, write_frame_cache, \
    FeatureMode, FramingConfig
from neural_core import load_checkpoint, save_checkpoint, Network, NetworkSpec, PRESETS
from repository import Repository
from trainer import fit, init_parameters, rng_streams, write_history, TrainConfig, PRESET_TRAINING

OUTPUT_ROOT_ENV = "AER_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "runs"
LOG_FORMAT = "%(asctime)s %(levelname)s: in %(filename)s %(message)s"
RUN_RECORD = "run_record.json"
SPLITS = ("alternate", "kfold")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


@dataclass
class RunConfig:
    """
    Resolved configuration of a pipeline command.

    `lr_halving_period` and `epochs` default to the architecture preset; every other
    training field defaults to the TrainConfig default.
    """
    command: str = "train"
    arch: str = "dnn"
    spec_file: str = None
    feature_mode: str = "freq"
    manifest: str = None
    split: str = "alternate"
    folds: int = 5
    held_out: int = 0
    val_fraction: float = 0.0
    window_ms: float = 150.0
    step_ms: float = 5.0
    sample_rate: int = 16000
    base_lr: float = 0.05
    lr_halving_period: int = None
    epochs: int = None
    batch_size: int = 256
    momentum: float = 0.9
    max_norm_limit: float = 1.0
    schedule: str = "recurring"
    seed: int = 0
    checkpoint_every: int = 0
    workers: int = 1
    debug: bool = False
    checkpoint: str = None
    voting: str = "probability"
    pdf: bool = False
    archs: list = field(default_factory=lambda: ["dnn", "cnn"])
    feature_modes: list = field(default_factory=lambda: ["time", "freq"])
    seeds: int = 1
    jobs: int = 1

    def resolve(self):
        """Fill preset defaults and validate; raises ConfigError."""
        try:
            if self.spec_file is None and self.arch not in PRESETS:
                raise ValueError(f"unknown architecture '{self.arch}' (expected one of {', '.join(PRESETS)})")
            self.feature_mode = FeatureMode.parse(self.feature_mode).value
            self.feature_modes = [FeatureMode.parse(mode).value for mode in self.feature_modes]
            unknown = [arch for arch in self.archs if arch not in PRESETS]
            if unknown:
                raise ValueError(f"unknown architecture(s) {', '.join(unknown)}")
            if self.split not in SPLITS:
                raise ValueError(f"unknown split '{self.split}' (expected one of {', '.join(SPLITS)})")
            VotingMethod(self.voting)
            if self.seeds < 1 or self.jobs < 1 or self.workers < 1:
                raise ValueError("--seeds, --jobs and --workers must be >= 1")
            if not 0.0 <= self.val_fraction < 1.0:
                raise ValueError(f"--val-fraction must be in [0, 1), got {self.val_fraction}")
            for arch in set(self.archs) | {self.arch}:
                self.train_config(arch)
            self.framing()
        except ValueError as e:
            raise ConfigError(str(e)) from e
        for name in ("manifest", "spec_file", "checkpoint"):
            value = getattr(self, name)
            if value is not None and not Path(value).is_file():
                raise ConfigError(f"{name} '{value}' does not exist")
        return self

    def fill_preset_training(self):
        """Replace unset epochs / halving period by the values of this config's preset."""
        period, epochs = PRESET_TRAINING.get(self.arch, PRESET_TRAINING["dnn"])
        if self.lr_halving_period is None:
            self.lr_halving_period = period
        if self.epochs is None:
            self.epochs = epochs

    def train_config(self, arch=None, seed=None):
        """TrainConfig for `arch` (default: this config's arch); unset fields follow its preset."""
        period, epochs = PRESET_TRAINING.get(arch or self.arch, PRESET_TRAINING["dnn"])
        if self.lr_halving_period is not None:
            period = self.lr_halving_period
        if self.epochs is not None:
            epochs = self.epochs
        return TrainConfig(base_lr=self.base_lr, lr_halving_period=period, epochs=epochs,
                           batch_size=self.batch_size, momentum=self.momentum,
                           max_norm_limit=self.max_norm_limit,
                           seed=self.seed if seed is None else seed, schedule=self.schedule)

    def framing(self):
        return FramingConfig(self.window_ms, self.step_ms, self.sample_rate)

    def to_dict(self):
        return asdict(self)


CONFIG_FIELDS = {f.name for f in fields(RunConfig)}


def load_config_file(path):
    """Read a JSON config or a run record (its 'config' member is used)."""
    try:
        with open(path, "r", encoding="utf-8") as file:
            data = json.load(file)
    except (OSError, ValueError) as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    if "config" in data and isinstance(data["config"], dict):
        data = data["config"]
    unknown = sorted(set(data) - CONFIG_FIELDS)
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {', '.join(unknown)}")
    return data


def resolve_config(args, command):
    """
    Build the RunConfig of a command.

    Precedence: flags given on the command line > values of --config > defaults.
    """
    values = {}
    if getattr(args, "config", None):
        values.update(load_config_file(args.config))
    for name in CONFIG_FIELDS:
        value = getattr(args, name, None)
        if value is not None and value is not False:
            values[name] = value
    values["command"] = command
    return RunConfig(**values).resolve()


def output_root():
    return Path(os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT))


def configure_logging(root, level="INFO"):
    root.mkdir(parents=True, exist_ok=True)
    logging.basicConfig(
        filename=str(root / "log.txt"),
        level=getattr(logging, str(level).upper(), logging.INFO),
        format=LOG_FORMAT,
        force=True,
    )


def make_run_dir(command, seed, out=None):
    """`out` if given, else <root>/<YYYYmmdd-HHMMSS>-<command>-seed<seed> (suffixed if taken)."""
    if out is not None:
        run_dir = Path(out)
    else:
        stem = f"{datetime.now():%Y%m%d-%H%M%S}-{command}-seed{seed}"
        run_dir = output_root() / stem
        suffix = 1
        while run_dir.exists():
            suffix += 1
            run_dir = output_root() / f"{stem}-{suffix}"
    run_dir.mkdir(parents=True, exist_ok=True)
    return run_dir


def write_run_record(run_dir, cfg, argv):
    record = {
        "command": cfg.command,
        "argv": list(argv),
        "run_dir": str(run_dir),
        "created": datetime.now().isoformat(timespec="seconds"),
        "versions": {"numpy": np.__version__, "pandas": pd.__version__},
        "config": cfg.to_dict(),
    }
    path = Path(run_dir) / RUN_RECORD
    path.write_text(json.dumps(record, indent=2, sort_keys=True), encoding="utf-8")
    return path


def open_repository():
    return Repository(make_session(output_root() / REGISTRY_FILE))


def make_plan(manifest, cfg):
    if cfg.split == "kfold":
        try:
            return kfold_split(manifest, cfg.folds, cfg.held_out)
        except ValueError as e:
            raise ConfigError(str(e)) from e
    return alternate_split(manifest)


def build_spec(cfg, num_classes, input_length, arch=None):
    """Preset or custom NetworkSpec whose input matches the feature length."""
    if cfg.spec_file is not None and arch is None:
        try:
            spec = NetworkSpec.from_json_file(cfg.spec_file)
        except (ValueError, KeyError, TypeError) as e:
            raise ConfigError(f"invalid spec file {cfg.spec_file}: {e}") from e
        if spec.input_length != input_length:
            raise ConfigError(f"spec input is {spec.input_length} values, {cfg.feature_mode} "
                              f"frames have {input_length}")
        if spec.num_classes != num_classes:
            raise ConfigError(f"spec has {spec.num_classes} outputs, manifest has {num_classes} classes")
        return spec
    try:
        return PRESETS[arch or cfg.arch](num_classes, input_length)
    except ValueError as e:
        raise ConfigError(f"{arch or cfg.arch} does not fit {input_length}-value inputs: {e}") from e


def checkpoint_metadata(cfg, class_names, arch=None, mode=None):
    return {
        "arch": arch or cfg.arch,
        "feature_mode": mode or cfg.feature_mode,
        "framing": cfg.framing().to_dict(),
        "class_names": list(class_names),
        "seed": cfg.seed,
    }


def _registry_call(repository, method, *args, **kwargs):
    # registry failures are logged by the repository and must not abort a run
    if repository is None:
        return None
    try:
        return getattr(repository, method)(*args, **kwargs)
    except Exception as e:
        logging.error("Run registry unavailable (%s): %s", method, str(e))
        return None


# --- commands ---

def cmd_synth(args):
    if args.classes < 2:
        raise ConfigError(f"--classes must be at least 2, got {args.classes}")
    if args.clips < 1 or args.seconds <= 0:
        raise ConfigError("--clips must be >= 1 and --seconds positive")
    out = Path(args.out) if args.out else make_run_dir("synth", args.seed)
    try:
        recipes = RECIPE_SETS[args.recipes](args.classes)
        _, manifest_path = synth_corpus(out, args.classes, args.clips, args.seconds, args.seed,
                                        snr_db=args.snr_db, folds=args.folds, recipes=recipes)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    digest = hashlib.sha256(manifest_path.read_bytes()).hexdigest()
    print(f"Manifest: {manifest_path}")
    print(f"SHA-256: {digest}")
    return EXIT_OK


def cmd_manifest(args):
    manifest = manifest_from_directory(args.root, args.layout, args.pattern)
    out = Path(args.out) if args.out else Path(args.root) / "manifest.csv"
    save_manifest(manifest, out)
    print(f"Manifest: {out} ({len(manifest.entries)} files, {manifest.num_classes} classes)")
    return EXIT_OK


def cmd_stats(args, argv):
    cfg = resolve_config(args, "stats")
    if cfg.manifest is None:
        raise ConfigError("--manifest is required")
    manifest = load_manifest(cfg.manifest)
    stats = corpus_statistics(manifest, make_plan(manifest, cfg), cfg.framing())
    table = pd.DataFrame([stats])
    print(table.to_string(index=False))
    if args.out:
        table.to_csv(args.out, index=False)
    return EXIT_OK


def cmd_preprocess(args, argv):
    cfg = resolve_config(args, "preprocess")
    if cfg.manifest is None:
        raise ConfigError("--manifest is required")
    run_dir = make_run_dir("preprocess", cfg.seed, args.out)
    write_run_record(run_dir, cfg, argv)
    manifest = load_manifest(cfg.manifest)
    plan = make_plan(manifest, cfg)
    for part in ("train", "test"):
        entries = getattr(plan, part)
        if not entries:
            continue
        frame_set = build_frame_set(entries, cfg.feature_mode, cfg.framing(), cfg.workers)
        path = write_frame_cache(run_dir / f"{part}_{cfg.feature_mode}.aerf", frame_set)
        print(f"{part}: {frame_set.num_frames} frames -> {path}")
    return EXIT_OK


def cmd_train(args, argv):
    cfg = resolve_config(args, "train")
    if cfg.manifest is None:
        raise ConfigError("--manifest is required")
    manifest = load_manifest(cfg.manifest)
    framing = cfg.framing()
    input_length = feature_length(cfg.feature_mode, framing.window_samples)
    spec = build_spec(cfg, manifest.num_classes, input_length)
    plan = make_plan(manifest, cfg)
    train_entries, val_entries = validation_split(plan.train, cfg.val_fraction, cfg.seed)
    if not train_entries:
        raise ConfigError("the training split is empty")

    cfg.fill_preset_training()
    run_dir = make_run_dir("train", cfg.seed, args.out)
    write_run_record(run_dir, cfg, argv)
    repository = open_repository()
    run = _registry_call(repository, "create_run", "train", spec.name, cfg.feature_mode, cfg.seed,
                         cfg.to_dict(), run_dir)
    run_id = run.run_id if run is not None else None

    def record_epoch(row):
        if run_id is not None:
            _registry_call(repository, "record_epoch", run_id, row)

    checkpoint_dir = None
    if cfg.checkpoint_every:
        checkpoint_dir = run_dir / "checkpoints"
        checkpoint_dir.mkdir(exist_ok=True)
    try:
        train_set = build_frame_set(train_entries, cfg.feature_mode, framing, cfg.workers)
        val_set = build_frame_set(val_entries, cfg.feature_mode, framing, cfg.workers) if val_entries else None
        network = Network(spec, init_parameters(spec, rng_streams(cfg.seed)["init"]), debug=cfg.debug)
        metadata = checkpoint_metadata(cfg, manifest.class_names, spec.name)
        result = fit(network, train_set, cfg.train_config(), validation=val_set,
                     metrics_path=run_dir / "metrics.csv", checkpoint_dir=checkpoint_dir,
                     checkpoint_every=cfg.checkpoint_every, checkpoint_metadata=metadata,
                     epoch_callback=record_epoch)
        checkpoint_path = run_dir / "model.ckpt"
        save_checkpoint(checkpoint_path, result.network, dict(metadata, epoch=result.state.epoch))
    except Exception as e:
        if run_id is not None:
            _registry_call(repository, "finish_run", run_id, "failed", str(e))
        raise
    if run_id is not None:
        _registry_call(repository, "finish_run", run_id)
    print(f"Checkpoint: {checkpoint_path}")
    print(f"Metrics: {run_dir / 'metrics.csv'}")
    if len(result.history):
        last = result.history.iloc[-1]
        print(f"Final epoch {int(last['epoch'])}: loss {last['train_loss']:.4f}, "
              f"train frame f-score {100 * last['train_frame_fscore']:.1f}")
    return EXIT_OK


def cmd_eval(args, argv):
    cfg = resolve_config(args, "eval")
    if cfg.checkpoint is None or cfg.manifest is None:
        raise ConfigError("--checkpoint and --manifest are required")
    network, metadata = load_checkpoint(cfg.checkpoint)
    stored_mode = metadata.get("feature_mode")
    if args.feature_mode is not None and stored_mode and FeatureMode.parse(args.feature_mode).value != stored_mode:
        raise ConfigError(f"checkpoint was trained on {stored_mode} features, not {args.feature_mode}")
    mode = stored_mode or cfg.feature_mode
    framing = FramingConfig(**metadata["framing"]) if "framing" in metadata else cfg.framing()
    expected = feature_length(mode, framing.window_samples)
    if network.spec.input_length != expected:
        raise ConfigError(f"checkpoint input is {network.spec.input_length} values, "
                          f"{mode} frames have {expected}")
    manifest = load_manifest(cfg.manifest)
    if manifest.num_classes != network.num_classes:
        raise ConfigError(f"checkpoint has {network.num_classes} classes, manifest has {manifest.num_classes}")
    entries = make_plan(manifest, cfg).test
    if args.subset == "all":
        entries = manifest.sorted().entries
    if not entries:
        raise ConfigError("the evaluation split is empty")

    run_dir = make_run_dir("eval", cfg.seed, args.out)
    write_run_record(run_dir, cfg, argv)
    repository = open_repository()
    run = _registry_call(repository, "create_run", "eval", metadata.get("arch", network.spec.name),
                         mode, cfg.seed, cfg.to_dict(), run_dir)
    frame_set = build_frame_set(entries, mode, framing, cfg.workers)
    class_names = metadata.get("class_names", manifest.class_names)
    report = evaluate(network, frame_set, cfg.voting, class_names)
    stem = run_dir / f"report_{report.voting.value}"
    Path(f"{stem}.txt").write_text(report.to_text() + "\n", encoding="utf-8")
    report.write_csv(f"{stem}.csv")
    report.write_confusion_csv(run_dir / f"confusion_{report.voting.value}.csv")
    if cfg.pdf:
        create_pdf(report, f"{stem}.pdf", {"Checkpoint": cfg.checkpoint, "Features": mode,
                                            "Architecture": metadata.get("arch", network.spec.name),
                                            "Manifest": cfg.manifest})
    if run is not None:
        _registry_call(repository, "record_evaluation", run.run_id, report)
        _registry_call(repository, "finish_run", run.run_id)
    print(report.to_text())
    print(f"Report: {stem}.csv")
    return EXIT_OK


def run_cell(job):
    """
    Train and evaluate one compare cell from cached frames.

    Runs in a worker process when --jobs > 1, so it only takes and returns plain data.
    """
    arch, mode, seed = job["arch"], job["mode"], job["seed"]
    try:
        train_set = read_frame_cache(job["train_cache"])
        test_set = read_frame_cache(job["test_cache"])
        val_set = read_frame_cache(job["val_cache"]) if job["val_cache"] else test_set
        spec = PRESETS[arch](len(job["class_names"]), train_set.feature_length)
        cfg = TrainConfig(**job["train_config"])
        network = Network(spec, init_parameters(spec, rng_streams(seed)["init"]), debug=job["debug"])
        result = fit(network, train_set, cfg, validation=val_set)
        report = evaluate(network, test_set, job["voting"], job["class_names"])
    except (AudioEventError, ValueError, FloatingPointError) as e:
        logging.error("Compare cell %s/%s seed %d failed: %s", arch, mode, seed, str(e))
        return {"arch": arch, "mode": mode, "seed": seed, "status": "failed", "error": str(e),
                "history": None, "macro_fscore": None}
    return {"arch": arch, "mode": mode, "seed": seed, "status": "finished", "error": "",
            "history": result.history.to_dict("records"), "macro_fscore": report.macro_fscore,
            "class_fscores": [float(f) for f in report.fscore], "num_files": report.num_files}


def summarize_cells(results, archs, modes):
    """Long table (arch, feature_mode, seeds, median/min/max macro f-score, status)."""
    rows = []
    for arch in archs:
        for mode in modes:
            cell = [r for r in results if r["arch"] == arch and r["mode"] == mode]
            scores = [r["macro_fscore"] for r in cell if r["status"] == "finished"]
            failed = len(scores) != len(cell)
            rows.append({
                "arch": arch, "feature_mode": mode, "seeds": len(cell),
                "median_fscore": float(np.median(scores)) if scores and not failed else np.nan,
                "min_fscore": float(np.min(scores)) if scores and not failed else np.nan,
                "max_fscore": float(np.max(scores)) if scores and not failed else np.nan,
                "status": "failed" if failed else "finished",
            })
    return pd.DataFrame(rows)


def format_compare_table(summary, archs, modes):
    """Architecture rows x feature-mode columns of median macro f-scores in percent."""
    def cell_text(row):
        if row["status"] == "failed":
            return "failed"
        text = f"{100 * row['median_fscore']:.1f}"
        if row["seeds"] > 1:
            text += f" [{100 * row['min_fscore']:.1f}-{100 * row['max_fscore']:.1f}]"
        return text

    width = max(12, *(len(mode) + 2 for mode in modes))
    lines = [f"{'':<8}" + "".join(f"{mode:>{width + 6}}" for mode in modes)]
    for arch in archs:
        cells = [cell_text(summary[(summary.arch == arch) & (summary.feature_mode == mode)].iloc[0])
                 for mode in modes]
        lines.append(f"{arch:<8}" + "".join(f"{cell:>{width + 6}}" for cell in cells))
    return "\n".join(lines)


def cmd_compare(args, argv):
    cfg = resolve_config(args, "compare")
    if cfg.manifest is None:
        raise ConfigError("--manifest is required")
    manifest = load_manifest(cfg.manifest)
    framing = cfg.framing()
    for arch in cfg.archs:
        for mode in cfg.feature_modes:
            build_spec(cfg, manifest.num_classes, feature_length(mode, framing.window_samples), arch)
    plan = make_plan(manifest, cfg)
    train_entries, val_entries = validation_split(plan.train, cfg.val_fraction, cfg.seed)
    if not train_entries or not plan.test:
        raise ConfigError("compare needs non-empty train and test splits")

    run_dir = make_run_dir("compare", cfg.seed, args.out)
    write_run_record(run_dir, cfg, argv)
    cache_dir = run_dir / "cache"
    cache_dir.mkdir(exist_ok=True)
    caches = {}
    for mode in cfg.feature_modes:
        paths = {}
        for part, entries in (("train", train_entries), ("val", val_entries), ("test", plan.test)):
            if entries:
                frame_set = build_frame_set(entries, mode, framing, cfg.workers)
                paths[part] = str(write_frame_cache(cache_dir / f"{part}_{mode}.aerf", frame_set))
        caches[mode] = paths

    jobs = []
    for arch in cfg.archs:
        for mode in cfg.feature_modes:
            for offset in range(cfg.seeds):
                seed = cfg.seed + offset
                jobs.append({
                    "arch": arch, "mode": mode, "seed": seed,
                    "train_cache": caches[mode]["train"], "test_cache": caches[mode]["test"],
                    "val_cache": caches[mode].get("val"),
                    "train_config": cfg.train_config(arch, seed).to_dict(),
                    "class_names": manifest.class_names, "voting": cfg.voting, "debug": cfg.debug,
                })
    logging.info("Compare grid: %d cells x %d seeds", len(cfg.archs) * len(cfg.feature_modes), cfg.seeds)
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(run_cell, jobs))
    else:
        results = [run_cell(job) for job in jobs]

    repository = open_repository()
    curves = []
    for job, result in zip(jobs, results):
        run = _registry_call(repository, "create_run", "compare-cell", result["arch"], result["mode"],
                             result["seed"], job["train_config"], run_dir)
        if result["history"] is not None:
            frame = pd.DataFrame(result["history"])
            frame.insert(0, "seed", result["seed"])
            frame.insert(0, "feature_mode", result["mode"])
            frame.insert(0, "arch", result["arch"])
            curves.append(frame)
        if run is None:
            continue
        for row in result["history"] or []:
            _registry_call(repository, "record_epoch", run.run_id, row)
        _registry_call(repository, "finish_run", run.run_id, result["status"], result["error"])

    if curves:
        all_curves = pd.concat(curves, ignore_index=True)
        write_history(all_curves, run_dir / "curves.csv")
        for (arch, mode), frame in all_curves.groupby(["arch", "feature_mode"], sort=False):
            write_history(frame, run_dir / f"curves_{arch}_{mode}.csv")
        comparison_graph(all_curves, run_dir / "curves.png")

    summary = summarize_cells(results, cfg.archs, cfg.feature_modes)
    summary.to_csv(run_dir / "compare_table.csv", index=False, float_format="%.10g")
    table = format_compare_table(summary, cfg.archs, cfg.feature_modes)
    (run_dir / "compare_table.txt").write_text(table + "\n", encoding="utf-8")
    print("Macro f-score (%)")
    print(table)
    print(f"Results: {run_dir}")
    failed = [r for r in results if r["status"] == "failed"]
    if failed:
        logging.error("%d compare cell(s) failed", len(failed))
        return EXIT_FAILURE
    return EXIT_OK


def cmd_runs(args):
    repository = open_repository()
    if args.plot:
        curves = load_data_from_database(repository, args.plot)
        repository.close_session()
        if curves.empty:
            raise ConfigError(f"no epoch metrics recorded for runs {args.plot}")
        out = Path(args.out) if args.out else output_root() / "runs_curves.png"
        comparison_graph(curves, out, args.metric, label_columns=("label",))
        print(f"Curves: {out}")
        return EXIT_OK
    table = repository.runs_frame(args.command_filter)
    repository.close_session()
    if table.empty:
        print("No runs recorded.")
    else:
        print(table.to_string(index=False))
    return EXIT_OK


# --- parser ---

def _add_pipeline_options(parser, training=True):
    parser.add_argument("--config", help="JSON config file or run_record.json to relaunch")
    parser.add_argument("--manifest", help="Manifest CSV (path,label,fold)")
    parser.add_argument("--features", dest="feature_mode",
                        help="time, freq, freq-mag or freq-phase (default freq)")
    parser.add_argument("--split", choices=SPLITS, help="alternate (default) or kfold")
    parser.add_argument("--folds", type=int, help="K for --split kfold (default 5)")
    parser.add_argument("--held-out", dest="held_out", type=int, help="Test fold for --split kfold")
    parser.add_argument("--window-ms", dest="window_ms", type=float, help="Frame length (default 150)")
    parser.add_argument("--step-ms", dest="step_ms", type=float, help="Frame hop (default 5)")
    parser.add_argument("--seed", type=int, help="Run seed (default 0)")
    parser.add_argument("--workers", type=int, help="Files decoded concurrently")
    parser.add_argument("--out", help="Run directory (default: a new directory under the output root)")
    if not training:
        return
    parser.add_argument("--arch", help="dnn (default) or cnn")
    parser.add_argument("--spec", dest="spec_file", help="Custom NetworkSpec JSON file")
    parser.add_argument("--val-fraction", dest="val_fraction", type=float,
                        help="Share of every training class held out for the validation curve")
    parser.add_argument("--lr", dest="base_lr", type=float, help="Base learning rate (default 0.05)")
    parser.add_argument("--lr-period", dest="lr_halving_period", type=int,
                        help="Epochs between learning-rate halvings (preset default)")
    parser.add_argument("--schedule", choices=("recurring", "single"), help="Halving schedule")
    parser.add_argument("--epochs", type=int, help="Training epochs (preset default)")
    parser.add_argument("--batch-size", dest="batch_size", type=int, help="Frames per batch (default 256)")
    parser.add_argument("--momentum", type=float, help="Momentum (default 0.9)")
    parser.add_argument("--max-norm", dest="max_norm_limit", type=float, help="Max-norm limit (default 1)")
    parser.add_argument("--checkpoint-every", dest="checkpoint_every", type=int,
                        help="Write a checkpoint every N epochs")
    parser.add_argument("--debug", action="store_true", help="Check every activation for NaN/Inf")


def _csv_list(text):
    return [item.strip() for item in text.split(",") if item.strip()]


def _csv_int_list(text):
    return [int(item) for item in _csv_list(text)]


def build_parser():
    parser = argparse.ArgumentParser(prog="AudioEventApp",
                                     description="Audio event recognition in the time and frequency domain")
    parser.add_argument("--log-level", default="INFO", help="Log level for log.txt (default INFO)")
    commands = parser.add_subparsers(dest="command", required=True)

    synth = commands.add_parser("synth", help="Generate a synthetic corpus")
    synth.add_argument("--classes", type=int, default=4)
    synth.add_argument("--clips", type=int, default=40, help="Clips per class")
    synth.add_argument("--seconds", type=float, default=1.0, help="Clip duration")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--snr-db", dest="snr_db", type=float, default=10.0)
    synth.add_argument("--folds", type=int, default=5)
    synth.add_argument("--recipes", choices=sorted(RECIPE_SETS), default="default",
                       help="Class preset: tones, noise, AM tones and chirps, or noise textures")
    synth.add_argument("--out", help="Corpus directory")

    manifest = commands.add_parser("manifest", help="Build a manifest from a corpus directory")
    manifest.add_argument("--root", required=True, help="Corpus root, one directory per class")
    manifest.add_argument("--layout", choices=LAYOUTS, default="class-dirs")
    manifest.add_argument("--pattern", default="*.wav")
    manifest.add_argument("--out", help="Manifest path (default <root>/manifest.csv)")

    stats = commands.add_parser("stats", help="Corpus statistics")
    _add_pipeline_options(stats, training=False)

    preprocess = commands.add_parser("preprocess", help="Write frame caches")
    _add_pipeline_options(preprocess, training=False)

    train = commands.add_parser("train", help="Train a network")
    _add_pipeline_options(train)

    evaluation = commands.add_parser("eval", help="Evaluate a checkpoint")
    _add_pipeline_options(evaluation, training=False)
    evaluation.add_argument("--checkpoint", help="Checkpoint written by train")
    evaluation.add_argument("--voting", choices=[v.value for v in VotingMethod])
    evaluation.add_argument("--subset", choices=("test", "all"), default="test")
    evaluation.add_argument("--pdf", action="store_true", help="Also write a PDF report")

    compare = commands.add_parser("compare", help="Train and evaluate the arch x feature grid")
    _add_pipeline_options(compare)
    compare.add_argument("--archs", type=_csv_list, help="Comma-separated presets (default dnn,cnn)")
    compare.add_argument("--feature-modes", dest="feature_modes", type=_csv_list,
                         help="Comma-separated feature modes (default time,freq)")
    compare.add_argument("--seeds", type=int, help="Seeds per cell (median and range reported)")
    compare.add_argument("--jobs", type=int, help="Cells trained in parallel processes")
    compare.add_argument("--voting", choices=[v.value for v in VotingMethod])

    runs = commands.add_parser("runs", help="List the run registry")
    runs.add_argument("--command", dest="command_filter", help="Only runs of this command")
    runs.add_argument("--plot", type=_csv_int_list, help="Comma-separated run ids whose learning curves are plotted")
    runs.add_argument("--metric", default="train_frame_fscore",
                      choices=("train_frame_fscore", "val_frame_fscore", "train_loss", "lr"))
    runs.add_argument("--out", help="Image path for --plot (default <output root>/runs_curves.png)")
    return parser


def main(argv=None):
    """Run one command and return its exit code."""
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_CONFIG
    configure_logging(output_root(), args.log_level)
    logging.info("Command: %s", " ".join(argv))
    handlers = {
        "synth": lambda: cmd_synth(args),
        "manifest": lambda: cmd_manifest(args),
        "stats": lambda: cmd_stats(args, argv),
        "preprocess": lambda: cmd_preprocess(args, argv),
        "train": lambda: cmd_train(args, argv),
        "eval": lambda: cmd_eval(args, argv),
        "compare": lambda: cmd_compare(args, argv),
        "runs": lambda: cmd_runs(args),
    }
    try:
        return handlers[args.command]()
    except ConfigError as e:
        logging.error("Configuration error: %s", str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, NonFiniteError) as e:
        logging.error("Numeric failure: %s", str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (AudioEventError, ValueError, OSError) as e:
        logging.error("%s failed: %s", args.command, str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE
    except Exception as e:
        logging.exception("Unexpected error in %s", args.command)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE
