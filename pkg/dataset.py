"""
dataset.py

This module handles corpora through CSV manifests: loading and saving them,
building them from the usual directory layouts, splitting them with the two
evaluation protocols (every other recording per class, K-fold cross validation),
summarising them, and generating a synthetic corpus of tones, filtered noise,
modulated tones and chirps for desk-scale experiments.

Key Classes:
- ManifestEntry: (path, label, fold) of one file.
- Manifest: Entries plus the class-name table.
- SplitPlan: Train/test entry lists and the protocol that produced them.
- SynthRecipe: Parameters of one synthetic class.

Key Functions:
- load_manifest(path), save_manifest(manifest, path)
- manifest_from_directory(root, layout): 'class-dirs' or 'esc' layouts.
- alternate_split(manifest), kfold_split(manifest, k, held_out)
- validation_split(entries, fraction, seed)
- corpus_statistics(manifest, plan, framing)
- default_recipes(num_classes), texture_recipes(num_classes): Synthetic class presets.
- synth_corpus(out_dir, ...)

Dependencies:
- numpy
- pandas
- scipy.signal (butter, sosfilt, chirp)
- audio_ingest, frontend

Usage:
Manifests are CSV files with the header `path,label,fold`. Paths are stored
relative to the manifest's directory; labels are class names; fold is blank for
corpora without predefined folds.
"""
import logging
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.signal import butter, chirp, sosfilt

from audio_ingest import AudioClip, decode_wav, encode_wav, TARGET_SAMPLE_RATE
from frontend import FramingConfig, frame_count

MANIFEST_COLUMNS = ["path", "label", "fold"]
LAYOUTS = ("class-dirs", "esc")


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: int
    fold: int = None


def _class_sort_key(name):
    # numeric labels sort by value, everything else alphabetically
    return (0, int(name), "") if name.isdigit() else (1, 0, name)


@dataclass
class Manifest:
    """
    Labelled file list.

    Attributes:
        entries (list[ManifestEntry]): Files with dense labels 0..m-1.
        class_names (list[str]): Name of every label.
    """
    entries: list
    class_names: list

    def __post_init__(self):
        self.entries = list(self.entries)
        self.class_names = list(self.class_names)
        paths = [entry.path for entry in self.entries]
        if len(set(paths)) != len(paths):
            raise ValueError("manifest paths must be unique")
        for entry in self.entries:
            if not 0 <= entry.label < len(self.class_names):
                raise ValueError(f"{entry.path}: label {entry.label} outside 0..{len(self.class_names) - 1}")
            if entry.fold is not None and entry.fold < 0:
                raise ValueError(f"{entry.path}: negative fold {entry.fold}")

    @property
    def num_classes(self):
        return len(self.class_names)

    @property
    def has_folds(self):
        return bool(self.entries) and all(entry.fold is not None for entry in self.entries)

    @property
    def num_folds(self):
        return max(entry.fold for entry in self.entries) + 1 if self.has_folds else 0

    def by_class(self):
        """Entries of every class, sorted by path (the canonical order)."""
        groups = [[] for _ in self.class_names]
        for entry in self.entries:
            groups[entry.label].append(entry)
        return [sorted(group, key=lambda entry: entry.path) for group in groups]

    def sorted(self):
        return Manifest([entry for group in self.by_class() for entry in group], self.class_names)


def load_manifest(path):
    """
    Read a manifest CSV.

    Raises:
        ValueError: Missing header columns, empty labels or non-integer folds.
    """
    path = Path(path)
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing = [column for column in ("path", "label") if column not in frame.columns]
    if missing:
        raise ValueError(f"{path}: manifest header lacks {', '.join(missing)}")
    if (frame["label"].str.strip() == "").any():
        raise ValueError(f"{path}: empty label")
    names = sorted(frame["label"].str.strip().unique(), key=_class_sort_key)
    index = {name: i for i, name in enumerate(names)}
    folds = frame["fold"] if "fold" in frame.columns else pd.Series([""] * len(frame))
    entries = []
    for file_path, label, fold in zip(frame["path"], frame["label"].str.strip(), folds):
        resolved = Path(file_path)
        if not resolved.is_absolute():
            resolved = path.parent / resolved
        fold = fold.strip()
        try:
            fold_index = int(fold) if fold else None
        except ValueError:
            raise ValueError(f"{path}: fold '{fold}' of {file_path} is not an integer") from None
        entries.append(ManifestEntry(str(resolved), index[label], fold_index))
    manifest = Manifest(entries, names)
    logging.info("Loaded manifest %s: %d files, %d classes", path, len(entries), len(names))
    return manifest


def save_manifest(manifest, path):
    """Write a manifest CSV; paths under the manifest's directory are stored relative to it."""
    path = Path(path)
    base = path.parent.resolve()
    rows = []
    for entry in manifest.entries:
        entry_path = Path(entry.path)
        try:
            entry_path = entry_path.resolve().relative_to(base)
        except ValueError:
            pass
        rows.append({"path": entry_path.as_posix(), "label": manifest.class_names[entry.label],
                     "fold": "" if entry.fold is None else str(entry.fold)})
    pd.DataFrame(rows, columns=MANIFEST_COLUMNS).to_csv(path, index=False, lineterminator="\n")
    return path


_ESC_NAME = re.compile(r"^(\d+)-")


def manifest_from_directory(root, layout="class-dirs", pattern="*.wav"):
    """
    Build a manifest from a directory tree.

    Args:
        root (str | Path): Corpus root with one sub-directory per class.
        layout (str): 'class-dirs' (no folds) or 'esc' (fold = leading file-name number - 1,
            e.g. '3-141240-A.wav' is fold 2).
        pattern (str): File glob inside each class directory.

    Returns:
        Manifest
    """
    if layout not in LAYOUTS:
        raise ValueError(f"unknown layout '{layout}' (expected one of {', '.join(LAYOUTS)})")
    root = Path(root)
    class_dirs = sorted((d for d in root.iterdir() if d.is_dir()), key=lambda d: _class_sort_key(d.name))
    entries = []
    for label, class_dir in enumerate(class_dirs):
        files = sorted(class_dir.glob(pattern))
        if not files:
            logging.warning("Class directory %s holds no %s files", class_dir, pattern)
        for file in files:
            fold = None
            if layout == "esc":
                match = _ESC_NAME.match(file.name)
                if match is None:
                    raise ValueError(f"{file.name}: no leading fold number")
                fold = int(match.group(1)) - 1
            entries.append(ManifestEntry(str(file), label, fold))
    return Manifest(entries, [d.name for d in class_dirs])


@dataclass
class SplitPlan:
    """
    Train/test partition of a manifest.

    Attributes:
        train (list[ManifestEntry])
        test (list[ManifestEntry])
        protocol (str): 'alternate' or 'kfold'.
        folds (int): K for kfold plans.
        held_out (int): Test fold for kfold plans.
    """
    train: list
    test: list
    protocol: str
    folds: int = None
    held_out: int = None

    def describe(self):
        if self.protocol == "kfold":
            return f"kfold(K={self.folds}, held_out={self.held_out})"
        return self.protocol


def alternate_split(manifest):
    """Per class, in path order: even positions train, odd positions test."""
    train, test = [], []
    for label, group in enumerate(manifest.by_class()):
        if not group:
            logging.warning("Class %s has no files; it keeps zero support", manifest.class_names[label])
        train.extend(group[0::2])
        test.extend(group[1::2])
    logging.info("Alternate split: %d train, %d test files", len(train), len(test))
    return SplitPlan(train, test, "alternate")


def kfold_split(manifest, k=5, held_out=0):
    """
    Hold out one predefined fold.

    Raises:
        ValueError: k < 2, held_out outside 0..k-1, or entries without (or beyond) a fold.
    """
    if k < 2:
        raise ValueError(f"K-fold needs K >= 2, got {k}")
    if not 0 <= held_out < k:
        raise ValueError(f"held-out fold {held_out} outside 0..{k - 1}")
    if not manifest.has_folds:
        raise ValueError("manifest has no fold column (or some entries lack a fold)")
    beyond = [entry.path for entry in manifest.entries if entry.fold >= k]
    if beyond:
        raise ValueError(f"{len(beyond)} entries have folds >= {k}, e.g. {beyond[0]}")
    ordered = manifest.sorted().entries
    train = [entry for entry in ordered if entry.fold != held_out]
    test = [entry for entry in ordered if entry.fold == held_out]
    logging.info("Fold %d of %d held out: %d train, %d test files", held_out, k, len(train), len(test))
    return SplitPlan(train, test, "kfold", k, held_out)


def validation_split(entries, fraction, seed=0):
    """
    Stratified hold-out of `fraction` of every class.

    Returns:
        tuple[list, list]: (remaining training entries, validation entries), both in input order.
    """
    if not 0.0 <= fraction < 1.0:
        raise ValueError(f"validation fraction must be in [0, 1), got {fraction}")
    entries = list(entries)
    if fraction == 0.0:
        return entries, []
    rng = np.random.default_rng(seed)
    chosen = set()
    for label in sorted({entry.label for entry in entries}):
        members = [i for i, entry in enumerate(entries) if entry.label == label]
        count = int(round(fraction * len(members)))
        if len(members) > 1:
            count = min(max(count, 1), len(members) - 1)
        else:
            count = 0
        chosen.update(members[i] for i in rng.permutation(len(members))[:count])
    train = [entry for i, entry in enumerate(entries) if i not in chosen]
    validation = [entry for i, entry in enumerate(entries) if i in chosen]
    return train, validation


def corpus_statistics(manifest, plan=None, framing=None):
    """
    Corpus summary: classes, total minutes, average seconds per file, and
    train/test files and frames when a plan is given.

    Returns:
        dict
    """
    framing = framing or FramingConfig()
    window, step = framing.window_samples, framing.step_samples
    samples = {}
    for entry in manifest.entries:
        clip = decode_wav(Path(entry.path).read_bytes(), entry.path)
        # length after resampling to the framing rate
        samples[entry.path] = int(np.floor(clip.num_samples * framing.sample_rate / clip.sample_rate + 0.5))
    seconds = np.array(list(samples.values()), dtype=np.float64) / framing.sample_rate
    stats = {
        "classes": manifest.num_classes,
        "files": len(manifest.entries),
        "total_minutes": float(seconds.sum() / 60.0),
        "average_seconds": float(seconds.mean()) if seconds.size else 0.0,
    }
    if plan is not None:
        for part in ("train", "test"):
            entries = getattr(plan, part)
            stats[f"{part}_files"] = len(entries)
            stats[f"{part}_frames"] = int(sum(frame_count(samples[e.path], window, step) for e in entries))
    return stats


# --- synthetic corpus ---

RECIPE_KINDS = ("tone", "noise", "am", "chirp")
# highest recipe band edge as a fraction of the Nyquist frequency
RECIPE_BAND_LIMIT = 0.9
# lowest repetition factor of the default set, relative to the highest
LOWEST_FACTOR = 0.25


@dataclass(frozen=True)
class SynthRecipe:
    """
    One synthetic class.

    Attributes:
        kind (str): tone, noise (band-pass filtered), am (modulated tone) or chirp.
        frequency (float): Tone/carrier frequency, noise band centre or chirp start (Hz).
        bandwidth (float): Noise band width (Hz).
        modulation (float): AM rate (Hz).
        end_frequency (float): Chirp end frequency (Hz).
    """
    kind: str
    frequency: float
    bandwidth: float = 0.0
    modulation: float = 0.0
    end_frequency: float = 0.0

    def __post_init__(self):
        if self.kind not in RECIPE_KINDS:
            raise ValueError(f"unknown recipe kind '{self.kind}'")

    @property
    def name(self):
        return f"{self.kind}{int(round(self.frequency))}"

    def band(self):
        """Frequency band (Hz) holding most of the class energy."""
        if self.kind == "tone":
            return self.frequency - 40.0, self.frequency + 40.0
        if self.kind == "noise":
            return self.frequency - self.bandwidth / 2, self.frequency + self.bandwidth / 2
        if self.kind == "am":
            return self.frequency - 2 * self.modulation - 40.0, self.frequency + 2 * self.modulation + 40.0
        return min(self.frequency, self.end_frequency), max(self.frequency, self.end_frequency)

    def scaled(self, factor):
        """The same recipe with every frequency multiplied by `factor`."""
        return SynthRecipe(self.kind, self.frequency * factor, self.bandwidth * factor,
                           self.modulation, self.end_frequency * factor)

    def check(self, sample_rate):
        """
        Raises:
            ValueError: The band is not strictly inside (0, sample_rate / 2).
        """
        low, high = self.band()
        if low <= 0.0 or high >= sample_rate / 2:
            raise ValueError(f"recipe {self.name}: band {low:.0f}-{high:.0f} Hz is outside "
                             f"(0, {sample_rate / 2:.0f}) Hz")


def default_recipes(num_classes, sample_rate=TARGET_SAMPLE_RATE):
    """
    The four base recipes (440 Hz tone, 1.7-2.3 kHz noise, 1.2 kHz AM tone,
    2.6-4.2 kHz chirp), repeated for more classes.

    Each repetition of the set is scaled by its own factor. The factors are spread
    geometrically from LOWEST_FACTOR of the highest factor up to the highest one,
    which puts the top band edge at RECIPE_BAND_LIMIT of the Nyquist frequency.
    Up to four classes the base frequencies are kept unless they do not fit.
    """
    base = [SynthRecipe("tone", 440.0),
            SynthRecipe("noise", 2000.0, bandwidth=600.0),
            SynthRecipe("am", 1200.0, modulation=8.0),
            SynthRecipe("chirp", 2600.0, end_frequency=4200.0)]
    top = max(recipe.band()[1] for recipe in base)
    highest = RECIPE_BAND_LIMIT * (sample_rate / 2) / top
    repetitions = -(-num_classes // len(base))
    if repetitions == 1:
        factors = [min(1.0, highest)]
    else:
        factors = np.geomspace(LOWEST_FACTOR * highest, highest, repetitions)
    return [base[i % len(base)].scaled(float(factors[i // len(base)])) for i in range(num_classes)]


def texture_recipes(num_classes, sample_rate=TARGET_SAMPLE_RATE):
    """
    A 440 Hz tone followed by band-pass noise classes in adjacent, non-overlapping
    constant-Q bands from 1.2 kHz upwards.

    The noise classes differ only in their spectral envelope, so single frames of
    them are told apart by band energy rather than by waveform shape.
    """
    recipes = [SynthRecipe("tone", 440.0)]
    bands = num_classes - 1
    lowest = min(1200.0, 0.15 * sample_rate)
    limit = RECIPE_BAND_LIMIT * sample_rate / 2
    ratio = 4.0 / 3.0
    if bands > 1:
        # every band spans 80 % of its geometric slot, so the top edge stays below centre * 1.12
        ratio = min(ratio, (limit / 1.12 / lowest) ** (1.0 / (bands - 1)))
    width = 0.8 * (np.sqrt(ratio) - 1.0 / np.sqrt(ratio))
    for k in range(bands):
        centre = lowest * ratio ** k
        recipes.append(SynthRecipe("noise", centre, bandwidth=width * centre))
    return recipes


RECIPE_SETS = {"default": default_recipes, "textures": texture_recipes}


def _render(recipe, num_samples, sample_rate, rng):
    t = np.arange(num_samples) / sample_rate
    phase = rng.uniform(0.0, 2 * np.pi)
    if recipe.kind == "tone":
        return np.sin(2 * np.pi * recipe.frequency * t + phase)
    if recipe.kind == "noise":
        low, high = recipe.band()
        sos = butter(4, [low, high], btype="bandpass", fs=sample_rate, output="sos")
        return sosfilt(sos, rng.standard_normal(num_samples))
    if recipe.kind == "am":
        depth = rng.uniform(0.5, 0.9)
        envelope = 1.0 + depth * np.sin(2 * np.pi * recipe.modulation * t + rng.uniform(0.0, 2 * np.pi))
        return envelope * np.sin(2 * np.pi * recipe.frequency * t + phase)
    if recipe.kind == "chirp":
        duration = num_samples / sample_rate
        return chirp(t, recipe.frequency, duration, recipe.end_frequency, method="linear",
                     phi=np.degrees(phase))
    raise ValueError(f"unknown recipe kind '{recipe.kind}'")


def synth_clip(recipe, num_samples, sample_rate, rng, snr_db=10.0):
    """Signal of `recipe` plus white Gaussian noise at `snr_db`, scaled to a random peak level in [0.3, 0.9]."""
    signal = _render(recipe, num_samples, sample_rate, rng)
    signal = signal / np.sqrt(np.mean(signal ** 2))
    noise = rng.standard_normal(num_samples) * 10.0 ** (-snr_db / 20.0)
    mixed = signal + noise
    gain = rng.uniform(0.3, 0.9)
    return mixed * (gain / np.max(np.abs(mixed)))


def synth_corpus(out_dir, num_classes=4, clips_per_class=40, clip_seconds=1.0, seed=0,
                 snr_db=10.0, folds=5, sample_rate=TARGET_SAMPLE_RATE, recipes=None):
    """
    Write a synthetic corpus and its manifest.

    Every clip draws from its own generator seeded by (seed, class, clip), so the
    output is byte-identical for identical arguments. Files are 16-bit PCM mono WAV.

    Args:
        out_dir (str | Path): Target directory (created if needed).
        num_classes (int): At least 2.
        clips_per_class (int): Files per class.
        clip_seconds (float): Clip duration.
        seed (int): Corpus seed.
        snr_db (float): Signal-to-noise ratio of the additive white noise.
        folds (int): Fold count; clip i of every class is assigned fold i % folds.
        sample_rate (int): Output sample rate.
        recipes (list[SynthRecipe]): Overrides `default_recipes(num_classes, sample_rate)`.

    Returns:
        tuple[Manifest, Path]: The manifest and the path of the written manifest.csv.

    Raises:
        ValueError: Bad counts, or a recipe band that does not fit below the Nyquist frequency.
    """
    if num_classes < 2:
        raise ValueError(f"a corpus needs at least 2 classes, got {num_classes}")
    if clips_per_class < 1:
        raise ValueError(f"clips_per_class must be >= 1, got {clips_per_class}")
    if folds < 1:
        raise ValueError(f"folds must be >= 1, got {folds}")
    recipes = recipes or default_recipes(num_classes, sample_rate)
    if len(recipes) != num_classes:
        raise ValueError(f"{len(recipes)} recipes for {num_classes} classes")
    for recipe in recipes:
        recipe.check(sample_rate)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    num_samples = int(round(clip_seconds * sample_rate))

    class_names = [f"{label:02d}_{recipe.name}" for label, recipe in enumerate(recipes)]
    entries = []
    for label, recipe in enumerate(recipes):
        class_dir = out_dir / class_names[label]
        class_dir.mkdir(exist_ok=True)
        for clip in range(clips_per_class):
            rng = np.random.default_rng([seed, label, clip])
            samples = synth_clip(recipe, num_samples, sample_rate, rng, snr_db)
            file = class_dir / f"{class_names[label]}_{clip:03d}.wav"
            file.write_bytes(encode_wav(AudioClip(samples, sample_rate, str(file))))
            entries.append(ManifestEntry(str(file), label, clip % folds))
    manifest = Manifest(entries, class_names)
    manifest_path = save_manifest(manifest, out_dir / "manifest.csv")
    logging.info("Synthetic corpus: %d classes x %d clips in %s", num_classes, clips_per_class, out_dir)
    return manifest, manifest_path
