import logging

import numpy as np
import pytest

from audio_ingest import decode_wav
from dataset import Manifest, ManifestEntry, alternate_split, corpus_statistics, default_recipes, \
    kfold_split, load_manifest, manifest_from_directory, save_manifest, synth_corpus, SynthRecipe, \
    texture_recipes, validation_split
from frontend import dft_real


def fake_manifest(counts, folds=None):
    """In-memory manifest with `counts[c]` entries of class c; fold i % folds when folds is set."""
    entries = []
    for label, count in enumerate(counts):
        for i in range(count):
            entries.append(ManifestEntry(f"/data/c{label}/f{i:03d}.wav", label,
                                         None if folds is None else i % folds))
    return Manifest(entries, [f"c{label}" for label in range(len(counts))])


def paths(entries):
    return [entry.path for entry in entries]


class TestManifest:

    def test_duplicate_paths(self):
        entry = ManifestEntry("/a.wav", 0)
        with pytest.raises(ValueError):
            Manifest([entry, entry], ["x"])

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            Manifest([ManifestEntry("/a.wav", 2)], ["x", "y"])

    def test_folds(self):
        assert fake_manifest([4, 4], folds=2).num_folds == 2
        assert not fake_manifest([4, 4]).has_folds

    def test_save_and_load(self, tmp_path):
        manifest = Manifest([ManifestEntry(str(tmp_path / "b" / "1.wav"), 1, 0),
                             ManifestEntry(str(tmp_path / "a" / "1.wav"), 0, 1)], ["a", "b"])
        path = save_manifest(manifest, tmp_path / "manifest.csv")
        assert (tmp_path / "manifest.csv").read_text().splitlines() == \
            ["path,label,fold", "b/1.wav,b,0", "a/1.wav,a,1"]
        loaded = load_manifest(path)
        assert loaded.class_names == ["a", "b"]
        assert loaded.entries == manifest.entries

    def test_numeric_class_names_sort_by_value(self, tmp_path):
        path = tmp_path / "manifest.csv"
        path.write_text("path,label\nx.wav,10\ny.wav,2\nz.wav,1\n")
        manifest = load_manifest(path)
        assert manifest.class_names == ["1", "2", "10"]
        assert [entry.label for entry in manifest.entries] == [2, 1, 0]
        assert not manifest.has_folds

    @pytest.mark.parametrize("text", ["file,label\na.wav,x\n", "path,label\na.wav,\n",
                                      "path,label,fold\na.wav,x,one\n"])
    def test_invalid_files(self, tmp_path, text):
        path = tmp_path / "manifest.csv"
        path.write_text(text)
        with pytest.raises(ValueError):
            load_manifest(path)

    def test_from_directory(self, tmp_path):
        for name in ("dog/1-100-A.wav", "dog/2-101-A.wav", "rain/5-200-B.wav"):
            (tmp_path / name).parent.mkdir(exist_ok=True)
            (tmp_path / name).write_bytes(b"")
        (tmp_path / "empty").mkdir()
        plain = manifest_from_directory(tmp_path)
        assert plain.class_names == ["dog", "empty", "rain"]
        assert not plain.has_folds
        esc = manifest_from_directory(tmp_path, layout="esc")
        assert [entry.fold for entry in esc.entries] == [0, 1, 4]
        assert [entry.label for entry in esc.entries] == [0, 0, 2]

    def test_unknown_layout(self, tmp_path):
        with pytest.raises(ValueError):
            manifest_from_directory(tmp_path, layout="flat")


class TestSplits:

    def test_alternate(self):
        manifest = Manifest([ManifestEntry(name, 0) for name in ("d", "b", "a", "c")], ["x"])
        plan = alternate_split(manifest)
        assert paths(plan.train) == ["a", "c"]
        assert paths(plan.test) == ["b", "d"]
        assert plan.describe() == "alternate"

    def test_alternate_single_file_class(self):
        plan = alternate_split(fake_manifest([3, 1]))
        assert [entry.label for entry in plan.train] == [0, 0, 1]
        assert [entry.label for entry in plan.test] == [0]

    def test_alternate_empty_class_warns(self, caplog):
        with caplog.at_level(logging.WARNING):
            plan = alternate_split(fake_manifest([2, 0, 2]))
        assert "c1" in caplog.text
        assert len(plan.train) == 2 and len(plan.test) == 2

    def test_alternate_sizes(self):
        plan = alternate_split(fake_manifest([5, 7, 4, 3]))
        odd_classes = 3
        assert len(plan.train) + len(plan.test) == 19
        assert 0 <= len(plan.train) - len(plan.test) <= odd_classes

    def test_kfold_sizes(self):
        plan = kfold_split(fake_manifest([40] * 10, folds=5), k=5, held_out=0)
        assert (len(plan.train), len(plan.test)) == (320, 80)
        assert plan.describe() == "kfold(K=5, held_out=0)"

    def test_kfold_partition(self):
        manifest = fake_manifest([10, 10, 10], folds=5)
        tests = [set(paths(kfold_split(manifest, 5, fold).test)) for fold in range(5)]
        assert set().union(*tests) == set(paths(manifest.entries))
        assert sum(len(t) for t in tests) == len(manifest.entries)
        for fold in range(5):
            plan = kfold_split(manifest, 5, fold)
            assert not set(paths(plan.train)) & set(paths(plan.test))

    @pytest.mark.parametrize("k, held_out", [(1, 0), (5, 5), (5, -1)])
    def test_kfold_bad_arguments(self, k, held_out):
        with pytest.raises(ValueError):
            kfold_split(fake_manifest([5], folds=5), k, held_out)

    def test_kfold_needs_folds(self):
        with pytest.raises(ValueError):
            kfold_split(fake_manifest([5, 5]))

    def test_kfold_fold_beyond_k(self):
        with pytest.raises(ValueError):
            kfold_split(fake_manifest([6], folds=6), k=5)

    def test_validation_split(self):
        entries = fake_manifest([10, 6]).entries
        train, validation = validation_split(entries, 0.2, seed=3)
        assert [entry.label for entry in validation].count(0) == 2
        assert [entry.label for entry in validation].count(1) == 1
        assert len(train) + len(validation) == 16
        assert not set(paths(train)) & set(paths(validation))
        assert validation_split(entries, 0.2, seed=3) == (train, validation)
        assert validation_split(entries, 0.0) == (entries, [])


class TestSynthCorpus:

    def test_sizes_and_format(self, tmp_path):
        manifest, manifest_path = synth_corpus(tmp_path, num_classes=2, clips_per_class=10, seed=1)
        assert manifest_path == tmp_path / "manifest.csv"
        assert len(manifest.entries) == 20
        for entry in manifest.entries:
            clip = decode_wav(open(entry.path, "rb").read())
            assert clip.sample_rate == 16000
            assert clip.samples.shape == (16000,)
            assert np.max(np.abs(clip.samples)) <= 0.9 + 1e-4
        assert load_manifest(manifest_path).entries == manifest.entries

    def test_same_seed_same_bytes(self, tmp_path):
        first, _ = synth_corpus(tmp_path / "a", num_classes=3, clips_per_class=2, clip_seconds=0.2, seed=5)
        second, _ = synth_corpus(tmp_path / "b", num_classes=3, clips_per_class=2, clip_seconds=0.2, seed=5)
        for a, b in zip(first.entries, second.entries):
            assert open(a.path, "rb").read() == open(b.path, "rb").read()
        assert (tmp_path / "a" / "manifest.csv").read_bytes() == (tmp_path / "b" / "manifest.csv").read_bytes()

    def test_needs_two_classes(self, tmp_path):
        with pytest.raises(ValueError):
            synth_corpus(tmp_path, num_classes=1)

    @pytest.mark.parametrize("n", [2400, 1600, 3200, 4000])
    def test_tone_class_peak(self, small_corpus, n):
        manifest, _ = small_corpus
        entry = manifest.by_class()[0][0]
        samples = decode_wav(open(entry.path, "rb").read()).samples[:n]
        magnitude = np.abs(dft_real(samples)[:n // 2])
        assert int(np.argmax(magnitude)) == round(440 * n / 16000)

    def test_band_energy_classifier(self, tmp_path):
        recipes = default_recipes(4)
        manifest, _ = synth_corpus(tmp_path, num_classes=4, clips_per_class=20, clip_seconds=0.5, seed=2)
        correct = 0
        for entry in manifest.entries:
            samples = decode_wav(open(entry.path, "rb").read()).samples
            power = np.abs(dft_real(samples)[:samples.shape[0] // 2]) ** 2
            freqs = np.arange(power.shape[0]) * 16000 / samples.shape[0]
            energy = [power[(freqs >= low) & (freqs <= high)].sum()
                      for low, high in (recipe.band() for recipe in recipes)]
            correct += int(np.argmax(energy) == entry.label)
        assert correct / len(manifest.entries) >= 0.95

    @pytest.mark.parametrize("num_classes", [4, 16, 30, 64])
    def test_default_recipes_stay_below_nyquist(self, num_classes):
        recipes = default_recipes(num_classes)
        assert len(recipes) == num_classes
        assert len({recipe.name for recipe in recipes}) == num_classes
        for recipe in recipes:
            low, high = recipe.band()
            assert 0.0 < low < high <= 0.9 * 8000 + 1e-6

    def test_default_recipes_follow_sample_rate(self):
        for recipe in default_recipes(12, sample_rate=8000):
            recipe.check(8000)
        assert default_recipes(4, sample_rate=8000)[3].band()[1] == pytest.approx(0.9 * 4000)

    def test_many_classes(self, tmp_path):
        manifest, _ = synth_corpus(tmp_path, num_classes=30, clips_per_class=1, clip_seconds=0.2, seed=4)
        assert manifest.num_classes == 30
        assert len(manifest.entries) == 30

    def test_band_above_nyquist_rejected(self, tmp_path):
        recipes = [SynthRecipe("tone", 440.0), SynthRecipe("noise", 7900.0, bandwidth=600.0)]
        with pytest.raises(ValueError):
            synth_corpus(tmp_path, num_classes=2, clips_per_class=1, recipes=recipes)
        with pytest.raises(ValueError):
            SynthRecipe("tone", 30.0).check(16000)
        with pytest.raises(ValueError):
            SynthRecipe("click", 100.0)

    @pytest.mark.parametrize("num_classes", [4, 12, 40])
    def test_texture_bands_are_disjoint(self, num_classes):
        recipes = texture_recipes(num_classes)
        assert recipes[0] == SynthRecipe("tone", 440.0)
        assert all(recipe.kind == "noise" for recipe in recipes[1:])
        bands = [recipe.band() for recipe in recipes]
        for (_, high), (low, _) in zip(bands, bands[1:]):
            assert high < low
        for recipe in recipes:
            recipe.check(16000)

    def test_texture_band_energy_classifier(self, tmp_path):
        recipes = texture_recipes(4)
        manifest, _ = synth_corpus(tmp_path, num_classes=4, clips_per_class=10, clip_seconds=0.5, seed=6,
                                   recipes=recipes)
        correct = 0
        for entry in manifest.entries:
            samples = decode_wav(open(entry.path, "rb").read()).samples
            power = np.abs(dft_real(samples)[:samples.shape[0] // 2]) ** 2
            freqs = np.arange(power.shape[0]) * 16000 / samples.shape[0]
            energy = [power[(freqs >= low) & (freqs <= high)].mean()
                      for low, high in (recipe.band() for recipe in recipes)]
            correct += int(np.argmax(energy) == entry.label)
        assert correct / len(manifest.entries) >= 0.95

    def test_statistics(self, tmp_path):
        manifest, _ = synth_corpus(tmp_path, num_classes=2, clips_per_class=10, seed=0)
        stats = corpus_statistics(manifest, alternate_split(manifest))
        assert stats["classes"] == 2
        assert stats["files"] == 20
        assert stats["total_minutes"] == pytest.approx(20 / 60)
        assert stats["average_seconds"] == pytest.approx(1.0)
        assert stats["train_files"] == stats["test_files"] == 10
        assert stats["train_frames"] == 10 * 171
