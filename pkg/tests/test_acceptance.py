"""
Seed sweeps with the DNN preset: frequency-domain input against time-domain input,
and the magnitude/phase ablations.

The corpus is the noise-texture preset (a 440 Hz tone and three adjacent noise
bands, 40 one-second clips per class at 10 dB SNR). On the tone/AM/chirp preset
time-domain input already scores 1.0, which leaves nothing to compare. Frames do
not overlap, so each clip contributes six frames to training and six votes to its
decision. Run with `pytest -m slow`.
"""
import numpy as np
import pytest

from dataset import alternate_split, synth_corpus, texture_recipes
from evaluator import evaluate
from frontend import FramingConfig, build_frame_set
from neural_core import Network, dnn_spec
from trainer import TrainConfig, fit, init_parameters, rng_streams

pytestmark = pytest.mark.slow

SEEDS = range(5)
MODES = ("time", "freq", "freq-mag", "freq-phase")


@pytest.fixture(scope="module")
def sweep(tmp_path_factory):
    """Median macro f-score over SEEDS for every feature mode."""
    manifest, _ = synth_corpus(tmp_path_factory.mktemp("corpus"), num_classes=4, clips_per_class=40,
                               clip_seconds=1.0, seed=0, snr_db=10.0, recipes=texture_recipes(4))
    plan = alternate_split(manifest)
    framing = FramingConfig(150, 150)
    medians = {}
    for mode in MODES:
        train_set = build_frame_set(plan.train, mode, framing)
        test_set = build_frame_set(plan.test, mode, framing)
        scores = []
        for seed in SEEDS:
            spec = dnn_spec(manifest.num_classes, train_set.feature_length)
            network = Network(spec, init_parameters(spec, rng_streams(seed)["init"]))
            cfg = TrainConfig(epochs=40, lr_halving_period=20, batch_size=32, seed=seed)
            fit(network, train_set, cfg)
            scores.append(evaluate(network, test_set).macro_fscore)
        medians[mode] = float(np.median(scores))
    return medians


def test_frequency_beats_time(sweep):
    assert sweep["freq"] - sweep["time"] >= 0.05


def test_magnitude_alone_matches_full_spectrum(sweep):
    assert abs(sweep["freq-mag"] - sweep["freq"]) <= 0.03


def test_phase_alone_trains(sweep):
    assert 0.0 <= sweep["freq-phase"] <= 1.0


def test_frequency_inputs_train_on_every_seed(tmp_path_factory):
    manifest, _ = synth_corpus(tmp_path_factory.mktemp("stability"), num_classes=4, clips_per_class=20,
                               clip_seconds=1.0, seed=1, snr_db=10.0)
    plan = alternate_split(manifest)
    framing = FramingConfig(150, 50)
    train_set = build_frame_set(plan.train, "freq", framing)
    for seed in range(3):
        spec = dnn_spec(manifest.num_classes, train_set.feature_length)
        network = Network(spec, init_parameters(spec, rng_streams(seed)["init"]))
        result = fit(network, train_set, TrainConfig(epochs=10, lr_halving_period=5, batch_size=64, seed=seed))
        losses = result.history["train_loss"].to_numpy()
        assert np.all(np.isfinite(losses))
        assert losses[-1] < losses[0]
