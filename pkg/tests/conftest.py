import numpy as np
import pytest

from dataset import synth_corpus
from frontend import FrameSet, FeatureMode, FramingConfig
from neural_core import LayerSpec, NetworkSpec


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """Two classes x six 0.3 s clips at 16 kHz, three folds."""
    out = tmp_path_factory.mktemp("corpus")
    manifest, manifest_path = synth_corpus(out, num_classes=2, clips_per_class=6, clip_seconds=0.3,
                                           seed=3, folds=3)
    return manifest, manifest_path


@pytest.fixture
def short_framing():
    # 60 ms windows are the shortest the cnn preset accepts
    return FramingConfig(window_ms=60, step_ms=30, sample_rate=16000)


@pytest.fixture
def tiny_spec():
    return NetworkSpec((LayerSpec.input(12), LayerSpec.conv(2, 3), LayerSpec.pool(2, 2),
                        LayerSpec.dense(4), LayerSpec.dropout(0.5), LayerSpec.dense(3),
                        LayerSpec.softmax()), "tiny")


def _make_frame_set(features, clip_labels, frames_per_clip, mode=FeatureMode.TIME):
    """FrameSet with `frames_per_clip` consecutive frames for every clip label."""
    clip_labels = np.asarray(clip_labels, dtype=np.int64)
    clip_index = np.repeat(np.arange(clip_labels.shape[0]), frames_per_clip)
    return FrameSet(
        features=np.asarray(features, dtype=np.float32),
        labels=clip_labels[clip_index],
        clip_index=clip_index,
        clip_ids=[f"clip{i}" for i in range(clip_labels.shape[0])],
        clip_labels=clip_labels,
        mode=mode,
    )


@pytest.fixture
def blobs():
    """Two well separated 16-d Gaussian blobs, 20 clips of 4 frames each."""
    rng = np.random.default_rng(11)
    clip_labels = np.arange(20) % 2
    centres = np.stack([np.full(16, -1.0), np.full(16, 1.0)])
    labels = np.repeat(clip_labels, 4)
    features = centres[labels] + 0.3 * rng.standard_normal((labels.shape[0], 16))
    return _make_frame_set(features, clip_labels, 4)


@pytest.fixture
def make_frame_set():
    return _make_frame_set
