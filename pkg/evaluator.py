"""
evaluator.py

This module turns frame predictions into file decisions and scores them. Files are
classified by probability voting (sum of frame probability vectors, then argmax)
or majority voting (most frequent frame argmax); results are reported as
per-class precision, recall and f-score with a macro average, plus the confusion
matrix.

Key Classes:
- VotingMethod: probability or majority.
- FramePrediction: Probability vector of one frame.
- EvaluationReport: Per-class metrics, macro f-score, confusion matrix, voting method.

Key Functions:
- probability_vote(frames), majority_vote(frames), vote(frames, method)
- precision_recall(confusion, c), f_score(precision, recall)
- confusion_from_labels(true, pred, m), frame_fscore(true, pred, m)
- evaluate(model, frame_set, voting, class_names): Full file-level evaluation.
- read_report_csv(path): Parse a report CSV back into a DataFrame.

Dependencies:
- numpy
- pandas
- sklearn.metrics (confusion_matrix)
"""
import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
import pandas as pd
from sklearn.metrics import confusion_matrix

REPORT_COLUMNS = ["class", "precision", "recall", "fscore", "support"]
AVERAGE_ROW = "Average"


class VotingMethod(str, Enum):
    PROBABILITY = "probability"
    MAJORITY = "majority"


@dataclass
class FramePrediction:
    clip_id: str
    frame_index: int
    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if abs(self.probs.sum() - 1.0) > 1e-6:
            raise ValueError(f"frame {self.frame_index} of {self.clip_id}: probabilities sum to "
                             f"{self.probs.sum()}")


def _probability_matrix(frames):
    if isinstance(frames, np.ndarray):
        matrix = frames
    else:
        frames = list(frames)
        if frames and isinstance(frames[0], FramePrediction):
            matrix = np.stack([frame.probs for frame in frames])
        else:
            matrix = np.asarray(frames)
    if matrix.ndim != 2 or matrix.shape[0] == 0:
        raise ValueError("voting needs at least one frame")
    return matrix


def probability_vote(frames):
    """argmax_j sum_i x_ij; the first (lowest) class index wins ties."""
    matrix = _probability_matrix(frames)
    return int(np.argmax(matrix.sum(axis=0, dtype=np.float64)))


def majority_vote(frames):
    """Most frequent per-frame argmax; the lowest class index wins ties."""
    matrix = _probability_matrix(frames)
    counts = np.bincount(matrix.argmax(axis=1), minlength=matrix.shape[1])
    return int(np.argmax(counts))


def vote(frames, method=VotingMethod.PROBABILITY):
    if VotingMethod(method) is VotingMethod.MAJORITY:
        return majority_vote(frames)
    return probability_vote(frames)


def _ratio(numerator, denominator):
    return numerator / denominator if denominator else 0.0


def precision_recall(confusion, c):
    """
    One-vs-rest precision and recall of class `c`.

    Args:
        confusion (np.ndarray): confusion[i, j] = files of true class i predicted as j.
        c (int): Class index.

    Returns:
        tuple[float, float]: (precision, recall); 0/0 counts as 0.
    """
    confusion = np.asarray(confusion)
    true_positive = confusion[c, c]
    return (float(_ratio(true_positive, confusion[:, c].sum())),
            float(_ratio(true_positive, confusion[c, :].sum())))


def f_score(precision, recall):
    """2 * p * r / (p + r), 0 when both are 0."""
    return float(_ratio(2.0 * precision * recall, precision + recall))


def confusion_from_labels(true, pred, num_classes):
    true = np.asarray(true, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if true.size == 0:
        return np.zeros((num_classes, num_classes), dtype=np.int64)
    return confusion_matrix(true, pred, labels=np.arange(num_classes)).astype(np.int64)


def per_class_scores(confusion):
    """Arrays (precision, recall, fscore), one value per class."""
    confusion = np.asarray(confusion)
    pairs = [precision_recall(confusion, c) for c in range(confusion.shape[0])]
    precision = np.array([p for p, _ in pairs])
    recall = np.array([r for _, r in pairs])
    fscore = np.array([f_score(p, r) for p, r in pairs])
    return precision, recall, fscore


def frame_fscore(true, pred, num_classes):
    """Macro f-score over individual frames, without voting."""
    _, _, fscore = per_class_scores(confusion_from_labels(true, pred, num_classes))
    return float(fscore.mean())


@dataclass
class EvaluationReport:
    """
    File-level evaluation result.

    Attributes:
        class_names (list[str]): Display name of every class.
        precision, recall, fscore (np.ndarray): Per-class metrics in [0, 1].
        macro_fscore (float): Unweighted mean of `fscore`.
        confusion (np.ndarray): (m, m) file counts.
        voting (VotingMethod): How frames were combined.
        num_files (int): Files evaluated.
    """
    class_names: list
    precision: np.ndarray
    recall: np.ndarray
    fscore: np.ndarray
    macro_fscore: float
    confusion: np.ndarray
    voting: VotingMethod
    num_files: int

    @classmethod
    def from_confusion(cls, confusion, class_names=None, voting=VotingMethod.PROBABILITY):
        confusion = np.asarray(confusion, dtype=np.int64)
        if class_names is None:
            class_names = [str(c) for c in range(confusion.shape[0])]
        precision, recall, fscore = per_class_scores(confusion)
        return cls(list(class_names), precision, recall, fscore, float(fscore.mean()),
                   confusion, VotingMethod(voting), int(confusion.sum()))

    @property
    def support(self):
        return self.confusion.sum(axis=1)

    def to_dataframe(self):
        """Per-class rows plus the trailing 'Average' row (macro means)."""
        table = pd.DataFrame({
            "class": self.class_names,
            "precision": self.precision,
            "recall": self.recall,
            "fscore": self.fscore,
            "support": self.support,
        }, columns=REPORT_COLUMNS)
        average = pd.DataFrame([{
            "class": AVERAGE_ROW,
            "precision": float(self.precision.mean()),
            "recall": float(self.recall.mean()),
            "fscore": self.macro_fscore,
            "support": self.num_files,
        }], columns=REPORT_COLUMNS)
        return pd.concat([table, average], ignore_index=True)

    def to_text(self):
        """Table of f-scores in percent, as printed on the console."""
        width = max([len(AVERAGE_ROW)] + [len(name) for name in self.class_names]) + 2
        lines = [f"Voting: {self.voting.value}   Files: {self.num_files}",
                 f"{'Class':<{width}}{'Precision':>11}{'Recall':>9}{'F-Score':>10}{'Files':>7}"]
        for row in self.to_dataframe().itertuples(index=False):
            if row[0] == AVERAGE_ROW:
                lines.append("-" * (width + 37))
            lines.append(f"{row[0]:<{width}}{100 * row.precision:>11.1f}{100 * row.recall:>9.1f}"
                         f"{100 * row.fscore:>10.1f}{row.support:>7d}")
        return "\n".join(lines)

    def write_csv(self, path):
        frame = self.to_dataframe()
        frame["voting"] = self.voting.value
        frame.to_csv(path, index=False)

    def write_confusion_csv(self, path):
        frame = pd.DataFrame(self.confusion, index=self.class_names, columns=self.class_names)
        frame.index.name = "true/predicted"
        frame.to_csv(path)


def read_report_csv(path):
    """Report CSV as a DataFrame with the columns written by `EvaluationReport.write_csv`."""
    frame = pd.read_csv(path, float_precision="round_trip", keep_default_na=False,
                        dtype={"class": str})
    return frame


def predict_frames(model, frame_set, batch_size=1024):
    """Inference-mode probabilities of every frame, (n_frames, m)."""
    return model.predict_proba(frame_set.features, batch_size=batch_size)


def evaluate(model, frame_set, voting=VotingMethod.PROBABILITY, class_names=None, batch_size=1024):
    """
    Classify every file of `frame_set` by voting over its frames.

    Args:
        model: Object with predict_proba(features, batch_size) (a Network).
        frame_set (FrameSet): Test frames with their clip structure.
        voting (VotingMethod | str): probability or majority.
        class_names (list[str]): Names for the report rows.
        batch_size (int): Frames per inference batch.

    Returns:
        EvaluationReport
    """
    voting = VotingMethod(voting)
    if frame_set.num_clips == 0:
        raise ValueError("test set is empty")
    probs = predict_frames(model, frame_set, batch_size)
    num_classes = probs.shape[1]
    order = np.argsort(frame_set.clip_index, kind="stable")
    bounds = np.cumsum(np.bincount(frame_set.clip_index, minlength=frame_set.num_clips))
    predicted = np.empty(frame_set.num_clips, dtype=np.int64)
    for clip, rows in enumerate(np.split(order, bounds[:-1])):
        predicted[clip] = vote(probs[rows], voting)
    confusion = confusion_from_labels(frame_set.clip_labels, predicted, num_classes)
    report = EvaluationReport.from_confusion(confusion, class_names, voting)
    logging.info("Evaluated %d files with %s voting: macro f-score %.4f",
                 report.num_files, voting.value, report.macro_fscore)
    return report
