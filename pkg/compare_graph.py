"""
compare_graph.py

This module draws learning curves so that training runs can be compared side by
side: one line per group (architecture and feature mode, or one registry run),
epoch on the x axis and a metric of the per-epoch history on the y axis. Groups
with several seeds are drawn as their mean per epoch.

Key Functions:
- comparison_graph(curves, path, metric, label_columns): Plot the curves and save the figure.
- load_data_from_database(repository, run_ids): Collect the epoch metrics of registry runs.

Dependencies:
- matplotlib.pyplot (Agg backend, figures are only written to files)
- pandas

Usage:
`cli.cmd_compare` plots `curves.png` next to `curves.csv`; `runs --plot` plots
runs taken from the registry.
"""
import logging

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

from trainer import METRIC_COLUMNS

METRIC_LABELS = {
    "train_loss": "Training loss",
    "train_frame_fscore": "Training frame f-score [%]",
    "val_frame_fscore": "Validation frame f-score [%]",
    "lr": "Learning rate",
}
PERCENT_METRICS = ("train_frame_fscore", "val_frame_fscore")


def comparison_graph(curves, path, metric="train_frame_fscore", label_columns=("arch", "feature_mode")):
    """
    Plots one learning curve per group and writes the figure to `path`.

    Args:
        curves (pd.DataFrame): Per-epoch history rows with an 'epoch' column, the
            metric column and the label columns.
        path (str | Path): Output image; the format follows the suffix (png, pdf, svg).
        metric (str): History column on the y axis.
        label_columns (tuple[str]): Columns whose values name a curve.

    Returns:
        str: The path written.
    """
    if metric not in curves.columns:
        raise ValueError(f"curves have no column '{metric}'")
    fig = plt.figure(figsize=(10, 7))
    graph = fig.add_subplot(1, 1, 1)
    graph.grid()
    graph.set_title("Course of the training")
    graph.set_xlabel("Epoch")
    graph.set_ylabel(METRIC_LABELS.get(metric, metric))

    scale = 100.0 if metric in PERCENT_METRICS else 1.0
    for key, frame in curves.groupby(list(label_columns), sort=False):
        key = key if isinstance(key, tuple) else (key,)
        mean = frame.groupby("epoch")[metric].mean()
        graph.plot(mean.index, scale * mean.values, label="/".join(str(part) for part in key))
    fig.legend()
    fig.savefig(path)
    plt.close(fig)
    logging.info("Learning curves (%s) written to %s", metric, path)
    return str(path)


def load_data_from_database(repository, run_ids):
    """
    Loads the epoch metrics of registry runs.

    Args:
        repository (Repository): Run registry.
        run_ids (list[int]): Runs to load; unknown ids are skipped with a warning.

    Returns:
        pd.DataFrame: Columns 'label' ("run <id> <arch>/<feature mode>") and the history columns.
    """
    rows = []
    for run_id in run_ids:
        run = repository.get_run(run_id)
        if run is None:
            logging.warning("Run %d is not in the registry", run_id)
            continue
        label = f"run {run.run_id} {run.arch}/{run.feature_mode}"
        for metric in repository.get_epoch_metrics(run_id):
            rows.append({"label": label, **{column: getattr(metric, column) for column in METRIC_COLUMNS}})
    frame = pd.DataFrame(rows, columns=["label"] + METRIC_COLUMNS)
    for column in METRIC_COLUMNS[1:]:
        frame[column] = frame[column].astype(float)
    return frame
